//! End-to-end CLI pipeline in a temp directory, plus exit-code contract
//! checks (0 ok, 2 configuration problems).

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_stackrecall")
}

fn run(data_dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .arg("--data-dir")
        .arg(data_dir)
        .args(args)
        .output()
        .expect("spawn stackrecall")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");

    // artifacts missing -> configuration error, exit code 2
    let out = run(&data, &["group", "--query", "milk"]);
    assert_eq!(out.status.code(), Some(2), "missing artifacts should exit 2");

    // unknown config key -> exit code 2
    let bad_cfg = dir.path().join("bad.conf");
    std::fs::write(&bad_cfg, "no.such.key = 1\n").unwrap();
    let out = Command::new(bin())
        .args(["--config", bad_cfg.to_str().unwrap(), "gen-corpus"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "bad config should exit 2");

    // bad usage -> clap exits 2
    let out = Command::new(bin()).arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // a config file that speeds the pipeline up for the test
    let cfg = dir.path().join("fast.conf");
    std::fs::write(
        &cfg,
        "embedding.epochs = 60\nmapper.level_epochs = 120\nmapper.embed_epochs = 8\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();

    let gen = run(
        &data,
        &[
            "--config", cfg,
            "--seed", "42",
            "gen-corpus",
            "--items", "120",
            "--queries", "60",
            "--product-types", "10",
            "--brands", "6",
            "--mixture", "0.0",
        ],
    );
    assert_ok(&gen, "gen-corpus");
    assert!(data.join("catalog.jsonl").exists());
    assert!(data.join("logs.tsv").exists());
    assert!(data.join("hierarchy.json").exists());

    assert_ok(&run(&data, &["--config", cfg, "build-index"]), "build-index");
    assert_ok(&run(&data, &["--config", cfg, "build-graph"]), "build-graph");
    assert_ok(
        &run(&data, &["--config", cfg, "--seed", "42", "train-embeddings"]),
        "train-embeddings",
    );
    assert!(data.join("gae.json").exists());
    assert_ok(
        &run(&data, &["--config", cfg, "--seed", "42", "train-mapper"]),
        "train-mapper",
    );

    // eligibility TSV has the expected header and one row per query
    let out = run(&data, &["--config", cfg, "eligibility"]);
    assert_ok(&out, "eligibility");
    let tsv = String::from_utf8_lossy(&out.stdout);
    let mut lines = tsv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "query\teligible\tchosen_intent\tengagement_loss\titem_count"
    );
    assert_eq!(lines.count(), 60);

    // search returns JSON with the filter respected
    let out = run(
        &data,
        &[
            "--config", cfg,
            "search",
            "--query", "milk",
            "--filter", "product_type=Milk",
            "--limit", "5",
        ],
    );
    assert_ok(&out, "search");
    let hits: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(hits.as_array().is_some_and(|a| !a.is_empty() && a.len() <= 5));

    // map-query emits hierarchy paths
    let out = run(&data, &["--config", cfg, "map-query", "--query", "milk"]);
    assert_ok(&out, "map-query");
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["query"], "milk");
    assert!(v["paths"].is_array());

    // group emits the wire JSON
    let out = run(&data, &["--config", cfg, "group", "--query", "milk"]);
    assert_ok(&out, "group");
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["query"], "milk");
    assert_eq!(v["eligible"], true);
    assert_eq!(v["stacks"][0]["label"], "perfect");

    // evaluate writes both report files
    let out = run(&data, &["--config", cfg, "evaluate"]);
    assert_ok(&out, "evaluate");
    assert!(data.join("report.json").exists());
    assert!(data.join("report.txt").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.join("report.json")).unwrap()).unwrap();
    assert!(report["mean_ndcg_grouped"].is_number());
    assert!(report["latency"]["delta_pct"].is_array());
}

#[test]
fn gen_corpus_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for data in [&a, &b] {
        let out = run(
            data,
            &["--seed", "7", "gen-corpus", "--items", "50", "--queries", "20"],
        );
        assert_ok(&out, "gen-corpus");
    }
    for file in ["catalog.jsonl", "logs.tsv", "hierarchy.json"] {
        let fa = std::fs::read(a.join(file)).unwrap();
        let fb = std::fs::read(b.join(file)).unwrap();
        assert_eq!(fa, fb, "{file} differs across identical runs");
    }
}
