#!/usr/bin/env python3
"""Smoke test for the stackrecall_py extension module.

Builds nothing itself: run `cargo build -p stackrecall-py` first (or pass
--release and build that profile). The script locates the cdylib in the
cargo target directory, imports it, and drives the pipeline end to end.
"""

import argparse
import importlib.util
import json
import pathlib
import shutil
import sys
import tempfile

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module(profile: str):
    lib = REPO_ROOT / "target" / profile / "libstackrecall_py.so"
    if not lib.exists():
        sys.exit(
            f"{lib} not found - run `cargo build -p stackrecall-py"
            + (" --release`" if profile == "release" else "`")
        )
    # Python wants the module file named after the module.
    tmp = pathlib.Path(tempfile.mkdtemp(prefix="stackrecall_py_"))
    target = tmp / "stackrecall_py.so"
    shutil.copyfile(lib, target)
    spec = importlib.util.spec_from_file_location("stackrecall_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--release", action="store_true", help="use target/release")
    args = parser.parse_args()
    sr = load_module("release" if args.release else "debug")

    # text normalization
    assert sr.tokenize("Great Value Milk") == ["great", "value", "milk"]
    assert sr.tokenize("the oranges") == ["orang"]
    assert sr.stem("flavored") == "flavor"

    # metrics
    assert abs(sr.ndcg([5, 4, 3], 3) - 1.0) < 1e-12
    assert abs(sr.ndcg([2, 3], 2) - 0.8340) < 1e-4
    pcts = dict(sr.latency_percentiles([float(x) for x in range(1, 11)]))
    assert pcts["P@50"] == 5.0 and pcts["P@99.9"] == 10.0

    # pipeline
    pipe = sr.Pipeline.generate(seed=42, items=200, queries=80, product_types=12, brands=6)
    print(pipe)
    assert pipe.item_count == 200 and pipe.query_count == 80
    pipe.train(encoder_epochs=120, mapper_epochs=250)

    eligible, intent = pipe.eligibility("great value milk")
    assert eligible, "fixture query should be eligible"
    assert intent == {"brand": "Great Value", "product_type": "Milk"}, intent

    hits = pipe.search("milk", limit=5, product_type="Milk")
    assert 0 < len(hits) <= 5
    assert all(isinstance(h["score"], float) for h in hits)

    grouped = pipe.group("great value milk")
    assert grouped["eligible"] is True
    assert grouped["stacks"][0]["label"] == "perfect"
    assert grouped["stacks"][0]["intent"] == {
        "brand": "Great Value",
        "product_type": "Milk",
    }
    ids = [item["item_id"] for stack in grouped["stacks"] for item in stack["items"]]
    assert len(ids) == len(set(ids)), "an item appeared in two stacks"

    paths = pipe.traverse("apple")
    assert ["Root", "Fruit", "Apple"] in paths, paths

    report = pipe.evaluate(ndcg_k=10)
    assert report["mean_ndcg_grouped"] >= report["mean_ndcg_flat"], (
        report["mean_ndcg_grouped"],
        report["mean_ndcg_flat"],
    )

    print("grouped result for 'great value milk':")
    print(json.dumps(grouped["stacks"], indent=2)[:400], "...")
    print(
        f"NDCG@10 grouped {report['mean_ndcg_grouped']:.4f} "
        f"vs flat {report['mean_ndcg_flat']:.4f}"
    )
    print("smoke test OK")


if __name__ == "__main__":
    main()
