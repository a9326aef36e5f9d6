//! Command-line front end. Artifacts live under --data-dir: the corpus
//! files, then index/, graph/, gae.json and mapper/ as the pipeline
//! stages run. Exit codes: 0 ok, 2 configuration problems, 1 runtime
//! failures.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::Params;
use crate::corpus::generate::{generate_corpus, CorpusSpec};
use crate::corpus::{filter_logs, io as corpus_io, AttrKind, Catalog, EngagementRecord,
    HierarchyNode, DEFAULT_MIN_ATC, DEFAULT_MIN_ORDERS};
use crate::eligibility::{
    compute_thresholds, engagement_loss, extract_intents, is_eligible, item_count,
    ThresholdConfig, Thresholds,
};
use crate::embedding::{self, infer_links, init_features, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{render_text, run_experiment, ExperimentConfig};
use crate::graph::{self, build_graph, EngagementWeights, ProductGraph};
use crate::mapper::{self, MapperConfig, MapperModel};
use crate::retrieval::{self, build_index, search, InvertedIndex, RankWeights};
use crate::stacker::{group, to_wire_json, GroupContext, StackerConfig};

#[derive(Parser)]
#[command(
    name = "stackrecall",
    version,
    about = "Grouped e-commerce search over a synthetic grocery corpus"
)]
pub struct Cli {
    /// key = value config file; CLI flags win over config values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for corpus generation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory holding the corpus and model artifacts.
    #[arg(long, global = true, default_value = "data")]
    data_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic catalog, engagement logs, and hierarchy.
    GenCorpus {
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long)]
        brands: Option<usize>,
        #[arg(long)]
        product_types: Option<usize>,
        /// Fraction of order mass off the home intent.
        #[arg(long)]
        mixture: Option<f64>,
    },
    /// Build the inverted index from the catalog.
    BuildIndex,
    /// Build the product graph from the catalog and filtered logs.
    BuildGraph,
    /// Train the graph auto-encoder and infer lateral relations.
    TrainEmbeddings {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        latent_dim: Option<usize>,
        #[arg(long)]
        variational: bool,
    },
    /// Train the hierarchy mapper (term embeddings + level classifiers).
    TrainMapper {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        dims: Option<usize>,
    },
    /// Score every query's eligibility; TSV to stdout or --output.
    Eligibility {
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Flat ranked retrieval.
    Search {
        #[arg(long)]
        query: String,
        /// kind=value attribute filter, repeatable (brand=..., product_type=...).
        #[arg(long)]
        filter: Vec<String>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Map a query onto the product-type hierarchy.
    MapQuery {
        #[arg(long)]
        query: String,
    },
    /// Grouped (stacked) results for one query, as JSON.
    Group {
        #[arg(long)]
        query: String,
    },
    /// Offline grouped-vs-flat comparison; writes report.json/report.txt.
    Evaluate {
        /// Score only the first stack of grouped results.
        #[arg(long)]
        primary_only: bool,
        #[arg(long)]
        ndcg_k: Option<usize>,
    },
}

struct Env {
    params: Params,
    seed: u64,
    data_dir: PathBuf,
}

impl Env {
    fn require(&self, path: PathBuf, hint: &str) -> Result<PathBuf> {
        if path.exists() {
            Ok(path)
        } else {
            Err(Error::Config(format!(
                "missing artifact {} (run `{hint}` first)",
                path.display()
            )))
        }
    }

    fn catalog(&self) -> Result<Catalog> {
        let p = self.require(self.data_dir.join("catalog.jsonl"), "gen-corpus")?;
        corpus_io::read_catalog(&p)
    }

    fn logs_filtered(&self) -> Result<Vec<EngagementRecord>> {
        let p = self.require(self.data_dir.join("logs.tsv"), "gen-corpus")?;
        let raw = corpus_io::read_logs(&p)?;
        let min_atc = self.params.u64("logs.min_atc", DEFAULT_MIN_ATC)?;
        let min_orders = self.params.u64("logs.min_orders", DEFAULT_MIN_ORDERS)?;
        Ok(filter_logs(&raw, min_atc, min_orders))
    }

    fn hierarchy(&self) -> Result<HierarchyNode> {
        let p = self.require(self.data_dir.join("hierarchy.json"), "gen-corpus")?;
        corpus_io::read_hierarchy(&p)
    }

    fn graph(&self) -> Result<ProductGraph> {
        let p = self.require(self.data_dir.join("graph"), "build-graph")?;
        graph::io::load_graph(&p)
    }

    fn index(&self) -> Result<InvertedIndex> {
        let p = self.require(self.data_dir.join("index"), "build-index")?;
        retrieval::load_index(&p)
    }

    fn mapper(&self) -> Result<MapperModel> {
        let p = self.require(self.data_dir.join("mapper"), "train-mapper")?;
        mapper::load_mapper(&p)
    }

    fn thresholds(&self, catalog: &Catalog, logs: &[EngagementRecord]) -> Result<Thresholds> {
        let config = ThresholdConfig {
            loss_percentile: self.params.f64("eligibility.loss_percentile", 20.0)?,
            count_percentile: self.params.f64("eligibility.count_percentile", 10.0)?,
        };
        compute_thresholds(catalog, logs, &config)
    }

    fn rank_weights(&self) -> Result<RankWeights> {
        let d = RankWeights::default();
        Ok(RankWeights {
            text: self.params.f64("search.w_text", d.text)?,
            click: self.params.f64("search.w_click", d.click)?,
            popularity: self.params.f64("search.w_popularity", d.popularity)?,
            brand_match: self.params.f64("search.w_brand", d.brand_match)?,
            sales: self.params.f64("search.w_sales", d.sales)?,
        })
    }

    fn stacker_config(&self) -> Result<StackerConfig> {
        let d = StackerConfig::default();
        Ok(StackerConfig {
            similar_min: self.params.usize("stacker.similar_min", d.similar_min)?,
            display_limit: self.params.usize("stacker.display_limit", d.display_limit)?,
            recall_limit: self.params.usize("stacker.recall_limit", d.recall_limit)?,
            lateral_k: self.params.usize("stacker.lateral_k", d.lateral_k)?,
            weights: self.rank_weights()?,
        })
    }

    fn engagement_weights(&self) -> Result<EngagementWeights> {
        let d = EngagementWeights::default();
        Ok(EngagementWeights {
            click: self.params.f64("graph.w_click", d.click)?,
            atc: self.params.f64("graph.w_atc", d.atc)?,
            order: self.params.f64("graph.w_order", d.order)?,
        })
    }
}

pub fn run() -> Result<()> {
    let cli = Cli::parse();
    let params = match &cli.config {
        Some(path) => Params::from_file(path)?,
        None => Params::empty(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => params.u64("seed", 42)?,
    };
    let env = Env {
        params,
        seed,
        data_dir: cli.data_dir.clone(),
    };

    match cli.command {
        Command::GenCorpus {
            items,
            queries,
            brands,
            product_types,
            mixture,
        } => cmd_gen_corpus(&env, items, queries, brands, product_types, mixture),
        Command::BuildIndex => cmd_build_index(&env),
        Command::BuildGraph => cmd_build_graph(&env),
        Command::TrainEmbeddings {
            epochs,
            lr,
            latent_dim,
            variational,
        } => cmd_train_embeddings(&env, epochs, lr, latent_dim, variational),
        Command::TrainMapper { epochs, lr, dims } => cmd_train_mapper(&env, epochs, lr, dims),
        Command::Eligibility { output } => cmd_eligibility(&env, output),
        Command::Search {
            query,
            filter,
            limit,
        } => cmd_search(&env, &query, &filter, limit),
        Command::MapQuery { query } => cmd_map_query(&env, &query),
        Command::Group { query } => cmd_group(&env, &query),
        Command::Evaluate {
            primary_only,
            ndcg_k,
        } => cmd_evaluate(&env, primary_only, ndcg_k),
    }
}

fn cmd_gen_corpus(
    env: &Env,
    items: Option<usize>,
    queries: Option<usize>,
    brands: Option<usize>,
    product_types: Option<usize>,
    mixture: Option<f64>,
) -> Result<()> {
    let d = CorpusSpec::default();
    let spec = CorpusSpec {
        items: match items {
            Some(v) => v,
            None => env.params.usize("corpus.items", d.items)?,
        },
        queries: match queries {
            Some(v) => v,
            None => env.params.usize("corpus.queries", d.queries)?,
        },
        brands: match brands {
            Some(v) => v,
            None => env.params.usize("corpus.brands", d.brands)?,
        },
        product_types: match product_types {
            Some(v) => v,
            None => env.params.usize("corpus.product_types", d.product_types)?,
        },
        intent_mixture: match mixture {
            Some(v) => v,
            None => env.params.f64("corpus.mixture", d.intent_mixture)?,
        },
        mixture_overrides: Vec::new(),
    };
    let corpus = generate_corpus(env.seed, &spec)?;
    std::fs::create_dir_all(&env.data_dir)?;
    corpus_io::write_catalog(&env.data_dir.join("catalog.jsonl"), &corpus.catalog)?;
    corpus_io::write_logs(&env.data_dir.join("logs.tsv"), &corpus.logs)?;
    corpus_io::write_hierarchy(&env.data_dir.join("hierarchy.json"), &corpus.hierarchy)?;
    eprintln!(
        "wrote {} items, {} log rows, hierarchy depth {} to {}",
        corpus.catalog.len(),
        corpus.logs.len(),
        corpus.hierarchy.depth(),
        env.data_dir.display()
    );
    Ok(())
}

fn cmd_build_index(env: &Env) -> Result<()> {
    let catalog = env.catalog()?;
    let index = build_index(&catalog)?;
    retrieval::save_index(&env.data_dir.join("index"), &index)?;
    eprintln!("indexed {} items", index.doc_count());
    Ok(())
}

fn cmd_build_graph(env: &Env) -> Result<()> {
    let catalog = env.catalog()?;
    let logs = env.logs_filtered()?;
    let hierarchy = env.hierarchy()?;
    let graph = build_graph(&catalog, &logs, hierarchy, env.engagement_weights()?);
    graph::io::save_graph(&env.data_dir.join("graph"), &graph)?;
    eprintln!(
        "graph: {} nodes, {} edges",
        graph.node_count(),
        graph.edge_count()
    );
    Ok(())
}

fn cmd_train_embeddings(
    env: &Env,
    epochs: Option<usize>,
    lr: Option<f64>,
    latent_dim: Option<usize>,
    variational: bool,
) -> Result<()> {
    let mut graph = env.graph()?;
    let d = TrainConfig::default();
    let config = TrainConfig {
        epochs: match epochs {
            Some(v) => v,
            None => env.params.usize("embedding.epochs", d.epochs)?,
        },
        learning_rate: match lr {
            Some(v) => v,
            None => env.params.f64("embedding.lr", d.learning_rate)?,
        },
        latent: match latent_dim {
            Some(v) => v,
            None => env.params.usize("embedding.latent", d.latent)?,
        },
        hidden: env.params.usize("embedding.hidden", d.hidden)?,
        hash_dims: env.params.usize("embedding.hash_dims", d.hash_dims)?,
        neg_samples_per_edge: env
            .params
            .usize("embedding.neg_samples", d.neg_samples_per_edge)?,
        variational: variational || env.params.bool("embedding.variational", false)?,
        kl_weight: env.params.f64("embedding.kl_weight", 1.0)?,
        raw_inner_adjacency: env.params.bool("embedding.raw_inner_adjacency", false)?,
        dense_loss: env.params.bool("embedding.dense_loss", false)?,
        seed: env.seed,
        ngram_range: d.ngram_range,
    };
    let features = init_features(&graph, config.hash_dims, config.ngram_range);
    let state = embedding::train(&graph, &features, &config)?;
    embedding::save_model(&env.data_dir.join("gae.json"), &state)?;

    let score_floor = env.params.f64("embedding.score_floor", 0.5)?;
    let k = env.params.usize("embedding.lateral_k", 5)?;
    let mut relations = infer_links(&state, &graph, AttrKind::Brand, score_floor, k);
    relations.extend(infer_links(
        &state,
        &graph,
        AttrKind::ProductType,
        score_floor,
        k,
    ));
    let n = relations.len();
    graph.set_lateral(relations);
    graph::io::save_graph(&env.data_dir.join("graph"), &graph)?;
    eprintln!(
        "trained {} epochs, final loss {:.4}, inferred {} lateral relations",
        state.loss_trace.len(),
        state.loss_trace.last().copied().unwrap_or(f64::NAN),
        n
    );
    Ok(())
}

fn cmd_train_mapper(
    env: &Env,
    epochs: Option<usize>,
    lr: Option<f64>,
    dims: Option<usize>,
) -> Result<()> {
    let catalog = env.catalog()?;
    let logs = env.logs_filtered()?;
    let hierarchy = env.hierarchy()?;
    let d = MapperConfig::default();
    let config = MapperConfig {
        embed: crate::mapper::SkipGramConfig {
            dims: match dims {
                Some(v) => v,
                None => env.params.usize("mapper.embed_dims", d.embed.dims)?,
            },
            window: env.params.usize("mapper.embed_window", d.embed.window)?,
            epochs: env.params.usize("mapper.embed_epochs", d.embed.epochs)?,
            learning_rate: env.params.f64("mapper.embed_lr", d.embed.learning_rate)?,
            negatives: env.params.usize("mapper.embed_negatives", d.embed.negatives)?,
            seed: env.seed,
        },
        level: crate::mapper::LevelTrainConfig {
            filters: env.params.usize("mapper.level_filters", d.level.filters)?,
            epochs: match epochs {
                Some(v) => v,
                None => env.params.usize("mapper.level_epochs", d.level.epochs)?,
            },
            learning_rate: match lr {
                Some(v) => v,
                None => env.params.f64("mapper.level_lr", d.level.learning_rate)?,
            },
            seed: env.seed,
        },
        alpha: env.params.f64("mapper.alpha", d.alpha)?,
        alpha_support: env.params.f64("mapper.alpha_support", d.alpha_support)?,
        support_floor: env.params.f64("mapper.support_floor", d.support_floor)?,
        threshold_percentile: env
            .params
            .f64("mapper.threshold_percentile", d.threshold_percentile)?,
    };
    let model = mapper::train_mapper(&catalog, &logs, &hierarchy, &config)?;
    mapper::save_mapper(&env.data_dir.join("mapper"), &model)?;
    eprintln!(
        "mapper: {} terms, {} levels",
        model.embeddings.vocab.len(),
        model.levels.len()
    );
    Ok(())
}

fn cmd_eligibility(env: &Env, output: Option<PathBuf>) -> Result<()> {
    let catalog = env.catalog()?;
    let logs = env.logs_filtered()?;
    let thresholds = env.thresholds(&catalog, &logs)?;

    let mut out: Box<dyn Write> = match output {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(out, "query\teligible\tchosen_intent\tengagement_loss\titem_count")?;
    for query in crate::eligibility::distinct_queries(&logs) {
        let profile = extract_intents(&query, &catalog, &logs);
        let (eligible, chosen) = is_eligible(&profile, &catalog, thresholds.loss, thresholds.count);
        // Report the chosen intent's features, or the best single intent's
        // when the query is ineligible.
        let describe = |intent: &crate::eligibility::Intent| -> Result<(f64, usize)> {
            let selected: std::collections::BTreeSet<_> = [intent.clone()].into_iter().collect();
            Ok((
                engagement_loss(&profile, &selected)?,
                item_count(intent, &catalog),
            ))
        };
        let (name, loss, count) = match &chosen {
            Some(intent) => {
                let (l, c) = describe(intent)?;
                (intent.display(), l, c)
            }
            None => {
                let mut best: Option<(f64, usize)> = None;
                for intent in profile.intents.keys() {
                    let (l, c) = describe(intent)?;
                    if best.is_none_or(|(bl, _)| l < bl) {
                        best = Some((l, c));
                    }
                }
                let (l, c) = best.unwrap_or((1.0, 0));
                ("-".to_string(), l, c)
            }
        };
        writeln!(out, "{query}\t{eligible}\t{name}\t{loss:.6}\t{count}")?;
    }
    Ok(())
}

fn parse_filters(specs: &[String]) -> Result<Vec<(AttrKind, String)>> {
    specs
        .iter()
        .map(|s| {
            let (kind, value) = s.split_once('=').ok_or_else(|| {
                Error::Config(format!("filter {s:?} is not kind=value"))
            })?;
            Ok((AttrKind::parse(kind.trim())?, value.trim().to_string()))
        })
        .collect()
}

fn cmd_search(env: &Env, query: &str, filter: &[String], limit: Option<usize>) -> Result<()> {
    let index = env.index()?;
    let filters = parse_filters(filter)?;
    let limit = match limit {
        Some(v) => v,
        None => env.params.usize("search.limit", retrieval::DEFAULT_LIMIT)?,
    };
    let hits = search(&index, query, &filters, limit, &env.rank_weights()?);
    let rows: Vec<serde_json::Value> = hits
        .iter()
        .map(|h| {
            serde_json::json!({
                "item_id": h.item_id,
                "title": h.title,
                "score": h.score,
            })
        })
        .collect();
    println!("{}", serde_json::to_string_pretty(&rows)?);
    Ok(())
}

fn cmd_map_query(env: &Env, query: &str) -> Result<()> {
    let model = env.mapper()?;
    let paths = model.traverse(query);
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "query": query,
            "paths": paths,
        }))?
    );
    Ok(())
}

fn cmd_group(env: &Env, query: &str) -> Result<()> {
    let catalog = env.catalog()?;
    let logs = env.logs_filtered()?;
    let graph = env.graph()?;
    let mapper = env.mapper()?;
    let index = env.index()?;
    let thresholds = env.thresholds(&catalog, &logs)?;
    let ctx = GroupContext {
        catalog: &catalog,
        logs: &logs,
        thresholds,
        graph: &graph,
        mapper: &mapper,
        index: &index,
        config: env.stacker_config()?,
    };
    let result = group(&ctx, query);
    println!("{}", serde_json::to_string_pretty(&to_wire_json(&result))?);
    Ok(())
}

fn cmd_evaluate(env: &Env, primary_only: bool, ndcg_k: Option<usize>) -> Result<()> {
    let catalog = env.catalog()?;
    let logs = env.logs_filtered()?;
    let graph = env.graph()?;
    let mapper = env.mapper()?;
    let index = env.index()?;
    let thresholds = env.thresholds(&catalog, &logs)?;
    let ctx = GroupContext {
        catalog: &catalog,
        logs: &logs,
        thresholds,
        graph: &graph,
        mapper: &mapper,
        index: &index,
        config: env.stacker_config()?,
    };
    let config = ExperimentConfig {
        ndcg_k: match ndcg_k {
            Some(v) => v,
            None => env.params.usize("eval.ndcg_k", 10)?,
        },
        primary_only,
    };
    let report = run_experiment(&ctx, &config)?;
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(env.data_dir.join("report.json"), &json)?;
    let text = render_text(&report);
    std::fs::write(env.data_dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}
