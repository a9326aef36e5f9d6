//! Offline evaluation: graded-relevance NDCG, latency percentile
//! reporting, synthetic relevance labels, and the grouped-vs-flat
//! experiment runner.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{AttrKind, Catalog};
use crate::eligibility::{distinct_queries, extract_intents, select_threshold, Intent};
use crate::error::{Error, Result};
use crate::graph::ProductGraph;
use crate::retrieval::search;
use crate::stacker::{group, GroupContext, StackedResult};

/// Ranked ids with a 1..5 rating per id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedList {
    pub items: Vec<String>,
    pub ratings: HashMap<String, u8>,
}

impl RatedList {
    pub fn rating(&self, id: &str) -> u8 {
        self.ratings.get(id).copied().unwrap_or(1)
    }
}

fn gain(rating: u8) -> f64 {
    (1u64 << rating) as f64 - 1.0 // 2^rel - 1
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2() // log2(i + 1), i starting at 1
}

/// NDCG@k with gains 2^rel - 1 and log2(i + 1) discounts. The ideal
/// ordering re-sorts this list's own ratings descending. Returns 0 when
/// the ideal DCG is 0 (empty list).
pub fn ndcg(rated: &RatedList, k: usize) -> f64 {
    let k = k.min(rated.items.len());
    let dcg: f64 = rated
        .items
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, id)| gain(rated.rating(id)) / discount(i + 1))
        .sum();
    let mut ideal: Vec<u8> = rated.items.iter().map(|id| rated.rating(id)).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &r)| gain(r) / discount(i + 1))
        .sum();
    if idcg == 0.0 {
        return 0.0;
    }
    dcg / idcg
}

pub const PERCENTILE_LABELS: &[(&str, f64)] = &[
    ("P@50", 50.0),
    ("P@60", 60.0),
    ("P@70", 70.0),
    ("P@80", 80.0),
    ("P@90", 90.0),
    ("P@95", 95.0),
    ("P@99", 99.0),
    ("P@99.9", 99.9),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileReport {
    /// Ordered (label, value) rows: P@50 .. P@99.9 then the mean.
    pub entries: Vec<(String, f64)>,
}

impl PercentileReport {
    pub fn get(&self, label: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(l, _)| l == label)
            .map(|&(_, v)| v)
    }
}

/// Nearest-rank percentiles at the standard labels plus the mean.
pub fn percentile_report(sample: &[f64]) -> Result<PercentileReport> {
    if sample.is_empty() {
        return Err(Error::InvalidInput("empty latency sample".into()));
    }
    let mut entries = Vec::with_capacity(PERCENTILE_LABELS.len() + 1);
    for &(label, p) in PERCENTILE_LABELS {
        entries.push((label.to_string(), select_threshold(sample, p)?));
    }
    let mean = sample.iter().sum::<f64>() / sample.len() as f64;
    entries.push(("mean".to_string(), mean));
    Ok(PercentileReport { entries })
}

/// Synthetic relevance against a ground-truth intent: 5 for a full
/// attribute match, 3 for the right product type only, 2 for a lateral
/// neighbor of the right product type, 1 otherwise. Stacked results are
/// rated in stack-flattened display order.
pub fn synthetic_rate(
    result: &StackedResult,
    truth: &Intent,
    catalog: &Catalog,
    graph: &ProductGraph,
    lateral_k: usize,
) -> RatedList {
    let lateral_types: Vec<String> = truth
        .get(AttrKind::ProductType)
        .map(|pt| {
            graph
                .lateral_neighbors(AttrKind::ProductType, pt, lateral_k)
                .into_iter()
                .map(|(n, _)| n.label.clone())
                .collect()
        })
        .unwrap_or_default();

    let mut items = Vec::new();
    let mut ratings = HashMap::new();
    for hit in result.flattened() {
        let rating = match catalog.get(&hit.item_id) {
            Some(item) => {
                if truth.matches(item) {
                    5
                } else if truth.get(AttrKind::ProductType) == Some(item.product_type.as_str()) {
                    3
                } else if lateral_types.contains(&item.product_type) {
                    2
                } else {
                    1
                }
            }
            None => 1,
        };
        items.push(hit.item_id.clone());
        ratings.insert(hit.item_id.clone(), rating);
    }
    RatedList { items, ratings }
}

/// The query's dominant intent: most orders, ties to the
/// lexicographically smaller intent.
pub fn dominant_intent(
    query: &str,
    catalog: &Catalog,
    logs: &[crate::corpus::EngagementRecord],
) -> Option<Intent> {
    let profile = extract_intents(query, catalog, logs);
    let mut best: Option<(u64, Intent)> = None;
    for (intent, &orders) in &profile.intents {
        match &best {
            Some((bo, _)) if *bo >= orders => {}
            _ => best = Some((orders, intent.clone())),
        }
    }
    best.map(|(_, i)| i)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub ndcg_k: usize,
    /// Score only the first stack of grouped results.
    pub primary_only: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            ndcg_k: 10,
            primary_only: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query: String,
    pub eligible: bool,
    pub ndcg_grouped: f64,
    pub ndcg_flat: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyComparison {
    pub grouped: PercentileReport,
    pub flat: PercentileReport,
    /// Per-label percentage overhead of grouped over flat.
    pub delta_pct: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub queries: usize,
    pub eligible_queries: usize,
    /// Order-weighted share of traffic that gets the grouped experience.
    pub affected_traffic: f64,
    pub ndcg_k: usize,
    pub mean_ndcg_grouped: f64,
    pub mean_ndcg_flat: f64,
    pub ndcg_delta: f64,
    pub latency: LatencyComparison,
    pub outcomes: Vec<QueryOutcome>,
}

/// Run the offline comparison over a query set: grouped pipeline vs the
/// flat single-call baseline, scored with synthetic NDCG@k, plus latency
/// percentiles for both paths. Relevance numbers are deterministic given
/// the models; wall-clock latencies naturally are not.
pub fn run_experiment(
    ctx: &GroupContext,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    let queries = distinct_queries(ctx.logs);
    if queries.is_empty() {
        return Err(Error::Config("no queries in the log set".into()));
    }

    let mut outcomes = Vec::with_capacity(queries.len());
    let mut grouped_ms = Vec::with_capacity(queries.len());
    let mut flat_ms = Vec::with_capacity(queries.len());
    let mut eligible_orders = 0u64;
    let mut total_orders = 0u64;

    for query in &queries {
        let t0 = Instant::now();
        let grouped = group(ctx, query);
        grouped_ms.push(t0.elapsed().as_secs_f64() * 1e3);

        let t1 = Instant::now();
        let flat_hits = search(
            ctx.index,
            query,
            &[],
            ctx.config.recall_limit,
            &ctx.config.weights,
        );
        flat_ms.push(t1.elapsed().as_secs_f64() * 1e3);

        let truth = dominant_intent(query, ctx.catalog, ctx.logs)
            .unwrap_or_else(|| Intent::new([]));

        let scored_grouped = if config.primary_only && !grouped.stacks.is_empty() {
            StackedResult {
                stacks: vec![grouped.stacks[0].clone()],
                ..grouped.clone()
            }
        } else {
            grouped.clone()
        };
        let flat_result = StackedResult {
            query: query.clone(),
            eligible: false,
            stacks: Vec::new(),
            fallback: Some(flat_hits),
        };

        let rated_g = synthetic_rate(
            &scored_grouped,
            &truth,
            ctx.catalog,
            ctx.graph,
            ctx.config.lateral_k,
        );
        let rated_f = synthetic_rate(
            &flat_result,
            &truth,
            ctx.catalog,
            ctx.graph,
            ctx.config.lateral_k,
        );

        let query_orders: u64 = ctx
            .logs
            .iter()
            .filter(|r| &r.query == query)
            .map(|r| r.orders)
            .sum();
        total_orders += query_orders;
        if grouped.eligible {
            eligible_orders += query_orders;
        }

        outcomes.push(QueryOutcome {
            query: query.clone(),
            eligible: grouped.eligible,
            ndcg_grouped: ndcg(&rated_g, config.ndcg_k),
            ndcg_flat: ndcg(&rated_f, config.ndcg_k),
        });
    }

    let mean = |f: fn(&QueryOutcome) -> f64, xs: &[QueryOutcome]| {
        xs.iter().map(f).sum::<f64>() / xs.len() as f64
    };
    let mean_g = mean(|o| o.ndcg_grouped, &outcomes);
    let mean_f = mean(|o| o.ndcg_flat, &outcomes);

    let grouped_report = percentile_report(&grouped_ms)?;
    let flat_report = percentile_report(&flat_ms)?;
    let delta_pct = grouped_report
        .entries
        .iter()
        .zip(&flat_report.entries)
        .map(|((label, g), (_, f))| {
            let delta = if *f > 0.0 { (g - f) / f * 100.0 } else { 0.0 };
            (label.clone(), delta)
        })
        .collect();

    Ok(ExperimentReport {
        queries: queries.len(),
        eligible_queries: outcomes.iter().filter(|o| o.eligible).count(),
        affected_traffic: if total_orders > 0 {
            eligible_orders as f64 / total_orders as f64
        } else {
            0.0
        },
        ndcg_k: config.ndcg_k,
        mean_ndcg_grouped: mean_g,
        mean_ndcg_flat: mean_f,
        ndcg_delta: mean_g - mean_f,
        latency: LatencyComparison {
            grouped: grouped_report,
            flat: flat_report,
            delta_pct,
        },
        outcomes,
    })
}

/// Aligned-column text rendering of the report.
pub fn render_text(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let push = |out: &mut String, line: String| {
        out.push_str(&line);
        out.push('\n');
    };
    push(&mut out, format!("queries            {:>10}", report.queries));
    push(
        &mut out,
        format!("eligible           {:>10}", report.eligible_queries),
    );
    push(
        &mut out,
        format!("affected traffic   {:>10.4}", report.affected_traffic),
    );
    push(
        &mut out,
        format!(
            "mean NDCG@{:<2} grouped {:>7.4}  flat {:>7.4}  delta {:+.4}",
            report.ndcg_k, report.mean_ndcg_grouped, report.mean_ndcg_flat, report.ndcg_delta
        ),
    );
    push(&mut out, String::new());
    push(
        &mut out,
        format!("{:<8} {:>12} {:>12} {:>10}", "latency", "grouped ms", "flat ms", "delta %"),
    );
    for ((label, g), (_, f)) in report
        .latency
        .grouped
        .entries
        .iter()
        .zip(&report.latency.flat.entries)
    {
        let delta = report
            .latency
            .delta_pct
            .iter()
            .find(|(l, _)| l == label)
            .map(|&(_, d)| d)
            .unwrap_or(0.0);
        push(
            &mut out,
            format!("{label:<8} {g:>12.4} {f:>12.4} {delta:>+10.2}"),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rated(ratings_in_order: &[u8]) -> RatedList {
        let items: Vec<String> = (0..ratings_in_order.len())
            .map(|i| format!("i{i}"))
            .collect();
        let ratings = items
            .iter()
            .cloned()
            .zip(ratings_in_order.iter().copied())
            .collect();
        RatedList { items, ratings }
    }

    #[test]
    fn ndcg_ideal_order_is_one() {
        assert_eq!(ndcg(&rated(&[5, 4, 3, 2, 1]), 5), 1.0);
    }

    #[test]
    fn ndcg_two_item_hand_value() {
        // DCG = 3/1 + 7/log2(3) = 7.41649...; IDCG = 7 + 3/log2(3) = 8.89279...
        let v = ndcg(&rated(&[2, 3]), 2);
        assert!((v - 0.8340).abs() < 1e-4, "got {v}");
    }

    #[test]
    fn ndcg_all_equal_is_one_for_any_permutation() {
        for perm in [&[3u8, 3, 3][..], &[3, 3, 3]] {
            assert_eq!(ndcg(&rated(perm), 3), 1.0);
        }
    }

    #[test]
    fn ndcg_in_unit_interval_and_k_truncates() {
        let r = rated(&[1, 5, 2, 4]);
        for k in 1..=6 {
            let v = ndcg(&r, k);
            assert!((0.0..=1.0).contains(&v), "k={k} v={v}");
        }
    }

    #[test]
    fn ndcg_empty_is_zero() {
        assert_eq!(ndcg(&rated(&[]), 10), 0.0);
    }

    #[test]
    fn percentiles_known_vector() {
        let v: Vec<f64> = (1..=10).map(|x| x as f64).collect();
        let r = percentile_report(&v).unwrap();
        assert_eq!(r.get("P@50"), Some(5.0));
        assert_eq!(r.get("P@99.9"), Some(10.0));
        assert_eq!(r.get("mean"), Some(5.5));
    }

    #[test]
    fn percentiles_constant_sample() {
        let r = percentile_report(&[7.0; 20]).unwrap();
        for (_, v) in &r.entries {
            assert_eq!(*v, 7.0);
        }
    }

    #[test]
    fn percentiles_monotone() {
        let mut rng = crate::rng::Rng::seed_from(77);
        let v: Vec<f64> = (0..500).map(|_| rng.f64() * 100.0).collect();
        let r = percentile_report(&v).unwrap();
        let ps: Vec<f64> = r.entries.iter().take(8).map(|&(_, v)| v).collect();
        for w in ps.windows(2) {
            assert!(w[0] <= w[1], "{ps:?}");
        }
    }

    #[test]
    fn percentile_empty_errors() {
        assert!(percentile_report(&[]).is_err());
    }

    mod rating {
        use super::super::*;
        use crate::corpus::{HierarchyNode, Item};
        use crate::graph::ProductGraph;
        use crate::retrieval::SearchHit;
        use crate::stacker::{Stack, StackLabel};

        fn item(id: &str, brand: &str, pt: &str) -> Item {
            Item {
                item_id: id.into(),
                title: format!("{brand} {pt}"),
                brand: brand.into(),
                product_type: pt.into(),
                popularity: 0.0,
                sales: 0,
            }
        }

        fn hit(id: &str) -> SearchHit {
            SearchHit {
                item_id: id.into(),
                title: id.into(),
                score: 1.0,
                features: Default::default(),
            }
        }

        fn fixture() -> (Catalog, ProductGraph, Intent) {
            let catalog = Catalog::new(vec![
                item("perfect", "Great Value", "Milk"),
                item("type_only", "Sunny Farm", "Milk"),
                item("lateral", "Sunny Farm", "Oat Drink"),
                item("unrelated", "Sunny Farm", "Soap"),
            ])
            .unwrap();
            let mut graph = crate::graph::build_graph(
                &catalog,
                &[],
                HierarchyNode {
                    name: "Root".into(),
                    children: Vec::new(),
                },
                crate::graph::EngagementWeights::default(),
            );
            let milk = graph
                .attribute_index(AttrKind::ProductType, "Milk")
                .unwrap();
            let oat = graph
                .attribute_index(AttrKind::ProductType, "Oat Drink")
                .unwrap();
            graph.set_lateral([(milk, oat, 0.9)]);
            let truth = Intent::new([
                (AttrKind::Brand, "Great Value".to_string()),
                (AttrKind::ProductType, "Milk".to_string()),
            ]);
            (catalog, graph, truth)
        }

        #[test]
        fn rating_tiers() {
            let (catalog, graph, truth) = fixture();
            let result = StackedResult {
                query: "great value milk".into(),
                eligible: false,
                stacks: Vec::new(),
                fallback: Some(vec![
                    hit("perfect"),
                    hit("type_only"),
                    hit("lateral"),
                    hit("unrelated"),
                ]),
            };
            let rated = synthetic_rate(&result, &truth, &catalog, &graph, 5);
            assert_eq!(rated.rating("perfect"), 5);
            assert_eq!(rated.rating("type_only"), 3);
            assert_eq!(rated.rating("lateral"), 2);
            assert_eq!(rated.rating("unrelated"), 1);
        }

        #[test]
        fn pure_primary_stack_outranks_shuffled_flat_list() {
            let (catalog, graph, truth) = fixture();
            let stacked = StackedResult {
                query: "great value milk".into(),
                eligible: true,
                stacks: vec![
                    Stack {
                        label: StackLabel::Perfect,
                        intent: truth.clone(),
                        items: vec![hit("perfect")],
                    },
                    Stack {
                        label: StackLabel::Approximate,
                        intent: truth.clone(),
                        items: vec![hit("type_only"), hit("lateral")],
                    },
                ],
                fallback: None,
            };
            let shuffled = StackedResult {
                query: "great value milk".into(),
                eligible: false,
                stacks: Vec::new(),
                fallback: Some(vec![
                    hit("unrelated"),
                    hit("lateral"),
                    hit("perfect"),
                    hit("type_only"),
                ]),
            };
            let a = ndcg(&synthetic_rate(&stacked, &truth, &catalog, &graph, 5), 10);
            let b = ndcg(&synthetic_rate(&shuffled, &truth, &catalog, &graph, 5), 10);
            assert!(a > b, "stacked {a} not above shuffled flat {b}");
        }

        #[test]
        fn self_comparison_delta_is_exactly_zero() {
            use crate::corpus::generate::{generate_corpus, CorpusSpec};
            use crate::eligibility::Thresholds;
            use crate::mapper::{train_mapper, MapperConfig};
            use crate::retrieval::build_index;
            use crate::stacker::{GroupContext, StackerConfig};

            let c = generate_corpus(
                3,
                &CorpusSpec {
                    items: 60,
                    queries: 24,
                    product_types: 8,
                    brands: 4,
                    intent_mixture: 0.0,
                    mixture_overrides: vec![],
                },
            )
            .unwrap();
            let logs = crate::corpus::filter_logs(&c.logs, 10, 10);
            let graph = crate::graph::build_graph(
                &c.catalog,
                &logs,
                c.hierarchy.clone(),
                crate::graph::EngagementWeights::default(),
            );
            let mapper = train_mapper(
                &c.catalog,
                &logs,
                &c.hierarchy,
                &MapperConfig {
                    embed: crate::mapper::SkipGramConfig {
                        epochs: 2,
                        ..Default::default()
                    },
                    level: crate::mapper::LevelTrainConfig {
                        epochs: 10,
                        ..Default::default()
                    },
                    ..Default::default()
                },
            )
            .unwrap();
            let index = build_index(&c.catalog).unwrap();
            // impossible count gate: every query falls back to the flat list,
            // so grouped and flat are the same ranked list everywhere
            let ctx = GroupContext {
                catalog: &c.catalog,
                logs: &logs,
                thresholds: Thresholds {
                    loss: 0.0,
                    count: usize::MAX,
                },
                graph: &graph,
                mapper: &mapper,
                index: &index,
                config: StackerConfig::default(),
            };
            let report = run_experiment(&ctx, &ExperimentConfig::default()).unwrap();
            assert_eq!(report.ndcg_delta, 0.0);
            assert_eq!(report.eligible_queries, 0);
            assert_eq!(report.affected_traffic, 0.0);
        }
    }
}
