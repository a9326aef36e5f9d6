//! Groups an eligible query's results into intent-pure stacks: a perfect
//! stack filtered to every attribute of the chosen intent, then either an
//! approximate stack (product-type only) or, when assortment is thin, a
//! similar stack built from lateral attribute swaps. Ineligible queries
//! fall back to the flat ranked list.

use serde::{Deserialize, Serialize};

use crate::corpus::{AttrKind, Catalog, EngagementRecord};
use crate::eligibility::{extract_intents, is_eligible, Intent, Thresholds};
use crate::graph::ProductGraph;
use crate::mapper::MapperModel;
use crate::retrieval::{search, InvertedIndex, RankWeights, SearchHit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackLabel {
    Perfect,
    Approximate,
    Similar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stack {
    pub label: StackLabel,
    pub intent: Intent,
    pub items: Vec<SearchHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedResult {
    pub query: String,
    pub eligible: bool,
    pub stacks: Vec<Stack>,
    pub fallback: Option<Vec<SearchHit>>,
}

impl StackedResult {
    /// Items in display order: stacks first (in order), else the fallback.
    pub fn flattened(&self) -> Vec<&SearchHit> {
        if self.stacks.is_empty() {
            self.fallback.iter().flatten().collect()
        } else {
            self.stacks.iter().flat_map(|s| s.items.iter()).collect()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackerConfig {
    /// Below this many perfect hits the secondary stack relaxes to
    /// lateral "similar" swaps instead of the product-type broadening.
    pub similar_min: usize,
    /// Items kept per displayed stack after dedup.
    pub display_limit: usize,
    /// Items per raw recall call.
    pub recall_limit: usize,
    /// Lateral neighbors consulted per attribute swap.
    pub lateral_k: usize,
    pub weights: RankWeights,
}

impl Default for StackerConfig {
    fn default() -> Self {
        StackerConfig {
            similar_min: 16,
            display_limit: 24,
            recall_limit: 128,
            lateral_k: 5,
            weights: RankWeights::default(),
        }
    }
}

/// Everything `group` consumes; the CLI builds this from the data dir.
pub struct GroupContext<'a> {
    pub catalog: &'a Catalog,
    /// Filtered engagement logs.
    pub logs: &'a [EngagementRecord],
    pub thresholds: Thresholds,
    pub graph: &'a ProductGraph,
    pub mapper: &'a MapperModel,
    pub index: &'a InvertedIndex,
    pub config: StackerConfig,
}

fn merge_ranked(mut lists: Vec<Vec<SearchHit>>, limit: usize) -> Vec<SearchHit> {
    let mut all: Vec<SearchHit> = lists.drain(..).flatten().collect();
    all.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    all.dedup_by(|a, b| a.item_id == b.item_id);
    all.truncate(limit);
    all
}

/// Remove any item already shown by an earlier stack from all later
/// stacks, preserving order within each stack; empty stacks are dropped.
pub fn dedup(stacks: Vec<Stack>) -> Vec<Stack> {
    let mut seen: std::collections::HashSet<String> = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(stacks.len());
    for mut stack in stacks {
        stack.items.retain(|h| seen.insert(h.item_id.clone()));
        if !stack.items.is_empty() {
            out.push(stack);
        }
    }
    out
}

fn filters_of(intent: &Intent) -> Vec<(AttrKind, String)> {
    intent
        .attrs()
        .map(|(k, v)| (k, v.to_string()))
        .collect()
}

fn swap_attr(intent: &Intent, kind: AttrKind, value: &str) -> Vec<(AttrKind, String)> {
    intent
        .attrs()
        .map(|(k, v)| {
            if k == kind {
                (k, value.to_string())
            } else {
                (k, v.to_string())
            }
        })
        .collect()
}

/// The full grouping pipeline for one query.
pub fn group(ctx: &GroupContext, query: &str) -> StackedResult {
    let cfg = &ctx.config;
    let profile = extract_intents(query, ctx.catalog, ctx.logs);
    let (eligible, chosen) = is_eligible(
        &profile,
        ctx.catalog,
        ctx.thresholds.loss,
        ctx.thresholds.count,
    );

    let flat = || search(ctx.index, query, &[], cfg.recall_limit, &cfg.weights);

    let Some(intent) = chosen.filter(|_| eligible) else {
        return StackedResult {
            query: query.to_string(),
            eligible: false,
            stacks: Vec::new(),
            fallback: Some(flat()),
        };
    };

    // Primary recall: hard-filtered to every attribute of the intent.
    let primary_hits = search(
        ctx.index,
        query,
        &filters_of(&intent),
        cfg.recall_limit,
        &cfg.weights,
    );
    if primary_hits.is_empty() {
        // Nothing satisfies the full intent; keep the flat experience.
        return StackedResult {
            query: query.to_string(),
            eligible: false,
            stacks: Vec::new(),
            fallback: Some(flat()),
        };
    }

    // Secondary recall: lateral swaps when assortment is thin, otherwise
    // the product-type broadening.
    let (label, secondary_hits, secondary_intent) = if primary_hits.len() < cfg.similar_min {
        // Brand swap first; fall back to product-type swaps only when the
        // brand has no lateral alternatives.
        let mut hits = Vec::new();
        let mut kept_attrs = intent.clone();
        for kind in [AttrKind::Brand, AttrKind::ProductType] {
            if let Some(value) = intent.get(kind) {
                let neighbors = ctx.graph.lateral_neighbors(kind, value, cfg.lateral_k);
                if neighbors.is_empty() {
                    continue;
                }
                let lists: Vec<Vec<SearchHit>> = neighbors
                    .iter()
                    .map(|(node, _)| {
                        search(
                            ctx.index,
                            query,
                            &swap_attr(&intent, kind, &node.label),
                            cfg.recall_limit,
                            &cfg.weights,
                        )
                    })
                    .collect();
                hits = merge_ranked(lists, cfg.recall_limit);
                // The stack's intent keeps the attributes that did NOT vary.
                kept_attrs = Intent::new(
                    intent
                        .attrs()
                        .filter(|(k, _)| *k != kind)
                        .map(|(k, v)| (k, v.to_string())),
                );
                break;
            }
        }
        (StackLabel::Similar, hits, kept_attrs)
    } else {
        let pt_filterset: Vec<Vec<(AttrKind, String)>> = match intent.get(AttrKind::ProductType) {
            Some(pt) => vec![vec![(AttrKind::ProductType, pt.to_string())]],
            None => {
                // Brand-only intent: let the hierarchy mapper supply the
                // product types to broaden into.
                let paths = ctx.mapper.traverse(query);
                let mut leaves = Vec::new();
                for path in &paths {
                    if let Some(node) = path.last() {
                        for leaf in ctx.mapper.hierarchy.leaves() {
                            let lp = ctx.mapper.hierarchy.path_to(leaf);
                            if lp.is_some_and(|p| p.contains(node)) {
                                leaves.push(leaf.to_string());
                            }
                        }
                    }
                }
                leaves.sort();
                leaves.dedup();
                leaves
                    .into_iter()
                    .map(|pt| vec![(AttrKind::ProductType, pt)])
                    .collect()
            }
        };
        let lists: Vec<Vec<SearchHit>> = pt_filterset
            .iter()
            .map(|f| search(ctx.index, query, f, cfg.recall_limit, &cfg.weights))
            .collect();
        let secondary_intent = match intent.get(AttrKind::ProductType) {
            Some(pt) => Intent::new([(AttrKind::ProductType, pt.to_string())]),
            None => intent.clone(),
        };
        (
            StackLabel::Approximate,
            merge_ranked(lists, cfg.recall_limit),
            secondary_intent,
        )
    };

    let stacks = vec![
        Stack {
            label: StackLabel::Perfect,
            intent: intent.clone(),
            items: primary_hits,
        },
        Stack {
            label,
            intent: secondary_intent,
            items: secondary_hits,
        },
    ];
    let mut stacks = dedup(stacks);
    for s in &mut stacks {
        s.items.truncate(cfg.display_limit);
    }

    StackedResult {
        query: query.to_string(),
        eligible: true,
        stacks,
        fallback: None,
    }
}

/// The CLI wire format: {query, eligible, stacks: [{label, intent,
/// items: [{item_id, title, score}]}], fallback}.
pub fn to_wire_json(result: &StackedResult) -> serde_json::Value {
    let item = |h: &SearchHit| {
        serde_json::json!({
            "item_id": h.item_id,
            "title": h.title,
            "score": h.score,
        })
    };
    let intent_map = |i: &Intent| {
        i.attrs()
            .map(|(k, v)| (k.as_str().to_string(), serde_json::Value::from(v)))
            .collect::<serde_json::Map<String, serde_json::Value>>()
    };
    serde_json::json!({
        "query": result.query,
        "eligible": result.eligible,
        "stacks": result.stacks.iter().map(|s| serde_json::json!({
            "label": match s.label {
                StackLabel::Perfect => "perfect",
                StackLabel::Approximate => "approximate",
                StackLabel::Similar => "similar",
            },
            "intent": intent_map(&s.intent),
            "items": s.items.iter().map(item).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "fallback": result.fallback.as_ref().map(|hits| {
            hits.iter().map(item).collect::<Vec<_>>()
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{HierarchyNode, Item};
    use crate::eligibility::Thresholds;
    use crate::graph::{build_graph, EngagementWeights};
    use crate::mapper::{train_mapper, MapperConfig};
    use crate::retrieval::build_index;

    fn hit(id: &str) -> SearchHit {
        SearchHit {
            item_id: id.into(),
            title: id.into(),
            score: 1.0,
            features: Default::default(),
        }
    }

    fn stack(label: StackLabel, ids: &[&str]) -> Stack {
        Stack {
            label,
            intent: Intent::new([]),
            items: ids.iter().map(|id| hit(id)).collect(),
        }
    }

    #[test]
    fn dedup_removes_later_duplicates() {
        let out = dedup(vec![
            stack(StackLabel::Perfect, &["a", "b", "c"]),
            stack(StackLabel::Approximate, &["b", "d"]),
        ]);
        let ids: Vec<Vec<&str>> = out
            .iter()
            .map(|s| s.items.iter().map(|h| h.item_id.as_str()).collect())
            .collect();
        assert_eq!(ids, vec![vec!["a", "b", "c"], vec!["d"]]);
    }

    #[test]
    fn dedup_disjoint_unchanged() {
        let out = dedup(vec![
            stack(StackLabel::Perfect, &["a"]),
            stack(StackLabel::Similar, &["b"]),
        ]);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn dedup_drops_fully_shadowed_stack() {
        let out = dedup(vec![
            stack(StackLabel::Perfect, &["a", "b"]),
            stack(StackLabel::Approximate, &["b", "a"]),
        ]);
        assert_eq!(out.len(), 1);
    }

    struct Fixture {
        catalog: Catalog,
        logs: Vec<EngagementRecord>,
        graph: ProductGraph,
        mapper: MapperModel,
        index: InvertedIndex,
    }

    fn fixture() -> Fixture {
        let mk = |id: &str, brand: &str, pt: &str, sales: u64| Item {
            item_id: id.into(),
            title: format!("{brand} {pt}"),
            brand: brand.into(),
            product_type: pt.into(),
            popularity: 0.5,
            sales,
        };
        let mut items = vec![
            mk("gv1", "Great Value", "Milk", 10),
            mk("gv2", "Great Value", "Milk", 8),
            mk("gv3", "Great Value", "Milk", 6),
            mk("sf1", "Sunny Farm", "Milk", 9),
            mk("sf2", "Sunny Farm", "Milk", 7),
            mk("pp1", "Premier", "Protein Shake", 5),
            mk("pp2", "Premier", "Protein Shake", 4),
            mk("or1", "Orgain", "Protein Shake", 6),
            mk("or2", "Orgain", "Protein Shake", 3),
        ];
        // pad the milk assortment so the milk query is NOT low-assortment
        for i in 0..20 {
            items.push(mk(&format!("pad{i:02}"), "Great Value", "Milk", 1));
        }
        let catalog = Catalog::new(items).unwrap();
        let rec = |q: &str, id: &str, orders: u64| EngagementRecord {
            query: q.into(),
            item_id: id.into(),
            clicks: orders * 2,
            atc: orders,
            orders,
        };
        let logs = vec![
            rec("great value milk", "gv1", 50),
            rec("great value milk", "gv2", 30),
            rec("premier protein shake", "pp1", 40),
            rec("premier protein shake", "pp2", 20),
            rec("protein shake", "pp1", 30),
            rec("protein shake", "or1", 30),
            rec("milk", "gv1", 20),
            rec("milk", "sf1", 25),
        ];
        let hierarchy = HierarchyNode {
            name: "Root".into(),
            children: vec![
                HierarchyNode {
                    name: "Dairy".into(),
                    children: vec![HierarchyNode::leaf("Milk")],
                },
                HierarchyNode {
                    name: "Beverage".into(),
                    children: vec![HierarchyNode::leaf("Protein Shake")],
                },
            ],
        };
        let mut graph = build_graph(&catalog, &logs, hierarchy.clone(), EngagementWeights::default());
        let premier = graph
            .attribute_index(AttrKind::Brand, "Premier")
            .unwrap();
        let orgain = graph.attribute_index(AttrKind::Brand, "Orgain").unwrap();
        graph.set_lateral([(premier, orgain, 0.9)]);

        let mapper = train_mapper(
            &catalog,
            &logs,
            &hierarchy,
            &MapperConfig {
                embed: crate::mapper::SkipGramConfig {
                    epochs: 3,
                    ..Default::default()
                },
                level: crate::mapper::LevelTrainConfig {
                    epochs: 30,
                    ..Default::default()
                },
                ..Default::default()
            },
        )
        .unwrap();
        let index = build_index(&catalog).unwrap();
        Fixture {
            catalog,
            logs,
            graph,
            mapper,
            index,
        }
    }

    fn ctx(f: &Fixture) -> GroupContext<'_> {
        GroupContext {
            catalog: &f.catalog,
            logs: &f.logs,
            thresholds: Thresholds {
                loss: 0.2,
                count: 1,
            },
            graph: &f.graph,
            mapper: &f.mapper,
            index: &f.index,
            config: StackerConfig {
                similar_min: 16,
                ..Default::default()
            },
        }
    }

    #[test]
    fn perfect_stack_is_brand_and_type_pure() {
        let f = fixture();
        let result = group(&ctx(&f), "great value milk");
        assert!(result.eligible);
        assert_eq!(result.stacks[0].label, StackLabel::Perfect);
        for h in &result.stacks[0].items {
            let item = f.catalog.get(&h.item_id).unwrap();
            assert_eq!(item.brand, "Great Value");
            assert_eq!(item.product_type, "Milk");
        }
    }

    #[test]
    fn low_assortment_gets_similar_stack_from_lateral_brand() {
        let f = fixture();
        let result = group(&ctx(&f), "premier protein shake");
        assert!(result.eligible);
        assert_eq!(result.stacks.len(), 2);
        assert_eq!(result.stacks[1].label, StackLabel::Similar);
        for h in &result.stacks[1].items {
            let item = f.catalog.get(&h.item_id).unwrap();
            assert_eq!(item.brand, "Orgain");
            assert_eq!(item.product_type, "Protein Shake");
        }
    }

    #[test]
    fn rich_assortment_gets_approximate_stack() {
        let f = fixture();
        let result = group(&ctx(&f), "great value milk");
        assert_eq!(result.stacks.len(), 2);
        assert_eq!(result.stacks[1].label, StackLabel::Approximate);
        // approximate stack: milk of other brands, no duplicates with primary
        let primary: std::collections::HashSet<&str> = result.stacks[0]
            .items
            .iter()
            .map(|h| h.item_id.as_str())
            .collect();
        for h in &result.stacks[1].items {
            assert!(!primary.contains(h.item_id.as_str()));
            assert_eq!(f.catalog.get(&h.item_id).unwrap().product_type, "Milk");
        }
    }

    #[test]
    fn ineligible_query_falls_back_to_flat_search() {
        let f = fixture();
        let mut c = ctx(&f);
        // impossible count gate -> nothing qualifies
        c.thresholds = Thresholds {
            loss: 0.2,
            count: 10_000,
        };
        let result = group(&c, "protein shake");
        assert!(!result.eligible);
        assert!(result.stacks.is_empty());
        let expected = search(&f.index, "protein shake", &[], 128, &RankWeights::default());
        assert_eq!(result.fallback.as_deref(), Some(expected.as_slice()));
    }

    #[test]
    fn grouping_is_deterministic() {
        let f = fixture();
        let a = group(&ctx(&f), "great value milk");
        let b = group(&ctx(&f), "great value milk");
        assert_eq!(a, b);
    }

    #[test]
    fn no_item_in_two_stacks() {
        let f = fixture();
        for q in ["great value milk", "premier protein shake", "milk"] {
            let result = group(&ctx(&f), q);
            let mut seen = std::collections::HashSet::new();
            for s in &result.stacks {
                for h in &s.items {
                    assert!(seen.insert(h.item_id.clone()), "{} duplicated for {q}", h.item_id);
                }
            }
        }
    }

    #[test]
    fn wire_json_shape() {
        let f = fixture();
        let result = group(&ctx(&f), "great value milk");
        let v = to_wire_json(&result);
        assert_eq!(v["query"], "great value milk");
        assert_eq!(v["eligible"], true);
        assert_eq!(v["stacks"][0]["label"], "perfect");
        assert!(v["stacks"][0]["items"][0]["item_id"].is_string());
        assert!(v["fallback"].is_null());
    }
}
