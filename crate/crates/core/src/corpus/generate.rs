//! Deterministic synthetic grocery corpus: catalog, engagement logs, and a
//! three-level product-type hierarchy (root, category, product type).
//!
//! Queries are enumerated from templates in a fixed order: product-type
//! queries ("milk"), brand + product-type queries ("great value milk"),
//! category queries ("fruit"), then variant and pack-size fillers. Each
//! query's engagement concentrates on its home intent; the `intent_mixture`
//! knob sends that fraction of order mass to other product types.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::{Catalog, EngagementRecord, HierarchyNode, Item};

/// (product type, category), in selection order.
const PRODUCT_TYPE_POOL: &[(&str, &str)] = &[
    ("Milk", "Dairy"),
    ("Apple", "Fruit"),
    ("Juice", "Beverage"),
    ("Chip", "Snack"),
    ("Banana", "Fruit"),
    ("Cheese", "Dairy"),
    ("Protein Shake", "Beverage"),
    ("Cookie", "Snack"),
    ("Orange", "Fruit"),
    ("Yogurt", "Dairy"),
    ("Coffee", "Beverage"),
    ("Rice", "Pantry"),
    ("Grape", "Fruit"),
    ("Butter", "Dairy"),
    ("Soda", "Beverage"),
    ("Pasta", "Pantry"),
    ("Soap", "Household"),
    ("Cereal", "Pantry"),
    ("Towel", "Household"),
    ("Tea", "Beverage"),
    ("Cracker", "Snack"),
    ("Mango", "Fruit"),
    ("Cream", "Dairy"),
    ("Candy", "Snack"),
    ("Flour", "Pantry"),
    ("Bleach", "Household"),
    ("Water", "Beverage"),
    ("Peach", "Fruit"),
    ("Sugar", "Pantry"),
    ("Sponge", "Household"),
    ("Popcorn", "Snack"),
    ("Honey", "Pantry"),
    ("Detergent", "Household"),
    ("Granola Bar", "Snack"),
];

const BRAND_POOL: &[&str] = &[
    "Great Value",
    "Premier",
    "Sunny Farm",
    "Golden Crest",
    "Blue Ridge",
    "Harvest Moon",
    "Silver Oak",
    "Royal Mills",
    "Fresh Fields",
    "North Peak",
    "Crystal Bay",
    "Red Barn",
    "Green Valley",
    "Iron Gate",
    "Stone Creek",
    "Amber Hills",
];

const TYPE_MODIFIERS: &[&str] = &[
    "Organic", "Golden", "Classic", "Alpine", "Sunny", "Royal", "Prime", "Rustic",
];

const VARIANTS: &[&str] = &[
    "Vanilla", "Chocolate", "Original", "Classic", "Family Size", "Organic", "Large", "Mini",
    "Fresh", "Premium",
];

#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub brands: usize,
    pub product_types: usize,
    pub items: usize,
    pub queries: usize,
    /// Fraction of a query's order mass spent outside its home intent.
    pub intent_mixture: f64,
    /// Per-query mixture overrides, matched on the final query text.
    pub mixture_overrides: Vec<(String, f64)>,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            brands: 8,
            product_types: 12,
            items: 300,
            queries: 120,
            intent_mixture: 0.1,
            mixture_overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub catalog: Catalog,
    pub logs: Vec<EngagementRecord>,
    pub hierarchy: HierarchyNode,
}

fn product_type_name(i: usize) -> (String, String) {
    if i < PRODUCT_TYPE_POOL.len() {
        let (pt, cat) = PRODUCT_TYPE_POOL[i];
        (pt.to_string(), cat.to_string())
    } else {
        let j = i - PRODUCT_TYPE_POOL.len();
        let modifier = TYPE_MODIFIERS[(j / PRODUCT_TYPE_POOL.len()) % TYPE_MODIFIERS.len()];
        let (base, cat) = PRODUCT_TYPE_POOL[j % PRODUCT_TYPE_POOL.len()];
        (format!("{modifier} {base}"), cat.to_string())
    }
}

fn brand_name(i: usize) -> String {
    if i < BRAND_POOL.len() {
        BRAND_POOL[i].to_string()
    } else {
        let j = i - BRAND_POOL.len();
        let a = TYPE_MODIFIERS[j % TYPE_MODIFIERS.len()];
        let b = BRAND_POOL[j % BRAND_POOL.len()];
        format!("{a} {b}")
    }
}

struct QueryPlan {
    text: String,
    /// Qualifying item indices for home engagement.
    home_items: Vec<usize>,
    /// True for category queries: home engagement is spread across
    /// several product types on purpose.
    spread: bool,
}

pub fn generate_corpus(seed: u64, spec: &CorpusSpec) -> Result<GeneratedCorpus> {
    if spec.items == 0 {
        return Err(Error::InvalidInput("corpus spec has zero items".into()));
    }
    if spec.product_types == 0 {
        return Err(Error::InvalidInput(
            "corpus spec has zero product types".into(),
        ));
    }
    if spec.brands == 0 {
        return Err(Error::InvalidInput("corpus spec has zero brands".into()));
    }

    let mut root_rng = Rng::seed_from(seed);
    let mut item_rng = root_rng.fork(1);
    let mut query_rng = root_rng.fork(2);
    let mut log_rng = root_rng.fork(3);

    let n_types = spec.product_types.min(spec.items);
    let types: Vec<(String, String)> = (0..n_types).map(product_type_name).collect();
    let brands: Vec<String> = (0..spec.brands).map(brand_name).collect();

    // Each product type sells under a small set of home brands.
    let home_brands: Vec<Vec<usize>> = (0..n_types)
        .map(|i| {
            let n = (2 + item_rng.below(3)).min(spec.brands);
            (0..n).map(|k| (i + k) % spec.brands).collect()
        })
        .collect();

    // Catalog: items round-robin over product types, cycling home brands.
    let mut items = Vec::with_capacity(spec.items);
    for idx in 0..spec.items {
        let ti = idx % n_types;
        let (pt, _) = &types[ti];
        let bi = home_brands[ti][(idx / n_types) % home_brands[ti].len()];
        let brand = &brands[bi];
        let variant = if item_rng.f64() < 0.7 {
            Some(*item_rng.choose(VARIANTS))
        } else {
            None
        };
        let title = match variant {
            Some(v) => format!("{brand} {pt} {v}"),
            None => format!("{brand} {pt}"),
        };
        items.push(Item {
            item_id: format!("item-{idx:05}"),
            title,
            brand: brand.clone(),
            product_type: pt.clone(),
            popularity: (item_rng.f64() * 1000.0).round() / 1000.0,
            sales: item_rng.range(0, 60),
        });
    }
    let catalog = Catalog::new(items)?;

    // Hierarchy: Root -> category -> product type, in selection order.
    let mut categories: Vec<String> = Vec::new();
    for (_, cat) in &types {
        if !categories.contains(cat) {
            categories.push(cat.clone());
        }
    }
    let hierarchy = HierarchyNode {
        name: "Root".into(),
        children: categories
            .iter()
            .map(|cat| HierarchyNode {
                name: cat.clone(),
                children: types
                    .iter()
                    .filter(|(_, c)| c == cat)
                    .map(|(pt, _)| HierarchyNode::leaf(pt))
                    .collect(),
            })
            .collect(),
    };

    // Item indices per product type / per category.
    let items_of_type: Vec<Vec<usize>> = types
        .iter()
        .map(|(pt, _)| {
            catalog
                .items()
                .iter()
                .enumerate()
                .filter(|(_, it)| &it.product_type == pt)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    // Query templates, enumerated in order until the requested count.
    let lc = |s: &str| s.to_lowercase();
    let mut plans: Vec<QueryPlan> = Vec::new();
    let mut seen = HashSet::new();
    let push = |plans: &mut Vec<QueryPlan>,
                    seen: &mut HashSet<String>,
                    text: String,
                    home: Vec<usize>,
                    spread: bool| {
        if !home.is_empty() && seen.insert(text.clone()) {
            plans.push(QueryPlan {
                text,
                home_items: home,
                spread,
            });
        }
    };

    // Tier 1: product-type queries.
    for (ti, (pt, _)) in types.iter().enumerate() {
        if plans.len() >= spec.queries {
            break;
        }
        push(&mut plans, &mut seen, lc(pt), items_of_type[ti].clone(), false);
    }
    // Tier 2: brand + product-type queries over actual combinations.
    'tier2: for (ti, (pt, _)) in types.iter().enumerate() {
        for &bi in &home_brands[ti] {
            if plans.len() >= spec.queries {
                break 'tier2;
            }
            let brand = &brands[bi];
            let home: Vec<usize> = items_of_type[ti]
                .iter()
                .copied()
                .filter(|&i| catalog.items()[i].brand == *brand)
                .collect();
            push(
                &mut plans,
                &mut seen,
                format!("{} {}", lc(brand), lc(pt)),
                home,
                false,
            );
        }
    }
    // Tier 3: category queries, engagement spread across the category.
    for cat in &categories {
        if plans.len() >= spec.queries {
            break;
        }
        let home: Vec<usize> = types
            .iter()
            .enumerate()
            .filter(|(_, (_, c))| c == cat)
            .flat_map(|(ti, _)| items_of_type[ti].iter().copied())
            .collect();
        push(&mut plans, &mut seen, lc(cat), home, true);
    }
    // Tier 4: variant + product type.
    'tier4: for v in VARIANTS {
        for (ti, (pt, _)) in types.iter().enumerate() {
            if plans.len() >= spec.queries {
                break 'tier4;
            }
            push(
                &mut plans,
                &mut seen,
                format!("{} {}", lc(v), lc(pt)),
                items_of_type[ti].clone(),
                false,
            );
        }
    }
    // Tier 5: brand + variant + product type.
    'tier5: for v in VARIANTS {
        for (ti, (pt, _)) in types.iter().enumerate() {
            for &bi in &home_brands[ti] {
                if plans.len() >= spec.queries {
                    break 'tier5;
                }
                let brand = &brands[bi];
                let home: Vec<usize> = items_of_type[ti]
                    .iter()
                    .copied()
                    .filter(|&i| catalog.items()[i].brand == *brand)
                    .collect();
                push(
                    &mut plans,
                    &mut seen,
                    format!("{} {} {}", lc(brand), lc(v), lc(pt)),
                    home,
                    false,
                );
            }
        }
    }
    // Tier 6: pack-size fillers, unbounded.
    let mut pack = 2u64;
    while plans.len() < spec.queries {
        for (ti, (pt, _)) in types.iter().enumerate() {
            if plans.len() >= spec.queries {
                break;
            }
            push(
                &mut plans,
                &mut seen,
                format!("{} {} pack", lc(pt), pack),
                items_of_type[ti].clone(),
                false,
            );
        }
        pack += 1;
    }

    let _ = query_rng.next_u64(); // reserve the stream for future shaping

    // Engagement logs.
    let mixture_for = |text: &str| -> f64 {
        spec.mixture_overrides
            .iter()
            .find(|(q, _)| q == text)
            .map(|(_, m)| *m)
            .unwrap_or(spec.intent_mixture)
            .clamp(0.0, 0.95)
    };

    let mut logs = Vec::new();
    for plan in &plans {
        let m = mixture_for(&plan.text);
        let mut pool = plan.home_items.clone();

        let engaged: Vec<usize> = if plan.spread {
            // One item per product type first, so category queries always
            // cover several types.
            let mut by_type: Vec<usize> = Vec::new();
            let mut seen_types = HashSet::new();
            for &i in &pool {
                if seen_types.insert(catalog.items()[i].product_type.clone()) {
                    by_type.push(i);
                }
            }
            let extra = log_rng.below(3);
            let mut rest: Vec<usize> =
                pool.iter().copied().filter(|i| !by_type.contains(i)).collect();
            log_rng.shuffle(&mut rest);
            by_type.extend(rest.into_iter().take(extra));
            by_type
        } else {
            log_rng.shuffle(&mut pool);
            let n = (3 + log_rng.below(4)).min(pool.len());
            pool.into_iter().take(n).collect()
        };

        let mut home_orders_total = 0u64;
        for &i in &engaged {
            let orders = log_rng.range(20, 120);
            home_orders_total += orders;
            logs.push(EngagementRecord {
                query: plan.text.clone(),
                item_id: catalog.items()[i].item_id.clone(),
                clicks: orders * 2 + log_rng.range(0, 40),
                atc: (orders / 2).max(10) + log_rng.range(0, 10),
                orders,
            });
        }

        if m > 0.0 {
            let off_total = (home_orders_total as f64 * m / (1.0 - m)).round() as u64;
            if off_total >= 5 {
                let k = 1 + log_rng.below(2);
                let home_set: HashSet<usize> = plan.home_items.iter().copied().collect();
                let mut off_items = Vec::new();
                let mut guard = 0;
                while off_items.len() < k && guard < 200 {
                    guard += 1;
                    let i = log_rng.below(catalog.len());
                    if !home_set.contains(&i) && !off_items.contains(&i) {
                        off_items.push(i);
                    }
                }
                let per = (off_total / off_items.len().max(1) as u64).max(10);
                for &i in &off_items {
                    logs.push(EngagementRecord {
                        query: plan.text.clone(),
                        item_id: catalog.items()[i].item_id.clone(),
                        clicks: per * 2,
                        atc: (per / 2).max(10),
                        orders: per,
                    });
                }
            }
        }
    }

    Ok(GeneratedCorpus {
        catalog,
        logs,
        hierarchy,
    })
}
