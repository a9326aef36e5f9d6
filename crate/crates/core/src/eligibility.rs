//! Decides which queries get the grouped experience: extracts per-query
//! intents from engagement, computes the engagement-loss and assortment
//! features, and gates on distribution-derived thresholds.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, AttrKind, Catalog, EngagementRecord};
use crate::error::{Error, Result};

/// A set of attribute constraints expressed by a query, at most one value
/// per attribute kind.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Intent(pub BTreeMap<AttrKind, String>);

impl Intent {
    pub fn new(attrs: impl IntoIterator<Item = (AttrKind, String)>) -> Self {
        Intent(attrs.into_iter().collect())
    }

    pub fn get(&self, kind: AttrKind) -> Option<&str> {
        self.0.get(&kind).map(|s| s.as_str())
    }

    pub fn attrs(&self) -> impl Iterator<Item = (AttrKind, &str)> {
        self.0.iter().map(|(k, v)| (*k, v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Stable human-readable form, e.g. `brand=Great Value,product_type=Milk`.
    pub fn display(&self) -> String {
        self.0
            .iter()
            .map(|(k, v)| format!("{}={}", k.as_str(), v))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// True if the item carries every attribute of this intent.
    pub fn matches(&self, item: &crate::corpus::Item) -> bool {
        self.0.iter().all(|(k, v)| item.attr(*k) == v)
    }
}

/// Per-query intent histogram: order mass per distinct intent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntentProfile {
    pub query: String,
    pub intents: BTreeMap<Intent, u64>,
    pub total_orders: u64,
}

impl IntentProfile {
    pub fn is_empty(&self) -> bool {
        self.intents.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EligibilityFeatures {
    pub engagement_loss: f64,
    pub item_count: usize,
}

/// Break a query into intents from its engaged items. An item contributes
/// the attributes whose normalized value shares a token with the query;
/// with no overlap at all it falls back to its product type.
pub fn extract_intents(
    query: &str,
    catalog: &Catalog,
    logs: &[EngagementRecord],
) -> IntentProfile {
    let qtokens: HashSet<String> = normalize(query).0.into_iter().collect();
    let mut intents: BTreeMap<Intent, u64> = BTreeMap::new();
    let mut total = 0u64;

    for rec in logs.iter().filter(|r| r.query == query) {
        let Some(item) = catalog.get(&rec.item_id) else {
            continue;
        };
        if rec.orders == 0 {
            continue;
        }
        let overlaps = |value: &str| {
            normalize(value)
                .0
                .iter()
                .any(|t| qtokens.contains(t.as_str()))
        };
        let mut attrs: Vec<(AttrKind, String)> = Vec::new();
        if overlaps(&item.brand) {
            attrs.push((AttrKind::Brand, item.brand.clone()));
        }
        if overlaps(&item.product_type) {
            attrs.push((AttrKind::ProductType, item.product_type.clone()));
        }
        if attrs.is_empty() {
            attrs.push((AttrKind::ProductType, item.product_type.clone()));
        }
        *intents.entry(Intent::new(attrs)).or_insert(0) += rec.orders;
        total += rec.orders;
    }

    IntentProfile {
        query: query.to_string(),
        intents,
        total_orders: total,
    }
}

/// Fraction of the query's orders falling outside the selected intents.
pub fn engagement_loss(profile: &IntentProfile, selected: &BTreeSet<Intent>) -> Result<f64> {
    if profile.total_orders == 0 {
        return Err(Error::InvalidInput(format!(
            "query {:?} has no orders",
            profile.query
        )));
    }
    let excluded: u64 = profile
        .intents
        .iter()
        .filter(|(i, _)| !selected.contains(*i))
        .map(|(_, &o)| o)
        .sum();
    Ok(excluded as f64 / profile.total_orders as f64)
}

fn single(intent: &Intent) -> BTreeSet<Intent> {
    let mut s = BTreeSet::new();
    s.insert(intent.clone());
    s
}

/// Size of the intersection of the per-attribute item sets.
pub fn item_count(intent: &Intent, catalog: &Catalog) -> usize {
    let mut sets = intent.attrs().map(|(kind, value)| {
        catalog
            .items_with_attr(kind, value)
            .into_iter()
            .map(|it| it.item_id.as_str())
            .collect::<HashSet<&str>>()
    });
    let Some(first) = sets.next() else { return 0 };
    sets.fold(first, |acc, s| acc.intersection(&s).copied().collect())
        .len()
}

/// Nearest-rank percentile: sort ascending, return the element at rank
/// ceil(p/100 * n) (1-based).
pub fn select_threshold(values: &[f64], percentile: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("empty value list".into()));
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::InvalidInput(format!(
            "percentile {percentile} outside (0, 100]"
        )));
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite threshold input"));
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// A query joins the grouped experience if some single intent keeps the
/// engagement loss at or below `loss_threshold` while carrying at least
/// `count_threshold` items of assortment. Returns the qualifying intent
/// with the most orders, ties broken by its attribute values.
pub fn is_eligible(
    profile: &IntentProfile,
    catalog: &Catalog,
    loss_threshold: f64,
    count_threshold: usize,
) -> (bool, Option<Intent>) {
    if profile.is_empty() {
        return (false, None);
    }
    let mut best: Option<(u64, &Intent)> = None;
    for (intent, &orders) in &profile.intents {
        let loss = engagement_loss(profile, &single(intent)).unwrap_or(1.0);
        if loss > loss_threshold {
            continue;
        }
        if item_count(intent, catalog) < count_threshold {
            continue;
        }
        // BTreeMap iterates intents in ascending lexicographic order, so on
        // equal orders the earlier (lexicographically smaller) intent wins.
        match best {
            Some((bo, _)) if bo >= orders => {}
            _ => best = Some((orders, intent)),
        }
    }
    match best {
        Some((_, intent)) => (true, Some(intent.clone())),
        None => (false, None),
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThresholdConfig {
    /// Percentile of per-query best-intent losses (want low loss).
    pub loss_percentile: f64,
    /// Percentile of intent item counts (want enough assortment).
    pub count_percentile: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            loss_percentile: 20.0,
            count_percentile: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Thresholds {
    pub loss: f64,
    pub count: usize,
}

/// Corpus-wide thresholds from the feature distributions: the loss cut at
/// `loss_percentile` of per-query best single-intent losses, the count cut
/// at `count_percentile` of all intent item counts.
pub fn compute_thresholds(
    catalog: &Catalog,
    logs: &[EngagementRecord],
    config: &ThresholdConfig,
) -> Result<Thresholds> {
    let queries = distinct_queries(logs);
    let mut best_losses = Vec::new();
    let mut counts = Vec::new();
    for q in &queries {
        let profile = extract_intents(q, catalog, logs);
        if profile.is_empty() {
            continue;
        }
        let mut best = f64::INFINITY;
        for intent in profile.intents.keys() {
            let loss = engagement_loss(&profile, &single(intent))?;
            best = best.min(loss);
            counts.push(item_count(intent, catalog) as f64);
        }
        best_losses.push(best);
    }
    if best_losses.is_empty() {
        return Err(Error::InvalidInput(
            "no queries with engagement; cannot derive thresholds".into(),
        ));
    }
    Ok(Thresholds {
        loss: select_threshold(&best_losses, config.loss_percentile)?,
        count: select_threshold(&counts, config.count_percentile)?.round() as usize,
    })
}

/// Distinct queries in first-seen order.
pub fn distinct_queries(logs: &[EngagementRecord]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for r in logs {
        if seen.insert(r.query.as_str()) {
            out.push(r.query.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Item;

    fn item(id: &str, brand: &str, pt: &str) -> Item {
        Item {
            item_id: id.into(),
            title: format!("{brand} {pt}"),
            brand: brand.into(),
            product_type: pt.into(),
            popularity: 0.5,
            sales: 1,
        }
    }

    fn rec(query: &str, item_id: &str, orders: u64) -> EngagementRecord {
        EngagementRecord {
            query: query.into(),
            item_id: item_id.into(),
            clicks: orders,
            atc: orders,
            orders,
        }
    }

    fn milk_catalog() -> Catalog {
        Catalog::new(vec![
            item("i1", "Great Value", "Milk"),
            item("i2", "Great Value", "Milk"),
            item("i3", "Sunny Farm", "Milk"),
            item("i4", "Sunny Farm", "Juice"),
        ])
        .unwrap()
    }

    #[test]
    fn extract_brand_and_type_overlap() {
        let catalog = milk_catalog();
        let logs = vec![rec("great value milk", "i1", 10)];
        let p = extract_intents("great value milk", &catalog, &logs);
        let expected = Intent::new([
            (AttrKind::Brand, "Great Value".to_string()),
            (AttrKind::ProductType, "Milk".to_string()),
        ]);
        assert_eq!(p.intents.get(&expected), Some(&10));
        assert_eq!(p.total_orders, 10);
    }

    #[test]
    fn extract_no_engagement_gives_empty_profile() {
        let catalog = milk_catalog();
        let p = extract_intents("nothing", &catalog, &[]);
        assert!(p.is_empty());
    }

    #[test]
    fn extract_aggregates_per_intent() {
        let catalog = milk_catalog();
        // "milk" has no brand token: both rows collapse to product-type intents.
        let logs = vec![
            rec("milk", "i1", 50),
            rec("milk", "i3", 40),
            rec("milk", "i4", 10),
        ];
        let p = extract_intents("milk", &catalog, &logs);
        assert_eq!(p.intents.len(), 2);
        let milk = Intent::new([(AttrKind::ProductType, "Milk".to_string())]);
        let juice = Intent::new([(AttrKind::ProductType, "Juice".to_string())]);
        assert_eq!(p.intents.get(&milk), Some(&90));
        assert_eq!(p.intents.get(&juice), Some(&10));
    }

    #[test]
    fn extract_fallback_to_product_type() {
        let catalog = milk_catalog();
        let logs = vec![rec("breakfast drink", "i4", 5)];
        let p = extract_intents("breakfast drink", &catalog, &logs);
        let juice = Intent::new([(AttrKind::ProductType, "Juice".to_string())]);
        assert_eq!(p.intents.get(&juice), Some(&5));
    }

    fn two_intent_profile(a_orders: u64, b_orders: u64) -> (IntentProfile, Intent, Intent) {
        let a = Intent::new([(AttrKind::ProductType, "A".to_string())]);
        let b = Intent::new([(AttrKind::ProductType, "B".to_string())]);
        let mut intents = BTreeMap::new();
        intents.insert(a.clone(), a_orders);
        intents.insert(b.clone(), b_orders);
        (
            IntentProfile {
                query: "q".into(),
                intents,
                total_orders: a_orders + b_orders,
            },
            a,
            b,
        )
    }

    #[test]
    fn engagement_loss_examples() {
        let (p, a, b) = two_intent_profile(90, 10);
        assert!((engagement_loss(&p, &single(&a)).unwrap() - 0.10).abs() < 1e-12);
        let all: BTreeSet<Intent> = [a, b].into_iter().collect();
        assert_eq!(engagement_loss(&p, &all).unwrap(), 0.0);
        assert_eq!(engagement_loss(&p, &BTreeSet::new()).unwrap(), 1.0);
    }

    #[test]
    fn engagement_loss_zero_orders_errors() {
        let p = IntentProfile {
            query: "q".into(),
            intents: BTreeMap::new(),
            total_orders: 0,
        };
        assert!(engagement_loss(&p, &BTreeSet::new()).is_err());
    }

    #[test]
    fn loss_complement_sums_to_one() {
        let (p, a, b) = two_intent_profile(73, 27);
        let la = engagement_loss(&p, &single(&a)).unwrap();
        let lb = engagement_loss(&p, &single(&b)).unwrap();
        assert!((la + lb - 1.0).abs() < 1e-12);
    }

    #[test]
    fn item_count_intersection() {
        let catalog = milk_catalog();
        let gv_milk = Intent::new([
            (AttrKind::Brand, "Great Value".to_string()),
            (AttrKind::ProductType, "Milk".to_string()),
        ]);
        assert_eq!(item_count(&gv_milk, &catalog), 2);
        let milk = Intent::new([(AttrKind::ProductType, "Milk".to_string())]);
        assert_eq!(item_count(&milk, &catalog), 3);
        let unseen = Intent::new([(AttrKind::Brand, "Nobody".to_string())]);
        assert_eq!(item_count(&unseen, &catalog), 0);
    }

    #[test]
    fn superset_intent_never_larger() {
        let catalog = milk_catalog();
        let sub = Intent::new([(AttrKind::ProductType, "Milk".to_string())]);
        let sup = Intent::new([
            (AttrKind::Brand, "Great Value".to_string()),
            (AttrKind::ProductType, "Milk".to_string()),
        ]);
        assert!(item_count(&sup, &catalog) <= item_count(&sub, &catalog));
    }

    #[test]
    fn select_threshold_examples() {
        let v: Vec<f64> = (1..=10).map(|x| x as f64).collect();
        assert_eq!(select_threshold(&v, 50.0).unwrap(), 5.0);
        assert_eq!(select_threshold(&[7.0], 13.0).unwrap(), 7.0);
        assert_eq!(select_threshold(&[3.0, 1.0, 2.0], 100.0).unwrap(), 3.0);
        assert!(select_threshold(&[], 50.0).is_err());
        assert!(select_threshold(&[1.0], 0.0).is_err());
    }

    #[test]
    fn eligibility_examples() {
        let catalog = milk_catalog();
        let (p, a, _) = two_intent_profile(95, 5);
        // item_count of product-type "A" is 0 in this catalog, so use 0 counts.
        let (ok, chosen) = is_eligible(&p, &catalog, 0.1, 0);
        assert!(ok);
        assert_eq!(chosen, Some(a));

        // loss threshold 0 with two nonzero intents: no single intent qualifies.
        let (ok, chosen) = is_eligible(&p, &catalog, 0.0, 0);
        assert!(!ok);
        assert!(chosen.is_none());

        // empty profile
        let empty = IntentProfile::default();
        assert_eq!(is_eligible(&empty, &catalog, 1.0, 0), (false, None));
    }

    #[test]
    fn loss_monotone_as_selection_grows() {
        let mut rng = crate::rng::Rng::seed_from(31);
        for _ in 0..200 {
            let n = 1 + rng.below(6);
            let mut intents = BTreeMap::new();
            for i in 0..n {
                intents.insert(
                    Intent::new([(AttrKind::ProductType, format!("T{i}"))]),
                    rng.range(1, 100),
                );
            }
            let profile = IntentProfile {
                query: "q".into(),
                intents: intents.clone(),
                total_orders: intents.values().sum(),
            };
            let keys: Vec<Intent> = intents.keys().cloned().collect();
            let mut selected = BTreeSet::new();
            let mut prev = engagement_loss(&profile, &selected).unwrap();
            for key in keys {
                selected.insert(key);
                let next = engagement_loss(&profile, &selected).unwrap();
                assert!(next <= prev + 1e-12, "loss increased: {prev} -> {next}");
                prev = next;
            }
            assert_eq!(prev, 0.0);
        }
    }

    #[test]
    fn eligibility_matches_single_intent_enumeration() {
        // mirror: enumerate single intents directly, independent of the
        // is_eligible candidate loop
        let catalog = milk_catalog();
        let mut rng = crate::rng::Rng::seed_from(77);
        let values = ["Great Value", "Sunny Farm", "Milk", "Juice", "Nobody"];
        for _ in 0..300 {
            let n = 1 + rng.below(4);
            let mut intents = BTreeMap::new();
            for _ in 0..n {
                let v = *rng.choose(&values);
                let kind = if v == "Milk" || v == "Juice" {
                    AttrKind::ProductType
                } else {
                    AttrKind::Brand
                };
                intents.insert(Intent::new([(kind, v.to_string())]), rng.range(1, 50));
            }
            let profile = IntentProfile {
                query: "q".into(),
                intents: intents.clone(),
                total_orders: intents.values().sum(),
            };
            let loss_thr = rng.f64() * 0.5;
            let count_thr = rng.below(4);

            let got = is_eligible(&profile, &catalog, loss_thr, count_thr);

            let mut best: Option<(u64, Intent)> = None;
            for (intent, &orders) in &profile.intents {
                let excluded = profile.total_orders - orders;
                let loss = excluded as f64 / profile.total_orders as f64;
                let count = catalog
                    .items()
                    .iter()
                    .filter(|it| intent.attrs().all(|(k, v)| it.attr(k) == v))
                    .count();
                if loss <= loss_thr && count >= count_thr {
                    match &best {
                        Some((bo, _)) if *bo >= orders => {}
                        _ => best = Some((orders, intent.clone())),
                    }
                }
            }
            let want = match best {
                Some((_, i)) => (true, Some(i)),
                None => (false, None),
            };
            assert_eq!(got, want);
        }
    }

    #[test]
    fn eligibility_count_gate() {
        let catalog = milk_catalog();
        let milk = Intent::new([(AttrKind::ProductType, "Milk".to_string())]);
        let mut intents = BTreeMap::new();
        intents.insert(milk.clone(), 100u64);
        let p = IntentProfile {
            query: "milk".into(),
            intents,
            total_orders: 100,
        };
        assert_eq!(is_eligible(&p, &catalog, 0.5, 3), (true, Some(milk)));
        assert_eq!(is_eligible(&p, &catalog, 0.5, 4), (false, None));
    }
}
