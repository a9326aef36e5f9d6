//! Baseline ranked-list engine: an inverted index over item titles with
//! conjunctive attribute filters and a weighted feature score on top of
//! BM25 text relevance.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, AttrKind, Catalog, EngagementRecord, Item};
use crate::error::{Error, Result};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;
pub const DEFAULT_LIMIT: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankWeights {
    pub text: f64,
    pub click: f64,
    pub popularity: f64,
    pub brand_match: f64,
    pub sales: f64,
}

impl Default for RankWeights {
    fn default() -> Self {
        RankWeights {
            text: 1.0,
            click: 0.3,
            popularity: 0.2,
            brand_match: 0.5,
            sales: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RankFeatures {
    pub text_score: f64,
    pub click_engagement: f64,
    pub popularity: f64,
    pub brand_match: f64,
    pub sales: f64,
}

impl RankFeatures {
    pub fn combined(&self, w: &RankWeights) -> f64 {
        w.text * self.text_score
            + w.click * self.click_engagement
            + w.popularity * self.popularity
            + w.brand_match * self.brand_match
            + w.sales * self.sales
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub item_id: String,
    pub title: String,
    pub score: f64,
    pub features: RankFeatures,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvertedIndex {
    /// term -> postings sorted by item ordinal: (ordinal, term frequency)
    postings: BTreeMap<String, Vec<(usize, u32)>>,
    /// (kind, value) -> item ordinals. Tuple keys don't fit JSON maps,
    /// so this field round-trips as an entry list.
    #[serde(with = "attr_entries")]
    attributes: BTreeMap<(AttrKind, String), Vec<usize>>,
    doc_lengths: Vec<usize>,
    items: Vec<Item>,
    avg_doc_len: f64,
}

mod attr_entries {
    use super::*;
    use serde::{Deserializer, Serializer};

    type EntryRefs<'a> = Vec<(&'a AttrKind, &'a String, &'a Vec<usize>)>;

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(AttrKind, String), Vec<usize>>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let entries: EntryRefs<'_> = map.iter().map(|((k, v), ords)| (k, v, ords)).collect();
        serde::Serialize::serialize(&entries, s)
    }

    type AttrMap = BTreeMap<(AttrKind, String), Vec<usize>>;

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<AttrMap, D::Error> {
        let entries: Vec<(AttrKind, String, Vec<usize>)> = serde::Deserialize::deserialize(d)?;
        Ok(entries
            .into_iter()
            .map(|(k, v, ords)| ((k, v), ords))
            .collect())
    }
}

impl InvertedIndex {
    pub fn doc_count(&self) -> usize {
        self.items.len()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn postings(&self, term: &str) -> Option<&[(usize, u32)]> {
        self.postings.get(term).map(|v| v.as_slice())
    }

    pub fn items_with_attribute(&self, kind: AttrKind, value: &str) -> Vec<&Item> {
        self.attributes
            .get(&(kind, value.to_string()))
            .map(|ords| ords.iter().map(|&o| &self.items[o]).collect())
            .unwrap_or_default()
    }

    fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map_or(0, |p| p.len()) as f64;
        let n = self.doc_count() as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn bm25_term(&self, tf: u32, doc_len: usize, idf: f64) -> f64 {
        let tf = tf as f64;
        let norm = 1.0 - BM25_B + BM25_B * doc_len as f64 / self.avg_doc_len;
        idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm)
    }
}

/// Index a catalog: complete title postings plus brand and product-type
/// attribute sets. Duplicate item ids are rejected by construction of
/// [`Catalog`]; a raw item list with duplicates fails here too.
pub fn build_index(catalog: &Catalog) -> Result<InvertedIndex> {
    let items: Vec<Item> = catalog.items().to_vec();
    {
        let mut seen = HashSet::new();
        for it in &items {
            if !seen.insert(it.item_id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate item_id {}",
                    it.item_id
                )));
            }
        }
    }

    let mut postings: BTreeMap<String, Vec<(usize, u32)>> = BTreeMap::new();
    let mut attributes: BTreeMap<(AttrKind, String), Vec<usize>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(items.len());

    for (ord, item) in items.iter().enumerate() {
        let tokens = normalize(&item.title).0;
        doc_lengths.push(tokens.len());
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in &tokens {
            *tf.entry(t.as_str()).or_insert(0) += 1;
        }
        for (term, count) in tf {
            postings.entry(term.to_string()).or_default().push((ord, count));
        }
        attributes
            .entry((AttrKind::Brand, item.brand.clone()))
            .or_default()
            .push(ord);
        attributes
            .entry((AttrKind::ProductType, item.product_type.clone()))
            .or_default()
            .push(ord);
    }

    let avg_doc_len = if items.is_empty() {
        1.0
    } else {
        (doc_lengths.iter().sum::<usize>() as f64 / items.len() as f64).max(1.0)
    };

    Ok(InvertedIndex {
        postings,
        attributes,
        doc_lengths,
        items,
        avg_doc_len,
    })
}

/// Ranked retrieval: candidates match at least one query term and every
/// filter; scored by the weighted feature sum (click engagement is zero
/// at this stage, see [`rerank`]); ordered score-descending with item_id
/// as the tiebreak; truncated to `limit`.
pub fn search(
    index: &InvertedIndex,
    query: &str,
    filters: &[(AttrKind, String)],
    limit: usize,
    weights: &RankWeights,
) -> Vec<SearchHit> {
    let qtokens = normalize(query).0;
    let distinct: Vec<&str> = {
        let mut seen = HashSet::new();
        qtokens
            .iter()
            .map(|s| s.as_str())
            .filter(|t| seen.insert(*t))
            .collect()
    };
    if distinct.is_empty() {
        return Vec::new();
    }

    // Text scores via postings traversal.
    let mut text: HashMap<usize, f64> = HashMap::new();
    for term in &distinct {
        if let Some(plist) = index.postings.get(*term) {
            let idf = index.idf(term);
            for &(ord, tf) in plist {
                *text.entry(ord).or_insert(0.0) +=
                    index.bm25_term(tf, index.doc_lengths[ord], idf);
            }
        }
    }

    let qset: HashSet<&str> = distinct.iter().copied().collect();
    let mut hits: Vec<SearchHit> = text
        .into_iter()
        .filter(|(ord, _)| {
            let item = &index.items[*ord];
            filters.iter().all(|(k, v)| item.attr(*k) == v)
        })
        .map(|(ord, text_score)| {
            let item = &index.items[ord];
            let brand_tokens = normalize(&item.brand).0;
            let brand_match = if !brand_tokens.is_empty()
                && brand_tokens.iter().all(|t| qset.contains(t.as_str()))
            {
                1.0
            } else {
                0.0
            };
            let features = RankFeatures {
                text_score,
                click_engagement: 0.0,
                popularity: item.popularity,
                brand_match,
                sales: item.sales as f64,
            };
            SearchHit {
                item_id: item.item_id.clone(),
                title: item.title.clone(),
                score: features.combined(weights),
                features,
            }
        })
        .collect();

    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    hits.truncate(limit);
    hits
}

/// Re-sort candidates by the weighted feature sum with click engagement
/// refreshed from the logs for this query. Stable: equal scores keep the
/// input order, so all-zero weights are the identity.
pub fn rerank(
    candidates: &[SearchHit],
    query: &str,
    logs: &[EngagementRecord],
    weights: &RankWeights,
) -> Vec<SearchHit> {
    let clicks: HashMap<&str, u64> = logs
        .iter()
        .filter(|r| r.query == query)
        .map(|r| (r.item_id.as_str(), r.clicks))
        .collect();
    let mut rescored: Vec<SearchHit> = candidates
        .iter()
        .map(|hit| {
            let mut features = hit.features;
            features.click_engagement = clicks.get(hit.item_id.as_str()).copied().unwrap_or(0) as f64;
            SearchHit {
                score: features.combined(weights),
                features,
                ..hit.clone()
            }
        })
        .collect();
    rescored.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    rescored
}

const INDEX_MAGIC: &str = "SRIX";
const INDEX_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct IndexFile {
    magic: String,
    version: u32,
    index: InvertedIndex,
}

/// Persist the index into a directory as a versioned container.
pub fn save_index(dir: &Path, index: &InvertedIndex) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let f = std::fs::File::create(dir.join("index.json"))?;
    serde_json::to_writer(
        f,
        &IndexFile {
            magic: INDEX_MAGIC.into(),
            version: INDEX_VERSION,
            index: index.clone(),
        },
    )?;
    Ok(())
}

pub fn load_index(dir: &Path) -> Result<InvertedIndex> {
    let path = dir.join("index.json");
    let f = std::fs::File::open(&path)?;
    let file: IndexFile = serde_json::from_reader(f)?;
    if file.magic != INDEX_MAGIC || file.version != INDEX_VERSION {
        return Err(Error::Parse {
            file: path.display().to_string(),
            msg: format!("unsupported index container {}/{}", file.magic, file.version),
        });
    }
    Ok(file.index)
}
