//! Maps queries onto the product-type hierarchy: skip-gram term
//! embeddings feed one classifier per level, and a thresholded top-down
//! traversal with support gating turns level scores into hierarchy paths.

pub mod classifier;
pub mod skipgram;

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, Catalog, EngagementRecord, HierarchyNode};
use crate::eligibility::{distinct_queries, select_threshold};
use crate::error::{Error, Result};
use crate::linalg::cosine;

pub use classifier::{forward, train_level, LevelClassifier, LevelTrainConfig};
pub use skipgram::{train_term_embeddings, SkipGramConfig, TermEmbeddings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperConfig {
    pub embed: SkipGramConfig,
    pub level: LevelTrainConfig,
    /// Engagement vs semantic blend in the soft targets.
    pub alpha: f64,
    /// Entropy vs specificity blend in the traversal support.
    pub alpha_support: f64,
    pub support_floor: f64,
    /// Percentile of the training score distribution used as each level's
    /// keep-threshold; floored at 100 * (1 - 1/classes) for wide levels.
    pub threshold_percentile: f64,
}

impl Default for MapperConfig {
    fn default() -> Self {
        MapperConfig {
            // Engagement-only targets by default: on corpora this small the
            // query-to-centroid cosines are close to uniform over classes,
            // and blending them in flattens the trained score distribution
            // until thresholding turns into a coin flip.
            alpha: 1.0,
            embed: SkipGramConfig::default(),
            level: LevelTrainConfig::default(),
            alpha_support: 0.5,
            support_floor: 0.35,
            threshold_percentile: 80.0,
        }
    }
}

/// Classes at one hierarchy depth plus the leaf-to-class projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub depth: usize,
    pub classes: Vec<String>,
    /// product type (leaf) -> class index at this depth
    pub pt_to_class: HashMap<String, usize>,
}

impl LevelSpec {
    pub fn from_hierarchy(root: &HierarchyNode, depth: usize) -> LevelSpec {
        let classes: Vec<String> = root
            .at_depth(depth)
            .into_iter()
            .map(|n| n.name.clone())
            .collect();
        let class_index: HashMap<&str, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let mut pt_to_class = HashMap::new();
        for leaf in root.leaves() {
            if let Some(path) = root.path_to(leaf) {
                if let Some(ancestor) = path.get(depth) {
                    if let Some(&ci) = class_index.get(ancestor.as_str()) {
                        pt_to_class.insert(leaf.to_string(), ci);
                    }
                }
            }
        }
        LevelSpec {
            depth,
            classes,
            pt_to_class,
        }
    }
}

/// Soft target over a level's classes: alpha * engagement share plus
/// (1 - alpha) * clamped cosine between the query vector and the class's
/// item-title centroid, normalized to sum one (all-zero if no signal).
pub fn build_target(
    query: &str,
    level: &LevelSpec,
    catalog: &Catalog,
    logs: &[EngagementRecord],
    embeddings: &TermEmbeddings,
    alpha: f64,
) -> Vec<f64> {
    let c = level.classes.len();
    let mut engagement = vec![0.0; c];
    let mut total_orders = 0.0;
    for rec in logs.iter().filter(|r| r.query == query) {
        let Some(item) = catalog.get(&rec.item_id) else {
            continue;
        };
        if let Some(&ci) = level.pt_to_class.get(&item.product_type) {
            engagement[ci] += rec.orders as f64;
            total_orders += rec.orders as f64;
        }
    }
    if total_orders > 0.0 {
        for e in &mut engagement {
            *e /= total_orders;
        }
    }

    let qvec = embeddings.mean_vector(&normalize(query).0);
    let mut semantic = vec![0.0; c];
    if qvec.iter().any(|&x| x != 0.0) {
        let mut centroids = vec![vec![0.0; embeddings.dims]; c];
        let mut counts = vec![0usize; c];
        for item in catalog.items() {
            if let Some(&ci) = level.pt_to_class.get(&item.product_type) {
                let tv = embeddings.mean_vector(&normalize(&item.title).0);
                for (acc, v) in centroids[ci].iter_mut().zip(&tv) {
                    *acc += v;
                }
                counts[ci] += 1;
            }
        }
        for (ci, centroid) in centroids.iter_mut().enumerate() {
            if counts[ci] > 0 {
                for v in centroid.iter_mut() {
                    *v /= counts[ci] as f64;
                }
                semantic[ci] = cosine(&qvec, centroid).max(0.0);
            }
        }
    }

    let mut target: Vec<f64> = engagement
        .iter()
        .zip(&semantic)
        .map(|(&e, &s)| alpha * e + (1.0 - alpha) * s)
        .collect();
    let sum: f64 = target.iter().sum();
    if sum > 0.0 {
        for t in &mut target {
            *t /= sum;
        }
    }
    target
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapperModel {
    pub embeddings: TermEmbeddings,
    pub levels: Vec<LevelClassifier>,
    pub level_specs: Vec<LevelSpec>,
    pub hierarchy: HierarchyNode,
    pub config: MapperConfig,
}

fn token_sequence(embeddings: &TermEmbeddings, query: &str) -> Vec<Vec<f64>> {
    normalize(query)
        .0
        .iter()
        .map(|t| embeddings.vector(t))
        .collect()
}

/// Class probabilities for a query at one level; uniform when the query
/// normalizes to nothing.
pub fn predict_level(
    classifier: &LevelClassifier,
    embeddings: &TermEmbeddings,
    query: &str,
) -> Vec<f64> {
    forward(
        &classifier.filters,
        &classifier.softmax_w,
        &token_sequence(embeddings, query),
    )
}

/// Train embeddings plus one classifier per hierarchy level, then fix
/// each level's keep-threshold from its training score distribution.
pub fn train_mapper(
    catalog: &Catalog,
    logs: &[EngagementRecord],
    hierarchy: &HierarchyNode,
    config: &MapperConfig,
) -> Result<MapperModel> {
    let queries = distinct_queries(logs);
    if queries.is_empty() {
        return Err(Error::InvalidInput("no queries to train the mapper on".into()));
    }

    // Embedding corpus: each engagement pairs a query with the title it
    // engaged, so query terms co-occur with catalog vocabulary; plain
    // titles follow. A bare query list would leave one-term queries
    // without any context window.
    let mut sentences: Vec<Vec<String>> = Vec::new();
    for rec in logs {
        if let Some(item) = catalog.get(&rec.item_id) {
            let mut s = normalize(&rec.query).0;
            s.extend(normalize(&item.title).0);
            sentences.push(s);
        }
    }
    for item in catalog.items() {
        sentences.push(normalize(&item.title).0);
    }
    sentences.retain(|s| !s.is_empty());
    let embeddings = train_term_embeddings(&sentences, &config.embed)?;

    let depth = hierarchy.depth();
    if depth < 2 {
        return Err(Error::InvalidInput("hierarchy has no levels below the root".into()));
    }

    let mut levels = Vec::new();
    let mut level_specs = Vec::new();
    for d in 1..depth {
        let spec = LevelSpec::from_hierarchy(hierarchy, d);
        if spec.classes.is_empty() {
            continue;
        }
        let data: Vec<(Vec<Vec<f64>>, Vec<f64>)> = queries
            .iter()
            .map(|q| {
                (
                    token_sequence(&embeddings, q),
                    build_target(q, &spec, catalog, logs, &embeddings, config.alpha),
                )
            })
            .collect();
        let mut clf = train_level(
            d,
            spec.classes.clone(),
            &data,
            embeddings.dims,
            &config.level,
        );

        // Keep-threshold from the training score distribution. With C
        // classes the confident predictions occupy roughly the top 1/C of
        // all scores, so the percentile floor scales with the class count
        // (it equals the configured default at five classes).
        let mut scores = Vec::new();
        for (seq, _) in &data {
            scores.extend(forward(&clf.filters, &clf.softmax_w, seq));
        }
        let c = spec.classes.len() as f64;
        let percentile = config
            .threshold_percentile
            .max(100.0 * (1.0 - 1.0 / c))
            .min(100.0);
        clf.threshold = select_threshold(&scores, percentile)?;
        levels.push(clf);
        level_specs.push(spec);
    }

    Ok(MapperModel {
        embeddings,
        levels,
        level_specs,
        hierarchy: hierarchy.clone(),
        config: config.clone(),
    })
}

/// Normalized entropy of a probability vector, 0 for degenerate sizes.
fn normalized_entropy(probs: &[f64]) -> f64 {
    if probs.len() <= 1 {
        return 0.0;
    }
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    h / (probs.len() as f64).ln()
}

/// Support for accepting a level: confidence (one minus normalized
/// entropy) blended with specificity (fraction of query tokens covered
/// by the kept class names).
fn support(
    probs: &[f64],
    kept_classes: &[&str],
    query_tokens: &HashSet<String>,
    alpha_support: f64,
) -> f64 {
    let confidence = 1.0 - normalized_entropy(probs);
    let class_tokens: HashSet<String> = kept_classes
        .iter()
        .flat_map(|c| normalize(c).0)
        .collect();
    let specificity = if query_tokens.is_empty() {
        0.0
    } else {
        query_tokens
            .iter()
            .filter(|t| class_tokens.contains(*t))
            .count() as f64
            / query_tokens.len() as f64
    };
    alpha_support * confidence + (1.0 - alpha_support) * specificity
}

impl MapperModel {
    /// Top-down traversal: keep classes above each level's threshold
    /// (children of the previous frontier only), descending while the
    /// support stays at or above the floor. Returns root-to-node paths
    /// for the final frontier; empty when level 1 is never accepted.
    pub fn traverse(&self, query: &str) -> Vec<Vec<String>> {
        let query_tokens: HashSet<String> = normalize(query).0.into_iter().collect();
        let mut frontier: Vec<String> = Vec::new();

        for (li, clf) in self.levels.iter().enumerate() {
            let probs = predict_level(clf, &self.embeddings, query);
            let mut kept: Vec<&str> = clf
                .classes
                .iter()
                .enumerate()
                .filter(|(_, _)| true)
                .filter_map(|(ci, class)| (probs[ci] >= clf.threshold).then_some(class.as_str()))
                .collect();

            if li > 0 {
                // p.qc: children of the previous frontier only.
                kept.retain(|class| {
                    self.hierarchy
                        .path_to(class)
                        .and_then(|path| path.get(li).cloned())
                        .map(|parent| frontier.contains(&parent))
                        .unwrap_or(false)
                });
            }

            if kept.is_empty() {
                break;
            }
            let s = support(&probs, &kept, &query_tokens, self.config.alpha_support);
            if s < self.config.support_floor {
                break;
            }
            frontier = kept.into_iter().map(str::to_string).collect();
        }

        frontier
            .iter()
            .filter_map(|class| self.hierarchy.path_to(class))
            .collect()
    }
}

const EMB_MAGIC: &[u8; 4] = b"SREM";
const EMB_VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Term embeddings as a small binary container: magic, version, dims,
/// vocab (length-prefixed UTF-8), then the f64 matrix row-major LE.
pub fn save_embeddings(path: &Path, emb: &TermEmbeddings) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(EMB_MAGIC)?;
    write_u32(&mut f, EMB_VERSION)?;
    write_u32(&mut f, emb.dims as u32)?;
    write_u32(&mut f, emb.vocab.len() as u32)?;
    for term in &emb.vocab {
        let bytes = term.as_bytes();
        write_u32(&mut f, bytes.len() as u32)?;
        f.write_all(bytes)?;
    }
    for v in &emb.vectors.data {
        f.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_embeddings(path: &Path) -> Result<TermEmbeddings> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    let version = read_u32(&mut f)?;
    if &magic != EMB_MAGIC || version != EMB_VERSION {
        return Err(Error::Parse {
            file: path.display().to_string(),
            msg: "bad embeddings container".into(),
        });
    }
    let dims = read_u32(&mut f)? as usize;
    let vocab_len = read_u32(&mut f)? as usize;
    let mut vocab = Vec::with_capacity(vocab_len);
    for _ in 0..vocab_len {
        let len = read_u32(&mut f)? as usize;
        let mut buf = vec![0u8; len];
        f.read_exact(&mut buf)?;
        vocab.push(String::from_utf8(buf).map_err(|e| Error::Parse {
            file: path.display().to_string(),
            msg: e.to_string(),
        })?);
    }
    let mut data = vec![0.0f64; vocab_len * dims];
    for v in &mut data {
        let mut buf = [0u8; 8];
        f.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(TermEmbeddings::new(
        vocab,
        crate::linalg::Mat {
            rows: vocab_len,
            cols: dims,
            data,
        },
    ))
}

#[derive(Serialize, Deserialize)]
struct MapperMeta {
    config: MapperConfig,
    hierarchy: HierarchyNode,
    level_specs: Vec<LevelSpec>,
    level_count: usize,
}

/// Model directory: embeddings.bin, level_<l>.json, mapper.json.
pub fn save_mapper(dir: &Path, model: &MapperModel) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_embeddings(&dir.join("embeddings.bin"), &model.embeddings)?;
    for clf in &model.levels {
        let f = std::fs::File::create(dir.join(format!("level_{}.json", clf.level)))?;
        serde_json::to_writer(f, clf)?;
    }
    let meta = MapperMeta {
        config: model.config.clone(),
        hierarchy: model.hierarchy.clone(),
        level_specs: model.level_specs.clone(),
        level_count: model.levels.len(),
    };
    let f = std::fs::File::create(dir.join("mapper.json"))?;
    serde_json::to_writer(f, &meta)?;
    Ok(())
}

pub fn load_mapper(dir: &Path) -> Result<MapperModel> {
    let f = std::fs::File::open(dir.join("mapper.json"))?;
    let meta: MapperMeta = serde_json::from_reader(f)?;
    let mut embeddings = load_embeddings(&dir.join("embeddings.bin"))?;
    embeddings.rebuild_index();
    let mut levels = Vec::with_capacity(meta.level_count);
    for spec in &meta.level_specs {
        let path = dir.join(format!("level_{}.json", spec.depth));
        let f = std::fs::File::open(&path)?;
        levels.push(serde_json::from_reader(f)?);
    }
    Ok(MapperModel {
        embeddings,
        levels,
        level_specs: meta.level_specs,
        hierarchy: meta.hierarchy,
        config: meta.config,
    })
}
