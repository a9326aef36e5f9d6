//! Latent node representations for the product graph: a two-layer
//! graph-convolution encoder with an inner-product decoder, trained to
//! reconstruct the adjacency. Decoder scores between same-kind attribute
//! nodes become the graph's lateral relations.

pub mod train;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::AttrKind;
use crate::error::{Error, Result};
use crate::graph::{NodeKind, ProductGraph};
use crate::linalg::{cosine, sigmoid, Mat};

pub use train::{edge_auc, reconstruction_loss, train, LossGrads};

/// Initial node representations: hashed character n-grams of node keys,
/// rows L2-normalized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub x: Mat,
    pub hash_dims: usize,
    pub ngram_range: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub neg_samples_per_edge: usize,
    pub seed: u64,
    pub hidden: usize,
    pub latent: usize,
    pub variational: bool,
    pub kl_weight: f64,
    pub hash_dims: usize,
    pub ngram_range: (usize, usize),
    /// Keep the raw adjacency in the inner propagation instead of the
    /// normalized one.
    pub raw_inner_adjacency: bool,
    /// Score every node pair instead of sampling negatives. Only sensible
    /// for graphs up to a couple hundred nodes.
    pub dense_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.5,
            neg_samples_per_edge: 1,
            seed: 42,
            hidden: 32,
            latent: 16,
            variational: false,
            kl_weight: 0.0,
            hash_dims: 64,
            ngram_range: (3, 5),
            raw_inner_adjacency: false,
            dense_loss: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("neg_samples_per_edge", self.neg_samples_per_edge),
            ("hidden", self.hidden),
            ("latent", self.latent),
            ("hash_dims", self.hash_dims),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.kl_weight < 0.0 {
            return Err(Error::Config("kl_weight must be nonnegative".into()));
        }
        if self.ngram_range.0 == 0 || self.ngram_range.0 > self.ngram_range.1 {
            return Err(Error::Config(format!(
                "bad ngram range {:?}",
                self.ngram_range
            )));
        }
        Ok(())
    }
}

/// Trained encoder: weights, the normalized adjacency it was trained on,
/// and the latent matrix (the mean head in variational mode).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderState {
    pub w0: Mat,
    pub w1: Mat,
    pub w1_logvar: Option<Mat>,
    pub a_norm: Mat,
    pub z: Mat,
    pub config: TrainConfig,
    pub node_keys: Vec<String>,
    pub loss_trace: Vec<f64>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

fn hashed_ngram_row(key: &str, hash_dims: usize, (lo, hi): (usize, usize)) -> Vec<f64> {
    let padded: Vec<char> = format!("<{key}>").chars().collect();
    let mut row = vec![0.0; hash_dims];
    let mut any = false;
    for n in lo..=hi.min(padded.len()) {
        for w in padded.windows(n) {
            let gram: String = w.iter().collect();
            row[(fnv1a(gram.as_bytes()) % hash_dims as u64) as usize] += 1.0;
            any = true;
        }
    }
    if !any {
        // Key shorter than the smallest n-gram: hash the padded key whole.
        let gram: String = padded.iter().collect();
        row[(fnv1a(gram.as_bytes()) % hash_dims as u64) as usize] += 1.0;
    }
    let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut row {
            *x /= norm;
        }
    }
    row
}

/// Subword-hash features for every node, in node order.
pub fn init_features(
    graph: &ProductGraph,
    hash_dims: usize,
    ngram_range: (usize, usize),
) -> FeatureMatrix {
    let rows: Vec<Vec<f64>> = graph
        .nodes()
        .iter()
        .map(|n| hashed_ngram_row(&n.node_ref.key, hash_dims, ngram_range))
        .collect();
    FeatureMatrix {
        x: Mat::from_rows(&rows),
        hash_dims,
        ngram_range,
    }
}

/// Symmetric degree normalization with self-loops:
/// D^{-1/2} (A + I) D^{-1/2}, where D is the degree of A + I.
pub fn normalize_adjacency(a: &Mat) -> Mat {
    let n = a.rows;
    let mut with_loops = a.clone();
    for i in 0..n {
        with_loops[(i, i)] += 1.0;
    }
    let inv_sqrt_deg: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = with_loops.row(i).iter().sum();
            1.0 / d.sqrt()
        })
        .collect();
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = inv_sqrt_deg[i] * with_loops[(i, j)] * inv_sqrt_deg[j];
        }
    }
    out
}

/// Two propagation steps with a ReLU between:
/// Z = A_outer · ReLU(A_inner · X · W0) · W1.
pub fn encode_with_inner(
    a_inner: &Mat,
    a_outer: &Mat,
    x: &Mat,
    w0: &Mat,
    w1: &Mat,
) -> Result<Mat> {
    if a_inner.cols != x.rows || x.cols != w0.rows || w0.cols != w1.rows {
        return Err(Error::Shape(format!(
            "encode: A {}x{}, X {}x{}, W0 {}x{}, W1 {}x{}",
            a_inner.rows, a_inner.cols, x.rows, x.cols, w0.rows, w0.cols, w1.rows, w1.cols
        )));
    }
    let hidden = a_inner.matmul(x).matmul(w0).relu();
    Ok(a_outer.matmul(&hidden).matmul(w1))
}

/// Default encoder: normalized adjacency in both propagation steps.
pub fn encode(a_norm: &Mat, x: &Mat, w0: &Mat, w1: &Mat) -> Result<Mat> {
    encode_with_inner(a_norm, a_norm, x, w0, w1)
}

/// Pairwise link probabilities sigma(Z Zᵀ).
pub fn decode(z: &Mat) -> Mat {
    z.matmul_t(z).map(sigmoid)
}

/// Link probability for one node pair.
pub fn decode_pair(z: &Mat, u: usize, v: usize) -> f64 {
    sigmoid(crate::linalg::dot(z.row(u), z.row(v)))
}

/// Cosine between two node keys under the same featurizer; test hook for
/// subword behavior.
pub fn feature_cosine(a: &str, b: &str, hash_dims: usize, range: (usize, usize)) -> f64 {
    cosine(
        &hashed_ngram_row(a, hash_dims, range),
        &hashed_ngram_row(b, hash_dims, range),
    )
}

/// Infer lateral relations for one attribute kind: each attribute keeps
/// its top-k same-kind partners by decode score, subject to a score floor
/// and skipping pairs already related through the hierarchy. The result
/// is symmetric by construction.
pub fn infer_links(
    state: &EncoderState,
    graph: &ProductGraph,
    kind: AttrKind,
    score_floor: f64,
    k: usize,
) -> Vec<(usize, usize, f64)> {
    let attrs: Vec<usize> = graph
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| {
            n.node_ref.kind == NodeKind::Attribute && n.node_ref.attr_kind == Some(kind)
        })
        .map(|(i, _)| i)
        .collect();

    let existing: HashSet<(usize, usize)> = graph
        .edges()
        .map(|(u, v, _)| (u.min(v), u.max(v)))
        .collect();

    let mut kept: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &a in &attrs {
        let mut scored: Vec<(usize, f64)> = attrs
            .iter()
            .copied()
            .filter(|&b| b != a)
            .map(|b| (b, decode_pair(&state.z, a, b)))
            .filter(|&(b, s)| {
                s >= score_floor
                    && !existing.contains(&(a.min(b), a.max(b)))
                    && !graph.hierarchy_related(a, b)
            })
            .collect();
        scored.sort_by(|(bi, si), (bj, sj)| {
            sj.partial_cmp(si)
                .unwrap()
                .then_with(|| graph.nodes()[*bi].node_ref.key.cmp(&graph.nodes()[*bj].node_ref.key))
        });
        for (b, s) in scored.into_iter().take(k) {
            let key = (a.min(b), a.max(b));
            let entry = kept.entry(key).or_insert(s);
            if s > *entry {
                *entry = s;
            }
        }
    }
    kept.into_iter().map(|((a, b), s)| (a, b, s)).collect()
}

const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    state: EncoderState,
}

pub fn save_model(path: &Path, state: &EncoderState) -> Result<()> {
    let f = std::fs::File::create(path)?;
    serde_json::to_writer(
        f,
        &ModelFile {
            version: MODEL_VERSION,
            state: state.clone(),
        },
    )?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<EncoderState> {
    let f = std::fs::File::open(path)?;
    let file: ModelFile = serde_json::from_reader(f)?;
    if file.version != MODEL_VERSION {
        return Err(Error::Parse {
            file: path.display().to_string(),
            msg: format!("model version {} unsupported", file.version),
        });
    }
    Ok(file.state)
}
