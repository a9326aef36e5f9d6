//! One classifier per hierarchy level: width-2 convolution filters over
//! the query's term-vector sequence, max-pool, then a softmax layer
//! trained against soft targets with cross-entropy. Single-term queries
//! pair their (trivially averaged) vector with a zero pad so the
//! convolution still applies.

use serde::{Deserialize, Serialize};

use crate::linalg::{dot, softmax, Mat};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTrainConfig {
    pub filters: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for LevelTrainConfig {
    fn default() -> Self {
        LevelTrainConfig {
            filters: 16,
            epochs: 400,
            learning_rate: 1.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelClassifier {
    /// Depth in the hierarchy this classifier predicts (root is 0).
    pub level: usize,
    pub classes: Vec<String>,
    /// filters x 2n filter bank.
    pub filters: Mat,
    /// classes x filters softmax weights.
    pub softmax_w: Mat,
    /// Traversal keep-threshold, set from the training score distribution.
    pub threshold: f64,
}

/// Width-2 windows over the term-vector sequence; a lone vector is
/// paired with a zero pad.
fn windows(seq: &[Vec<f64>]) -> Vec<Vec<f64>> {
    debug_assert!(!seq.is_empty());
    let n = seq[0].len();
    if seq.len() == 1 {
        let mut w = seq[0].clone();
        w.resize(2 * n, 0.0);
        return vec![w];
    }
    seq.windows(2)
        .map(|pair| {
            let mut w = pair[0].clone();
            w.extend_from_slice(&pair[1]);
            w
        })
        .collect()
}

struct PoolCache {
    /// Per filter: (window index, pre-activation was positive).
    routes: Vec<(usize, bool)>,
    pooled: Vec<f64>,
}

fn conv_pool(filters: &Mat, wins: &[Vec<f64>]) -> PoolCache {
    let mut pooled = Vec::with_capacity(filters.rows);
    let mut routes = Vec::with_capacity(filters.rows);
    for k in 0..filters.rows {
        let f = filters.row(k);
        let mut best = f64::NEG_INFINITY;
        let mut best_i = 0;
        for (i, w) in wins.iter().enumerate() {
            let pre = dot(f, w);
            if pre > best {
                best = pre;
                best_i = i;
            }
        }
        routes.push((best_i, best > 0.0));
        pooled.push(best.max(0.0));
    }
    PoolCache { routes, pooled }
}

/// Class probabilities for a token-vector sequence; uniform when the
/// sequence is empty.
pub fn forward(filters: &Mat, softmax_w: &Mat, seq: &[Vec<f64>]) -> Vec<f64> {
    let c = softmax_w.rows;
    if seq.is_empty() {
        return vec![1.0 / c as f64; c];
    }
    let cache = conv_pool(filters, &windows(seq));
    let logits: Vec<f64> = (0..c)
        .map(|ci| dot(softmax_w.row(ci), &cache.pooled))
        .collect();
    softmax(&logits)
}

/// Mean cross-entropy of soft targets; the finite-difference oracle in
/// tests evaluates this at perturbed parameters.
pub fn batch_loss(filters: &Mat, softmax_w: &Mat, data: &[(Vec<Vec<f64>>, Vec<f64>)]) -> f64 {
    let mut loss = 0.0;
    let mut used = 0usize;
    for (seq, target) in data {
        if seq.is_empty() {
            continue;
        }
        let probs = forward(filters, softmax_w, seq);
        loss -= target
            .iter()
            .zip(&probs)
            .map(|(&e, &p)| if e > 0.0 { e * p.max(1e-300).ln() } else { 0.0 })
            .sum::<f64>();
        used += 1;
    }
    loss / used.max(1) as f64
}

/// Loss plus analytic gradients for the filter bank and softmax weights.
pub fn batch_loss_and_grads(
    filters: &Mat,
    softmax_w: &Mat,
    data: &[(Vec<Vec<f64>>, Vec<f64>)],
) -> (f64, Mat, Mat) {
    let mut g_filters = Mat::zeros(filters.rows, filters.cols);
    let mut g_w = Mat::zeros(softmax_w.rows, softmax_w.cols);
    let mut loss = 0.0;
    let used = data.iter().filter(|(s, _)| !s.is_empty()).count().max(1) as f64;

    for (seq, target) in data {
        if seq.is_empty() {
            continue;
        }
        let wins = windows(seq);
        let cache = conv_pool(filters, &wins);
        let c = softmax_w.rows;
        let logits: Vec<f64> = (0..c)
            .map(|ci| dot(softmax_w.row(ci), &cache.pooled))
            .collect();
        let probs = softmax(&logits);
        loss -= target
            .iter()
            .zip(&probs)
            .map(|(&e, &p)| if e > 0.0 { e * p.max(1e-300).ln() } else { 0.0 })
            .sum::<f64>();

        // d loss / d logit_c = p_c * sum(e) - e_c (sum(e) is 1 for real
        // targets, 0 for all-zero "no signal" targets).
        let esum: f64 = target.iter().sum();
        let dlogits: Vec<f64> = probs
            .iter()
            .zip(target)
            .map(|(&p, &e)| (p * esum - e) / used)
            .collect();

        let mut dpooled = vec![0.0; filters.rows];
        for ci in 0..c {
            for k in 0..filters.rows {
                g_w[(ci, k)] += dlogits[ci] * cache.pooled[k];
                dpooled[k] += dlogits[ci] * softmax_w[(ci, k)];
            }
        }
        for k in 0..filters.rows {
            let (wi, positive) = cache.routes[k];
            if positive {
                for (d, &wv) in wins[wi].iter().enumerate() {
                    g_filters[(k, d)] += dpooled[k] * wv;
                }
            }
        }
    }

    (loss / used, g_filters, g_w)
}

/// Full-batch gradient descent over (sequence, soft target) pairs.
/// Classes with no target mass anywhere get a warning but stay in the
/// output layer.
pub fn train_level(
    level: usize,
    classes: Vec<String>,
    data: &[(Vec<Vec<f64>>, Vec<f64>)],
    embed_dims: usize,
    config: &LevelTrainConfig,
) -> LevelClassifier {
    for (ci, class) in classes.iter().enumerate() {
        if data.iter().all(|(_, e)| e[ci] == 0.0) {
            eprintln!("warning: level {level} class {class:?} absent from all targets");
        }
    }

    let mut rng = Rng::seed_from(config.seed ^ (level as u64).wrapping_mul(0x9E37_79B9));
    let in_dim = 2 * embed_dims;
    let mut filters = Mat::random_normal(
        config.filters,
        in_dim,
        1.0 / (in_dim as f64).sqrt(),
        &mut rng,
    );
    let mut softmax_w = Mat::random_normal(
        classes.len(),
        config.filters,
        1.0 / (config.filters as f64).sqrt(),
        &mut rng,
    );

    for _ in 0..config.epochs {
        let (_, g_f, g_w) = batch_loss_and_grads(&filters, &softmax_w, data);
        filters.scaled_add(&g_f, -config.learning_rate);
        softmax_w.scaled_add(&g_w, -config.learning_rate);
    }

    LevelClassifier {
        level,
        classes,
        filters,
        softmax_w,
        threshold: 0.0,
    }
}
