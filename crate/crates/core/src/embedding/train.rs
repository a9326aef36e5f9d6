//! Full-batch gradient-descent training of the auto-encoder against a
//! balanced reconstruction loss: mean binary cross-entropy over the
//! positive edges plus mean over negative (non-edge) pairs. Gradients are
//! derived analytically; tests check them against central finite
//! differences of [`reconstruction_loss`].

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::graph::ProductGraph;
use crate::linalg::{log_sigmoid, sigmoid, Mat};
use crate::rng::Rng;

use super::{encode_with_inner, normalize_adjacency, EncoderState, FeatureMatrix, TrainConfig};

/// Gradients for one loss evaluation. `w1` is the mean head in
/// variational mode; `w1_logvar` is present only there.
pub struct LossGrads {
    pub loss: f64,
    pub w0: Mat,
    pub w1: Mat,
    pub w1_logvar: Option<Mat>,
}

struct Forward {
    m: Mat,          // a_inner · x
    hidden_pre: Mat, // m · w0
    q: Mat,          // a_outer · relu(hidden_pre)
}

fn forward_to_q(a_inner: &Mat, a_outer: &Mat, x: &Mat, w0: &Mat) -> Forward {
    let m = a_inner.matmul(x);
    let hidden_pre = m.matmul(w0);
    let q = a_outer.matmul(&hidden_pre.relu());
    Forward { m, hidden_pre, q }
}

fn pair_loss_and_score_grads(
    z: &Mat,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> (f64, Mat) {
    let mut g_z = Mat::zeros(z.rows, z.cols);
    let mut loss = 0.0;
    let wp = 1.0 / positives.len().max(1) as f64;
    let wn = 1.0 / negatives.len().max(1) as f64;
    for (&(u, v), positive) in positives
        .iter()
        .map(|p| (p, true))
        .chain(negatives.iter().map(|p| (p, false)))
    {
        let s = crate::linalg::dot(z.row(u), z.row(v));
        let (l, coef) = if positive {
            (-log_sigmoid(s) * wp, (sigmoid(s) - 1.0) * wp)
        } else {
            (-log_sigmoid(-s) * wn, sigmoid(s) * wn)
        };
        loss += l;
        for c in 0..z.cols {
            g_z[(u, c)] += coef * z[(v, c)];
            g_z[(v, c)] += coef * z[(u, c)];
        }
    }
    (loss, g_z)
}

/// Loss only; the finite-difference oracle in tests evaluates this at
/// perturbed weights.
#[allow(clippy::too_many_arguments)]
pub fn reconstruction_loss(
    a_inner: &Mat,
    a_outer: &Mat,
    x: &Mat,
    w0: &Mat,
    w1: &Mat,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> f64 {
    let z = encode_with_inner(a_inner, a_outer, x, w0, w1).expect("shapes checked by caller");
    pair_loss_and_score_grads(&z, positives, negatives).0
}

/// Loss and analytic gradients for the deterministic auto-encoder.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_gradients(
    a_inner: &Mat,
    a_outer: &Mat,
    x: &Mat,
    w0: &Mat,
    w1: &Mat,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> LossGrads {
    let f = forward_to_q(a_inner, a_outer, x, w0);
    let z = f.q.matmul(w1);
    let (loss, g_z) = pair_loss_and_score_grads(&z, positives, negatives);

    let g_w1 = f.q.t_matmul(&g_z);
    let g_q = g_z.matmul_t(w1); // G_Z · W1ᵀ
    backprop_through_encoder(a_outer, &f, &g_q, loss, g_w1, None)
}

/// Variational loss and gradients with the noise matrix held fixed:
/// z = mu + exp(logvar / 2) ⊙ eps, plus kl_weight · KL(q ‖ N(0, I)) / N.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_gradients_variational(
    a_inner: &Mat,
    a_outer: &Mat,
    x: &Mat,
    w0: &Mat,
    w1_mu: &Mat,
    w1_logvar: &Mat,
    eps: &Mat,
    kl_weight: f64,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> LossGrads {
    let f = forward_to_q(a_inner, a_outer, x, w0);
    let mu = f.q.matmul(w1_mu);
    let logvar = f.q.matmul(w1_logvar);
    let std = logvar.map(|v| (0.5 * v).exp());
    let mut z = mu.clone();
    z.scaled_add(&std.hadamard(eps), 1.0);

    let (rec_loss, g_z) = pair_loss_and_score_grads(&z, positives, negatives);

    let n = mu.rows as f64;
    let mut kl = 0.0;
    for (m, lv) in mu.data.iter().zip(&logvar.data) {
        kl += m * m + lv.exp() - 1.0 - lv;
    }
    kl *= 0.5 / n;
    let loss = rec_loss + kl_weight * kl;

    // d z / d mu = 1, d z / d logvar = 0.5 * std * eps
    let mut g_mu = g_z.clone();
    g_mu.scaled_add(&mu, kl_weight / n);
    let mut g_logvar = g_z.hadamard(&std.hadamard(eps)).map(|v| 0.5 * v);
    g_logvar.scaled_add(&logvar.map(|v| 0.5 * (v.exp() - 1.0)), kl_weight / n);

    let g_w1_mu = f.q.t_matmul(&g_mu);
    let g_w1_logvar = f.q.t_matmul(&g_logvar);
    let mut g_q = g_mu.matmul_t(w1_mu);
    g_q.scaled_add(&g_logvar.matmul_t(w1_logvar), 1.0);

    backprop_through_encoder(a_outer, &f, &g_q, loss, g_w1_mu, Some(g_w1_logvar))
}

/// Variational loss only, for the finite-difference oracle.
#[allow(clippy::too_many_arguments)]
pub fn variational_loss(
    a_inner: &Mat,
    a_outer: &Mat,
    x: &Mat,
    w0: &Mat,
    w1_mu: &Mat,
    w1_logvar: &Mat,
    eps: &Mat,
    kl_weight: f64,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
) -> f64 {
    let f = forward_to_q(a_inner, a_outer, x, w0);
    let mu = f.q.matmul(w1_mu);
    let logvar = f.q.matmul(w1_logvar);
    let std = logvar.map(|v| (0.5 * v).exp());
    let mut z = mu.clone();
    z.scaled_add(&std.hadamard(eps), 1.0);
    let (rec_loss, _) = pair_loss_and_score_grads(&z, positives, negatives);
    let n = mu.rows as f64;
    let kl: f64 = mu
        .data
        .iter()
        .zip(&logvar.data)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
        * 0.5
        / n;
    rec_loss + kl_weight * kl
}

fn backprop_through_encoder(
    a_outer: &Mat,
    f: &Forward,
    g_q: &Mat,
    loss: f64,
    g_w1: Mat,
    g_w1_logvar: Option<Mat>,
) -> LossGrads {
    // q = a_outer · hidden with symmetric a_outer, so dL/d hidden = a_outer · g_q.
    let g_hidden = a_outer.matmul(g_q);
    let mask = f.hidden_pre.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let g_pre = g_hidden.hadamard(&mask);
    let g_w0 = f.m.t_matmul(&g_pre);
    LossGrads {
        loss,
        w0: g_w0,
        w1: g_w1,
        w1_logvar: g_w1_logvar,
    }
}

/// Uniform non-edge pairs (u != v, not in the edge set); duplicates allowed.
pub fn sample_negatives(
    n_nodes: usize,
    edges: &HashSet<(usize, usize)>,
    count: usize,
    rng: &mut Rng,
) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(count);
    let mut guard = 0usize;
    while out.len() < count && guard < count * 1000 + 1000 {
        guard += 1;
        let u = rng.below(n_nodes);
        let v = rng.below(n_nodes);
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if edges.contains(&key) {
            continue;
        }
        out.push(key);
    }
    out
}

/// All non-edge pairs (u < v); the dense-objective counterpart of sampling.
pub fn all_negatives(n_nodes: usize, edges: &HashSet<(usize, usize)>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for u in 0..n_nodes {
        for v in (u + 1)..n_nodes {
            if !edges.contains(&(u, v)) {
                out.push((u, v));
            }
        }
    }
    out
}

/// Train the auto-encoder on the graph. Deterministic for a fixed
/// config.seed; returns the final state with a per-epoch loss trace.
pub fn train(
    graph: &ProductGraph,
    features: &FeatureMatrix,
    config: &TrainConfig,
) -> Result<EncoderState> {
    config.validate()?;
    if graph.edge_count() == 0 {
        return Err(Error::InvalidInput("graph has no edges to reconstruct".into()));
    }
    if features.x.rows != graph.node_count() {
        return Err(Error::Shape(format!(
            "feature rows {} != node count {}",
            features.x.rows,
            graph.node_count()
        )));
    }

    let adjacency = graph.adjacency();
    let a_norm = normalize_adjacency(&adjacency);
    let a_inner = if config.raw_inner_adjacency {
        &adjacency
    } else {
        &a_norm
    };

    let positives: Vec<(usize, usize)> = graph.edges().map(|(u, v, _)| (u, v)).collect();
    let edge_set: HashSet<(usize, usize)> = positives.iter().copied().collect();
    let n = graph.node_count();

    // The two normalized propagations shrink activations hard; a timid
    // init leaves every decode score near zero and gradient descent
    // crawls. 0.5 puts the initial scores in sigmoid's active region.
    const INIT_SCALE: f64 = 0.5;
    let mut rng = Rng::seed_from(config.seed);
    let d = features.x.cols;
    let mut w0 = Mat::random_normal(d, config.hidden, INIT_SCALE, &mut rng);
    let mut w1 = Mat::random_normal(config.hidden, config.latent, INIT_SCALE, &mut rng);
    let mut w1_logvar = config
        .variational
        .then(|| Mat::random_normal(config.hidden, config.latent, INIT_SCALE, &mut rng));

    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let negatives = if config.dense_loss {
            all_negatives(n, &edge_set)
        } else {
            sample_negatives(
                n,
                &edge_set,
                positives.len() * config.neg_samples_per_edge,
                &mut rng,
            )
        };

        let grads = if let Some(w1lv) = &w1_logvar {
            let eps = Mat::random_normal(n, config.latent, 1.0, &mut rng);
            loss_and_gradients_variational(
                a_inner,
                &a_norm,
                &features.x,
                &w0,
                &w1,
                w1lv,
                &eps,
                config.kl_weight,
                &positives,
                &negatives,
            )
        } else {
            loss_and_gradients(
                a_inner,
                &a_norm,
                &features.x,
                &w0,
                &w1,
                &positives,
                &negatives,
            )
        };

        if !grads.loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss became {} at epoch {epoch}",
                grads.loss
            )));
        }
        loss_trace.push(grads.loss);

        w0.scaled_add(&grads.w0, -config.learning_rate);
        w1.scaled_add(&grads.w1, -config.learning_rate);
        if let (Some(w1lv), Some(g)) = (&mut w1_logvar, &grads.w1_logvar) {
            w1lv.scaled_add(g, -config.learning_rate);
        }
        if !w0.is_finite() || !w1.is_finite() {
            return Err(Error::NonFinite(format!("weights diverged at epoch {epoch}")));
        }
    }

    // Latent matrix from the final weights; the mean head in variational mode.
    let z = encode_with_inner(a_inner, &a_norm, &features.x, &w0, &w1)?;
    Ok(EncoderState {
        w0,
        w1,
        w1_logvar,
        a_norm,
        z,
        config: config.clone(),
        node_keys: graph
            .nodes()
            .iter()
            .map(|n| n.node_ref.key.clone())
            .collect(),
        loss_trace,
    })
}

/// Area under the ROC curve for decode scores of positive pairs against
/// negative pairs (rank-sum form; ties count half).
pub fn edge_auc(z: &Mat, positives: &[(usize, usize)], negatives: &[(usize, usize)]) -> f64 {
    let score = |&(u, v): &(usize, usize)| crate::linalg::dot(z.row(u), z.row(v));
    let pos: Vec<f64> = positives.iter().map(score).collect();
    let neg: Vec<f64> = negatives.iter().map(score).collect();
    if pos.is_empty() || neg.is_empty() {
        return 0.5;
    }
    let mut wins = 0.0;
    for p in &pos {
        for q in &neg {
            if p > q {
                wins += 1.0;
            } else if p == q {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}
