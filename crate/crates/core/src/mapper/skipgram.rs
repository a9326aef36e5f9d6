//! Skip-gram term embeddings with negative sampling, trained on the
//! concatenated query + title corpus. SGD in corpus order, seeded
//! negative table draws, so a fixed seed reproduces the matrix exactly.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, sigmoid, Mat};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dims: usize,
    pub window: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dims: 16,
            window: 2,
            epochs: 30,
            learning_rate: 0.05,
            negatives: 5,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermEmbeddings {
    pub dims: usize,
    pub vocab: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    /// t x n input-vector matrix, vocab order.
    pub vectors: Mat,
}

impl TermEmbeddings {
    pub fn new(vocab: Vec<String>, vectors: Mat) -> Self {
        assert_eq!(vocab.len(), vectors.rows);
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        TermEmbeddings {
            dims: vectors.cols,
            vocab,
            index,
            vectors,
        }
    }

    pub(crate) fn rebuild_index(&mut self) {
        self.index = self
            .vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Out-of-vocabulary terms get the designated zero vector.
    pub fn vector(&self, term: &str) -> Vec<f64> {
        match self.term_index(term) {
            Some(i) => self.vectors.row(i).to_vec(),
            None => vec![0.0; self.dims],
        }
    }

    /// Mean of in-vocabulary token vectors; zero when nothing is known.
    pub fn mean_vector(&self, tokens: &[String]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims];
        let mut n = 0usize;
        for t in tokens {
            if let Some(i) = self.term_index(t) {
                for (o, &v) in out.iter_mut().zip(self.vectors.row(i)) {
                    *o += v;
                }
                n += 1;
            }
        }
        if n > 0 {
            for o in &mut out {
                *o /= n as f64;
            }
        }
        out
    }

    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        crate::linalg::cosine(&self.vector(a), &self.vector(b))
    }
}

/// Cumulative unigram^0.75 table for negative draws.
struct NegativeTable {
    cumulative: Vec<f64>,
}

impl NegativeTable {
    fn new(counts: &[u64]) -> Self {
        let mut cumulative = Vec::with_capacity(counts.len());
        let mut acc = 0.0;
        for &c in counts {
            acc += (c as f64).powf(0.75);
            cumulative.push(acc);
        }
        NegativeTable { cumulative }
    }

    fn draw(&self, rng: &mut Rng) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = rng.f64() * total;
        match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&x).unwrap())
        {
            Ok(i) | Err(i) => i.min(self.cumulative.len() - 1),
        }
    }
}

pub fn train_term_embeddings(
    sentences: &[Vec<String>],
    config: &SkipGramConfig,
) -> Result<TermEmbeddings> {
    let mut vocab: Vec<String> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut encoded: Vec<Vec<usize>> = Vec::with_capacity(sentences.len());
    for s in sentences {
        let mut ids = Vec::with_capacity(s.len());
        for t in s {
            let id = *index.entry(t.clone()).or_insert_with(|| {
                vocab.push(t.clone());
                counts.push(0);
                vocab.len() - 1
            });
            counts[id] += 1;
            ids.push(id);
        }
        encoded.push(ids);
    }
    if vocab.is_empty() {
        return Err(Error::InvalidInput("empty embedding corpus".into()));
    }

    let t = vocab.len();
    let n = config.dims;
    let mut rng = Rng::seed_from(config.seed);
    let mut w_in = Mat::zeros(t, n);
    for v in w_in.data.iter_mut() {
        *v = (rng.f64() - 0.5) / n as f64;
    }
    let mut w_out = Mat::zeros(t, n);
    let table = NegativeTable::new(&counts);
    let lr = config.learning_rate;

    for _epoch in 0..config.epochs {
        for sentence in &encoded {
            for (i, &center) in sentence.iter().enumerate() {
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window).min(sentence.len() - 1);
                for (j, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    let mut grad_in = vec![0.0; n];
                    // positive pair + sampled negatives
                    for sample in 0..=config.negatives {
                        let (target, label) = if sample == 0 {
                            (context, 1.0)
                        } else {
                            let neg = table.draw(&mut rng);
                            if neg == center || neg == context {
                                continue;
                            }
                            (neg, 0.0)
                        };
                        let s = dot(w_in.row(center), w_out.row(target));
                        let g = sigmoid(s) - label;
                        for d in 0..n {
                            grad_in[d] += g * w_out[(target, d)];
                            w_out[(target, d)] -= lr * g * w_in[(center, d)];
                        }
                    }
                    for d in 0..n {
                        w_in[(center, d)] -= lr * grad_in[d];
                    }
                }
            }
        }
    }

    Ok(TermEmbeddings::new(vocab, w_in))
}
