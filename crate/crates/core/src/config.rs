//! Structured key=value config files: one `key = value` per line,
//! `#` comments, dotted keys namespaced per subsystem. Unknown keys are
//! rejected up front so typos fail fast as configuration errors.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "corpus.items",
    "corpus.queries",
    "corpus.brands",
    "corpus.product_types",
    "corpus.mixture",
    "logs.min_atc",
    "logs.min_orders",
    "eligibility.loss_percentile",
    "eligibility.count_percentile",
    "graph.w_click",
    "graph.w_atc",
    "graph.w_order",
    "embedding.epochs",
    "embedding.lr",
    "embedding.hidden",
    "embedding.latent",
    "embedding.hash_dims",
    "embedding.neg_samples",
    "embedding.variational",
    "embedding.kl_weight",
    "embedding.raw_inner_adjacency",
    "embedding.dense_loss",
    "embedding.score_floor",
    "embedding.lateral_k",
    "mapper.alpha",
    "mapper.alpha_support",
    "mapper.support_floor",
    "mapper.threshold_percentile",
    "mapper.embed_dims",
    "mapper.embed_window",
    "mapper.embed_epochs",
    "mapper.embed_lr",
    "mapper.embed_negatives",
    "mapper.level_filters",
    "mapper.level_epochs",
    "mapper.level_lr",
    "search.limit",
    "search.w_text",
    "search.w_click",
    "search.w_popularity",
    "search.w_brand",
    "search.w_sales",
    "stacker.similar_min",
    "stacker.display_limit",
    "stacker.recall_limit",
    "stacker.lateral_k",
    "eval.ndcg_k",
];

#[derive(Debug, Clone, Default)]
pub struct Params {
    values: HashMap<String, String>,
}

impl Params {
    pub fn empty() -> Params {
        Params::default()
    }

    pub fn from_file(path: &Path) -> Result<Params> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Params> {
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{source}:{}: expected `key = value`, got {raw:?}",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "{source}:{}: unknown config key {key:?}",
                    lineno + 1
                )));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Params { values })
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("config key {key} has unparsable value {v:?}"))
            }),
        }
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parse_as::<f64>(key)?.unwrap_or(default))
    }

    pub fn usize(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.parse_as::<usize>(key)?.unwrap_or(default))
    }

    pub fn u64(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.parse_as::<u64>(key)?.unwrap_or(default))
    }

    pub fn bool(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self.parse_as::<bool>(key)?.unwrap_or(default))
    }
}
