//! Grouped e-commerce search at desk scale.
//!
//! The pipeline: filter engagement logs, gate queries on engagement-loss
//! and assortment features, build a typed product graph, learn node
//! embeddings with a graph auto-encoder to infer lateral attribute
//! relations, map queries onto the product-type hierarchy with per-level
//! classifiers, and answer eligible queries with intent-pure ranked
//! stacks backed by an inverted index. An evaluation harness scores the
//! grouped experience against the flat baseline with graded-relevance
//! NDCG and latency percentiles.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod eligibility;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod mapper;
pub mod retrieval;
pub mod rng;
pub mod stacker;

pub use error::{Error, Result};
