//! Python bindings: an in-memory pipeline over a generated corpus plus
//! the standalone metric helpers.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use stackrecall::corpus::generate::{generate_corpus, CorpusSpec};
use stackrecall::corpus::{filter_logs, normalize, AttrKind, Catalog, EngagementRecord};
use stackrecall::eligibility::{
    compute_thresholds, extract_intents, is_eligible, ThresholdConfig, Thresholds,
};
use stackrecall::embedding::{infer_links, init_features, train as train_encoder, TrainConfig};
use stackrecall::eval::{
    ndcg as ndcg_impl, percentile_report, run_experiment, ExperimentConfig, RatedList,
};
use stackrecall::graph::{build_graph, EngagementWeights, ProductGraph};
use stackrecall::mapper::{train_mapper, MapperConfig, MapperModel};
use stackrecall::retrieval::{build_index, search, InvertedIndex, RankWeights};
use stackrecall::stacker::{group, to_wire_json, GroupContext, StackerConfig};

fn runtime_err(e: stackrecall::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        serde_json::Value::Null => py.None().into_bound(py),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any(),
        serde_json::Value::Array(xs) => {
            let list = PyList::empty(py);
            for x in xs {
                list.append(json_to_py(py, x)?)?;
            }
            list.into_any()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, x) in map {
                dict.set_item(k, json_to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

/// Normalized search tokens for a text.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    normalize(text).0
}

/// Suffix-strip stem of one word.
#[pyfunction]
fn stem(word: &str) -> String {
    stackrecall::corpus::stem(word)
}

/// NDCG@k of a list already in rank order, ratings 1..5.
#[pyfunction]
fn ndcg(ratings_in_order: Vec<u8>, k: usize) -> PyResult<f64> {
    if ratings_in_order.iter().any(|&r| !(1..=5).contains(&r)) {
        return Err(PyValueError::new_err("ratings must be in 1..=5"));
    }
    let items: Vec<String> = (0..ratings_in_order.len()).map(|i| format!("i{i}")).collect();
    let rated = RatedList {
        ratings: items
            .iter()
            .cloned()
            .zip(ratings_in_order.iter().copied())
            .collect(),
        items,
    };
    Ok(ndcg_impl(&rated, k))
}

/// Nearest-rank latency percentiles plus the mean, as ordered pairs.
#[pyfunction]
fn latency_percentiles(values: Vec<f64>) -> PyResult<Vec<(String, f64)>> {
    percentile_report(&values)
        .map(|r| r.entries)
        .map_err(runtime_err)
}

/// The whole pipeline over one generated corpus, held in memory.
#[pyclass]
struct Pipeline {
    catalog: Catalog,
    logs: Vec<EngagementRecord>,
    graph: ProductGraph,
    mapper: Option<MapperModel>,
    index: InvertedIndex,
    thresholds: Thresholds,
    seed: u64,
}

impl Pipeline {
    fn ctx(&self) -> PyResult<GroupContext<'_>> {
        let mapper = self
            .mapper
            .as_ref()
            .ok_or_else(|| PyRuntimeError::new_err("call train() first"))?;
        Ok(GroupContext {
            catalog: &self.catalog,
            logs: &self.logs,
            thresholds: self.thresholds,
            graph: &self.graph,
            mapper,
            index: &self.index,
            config: StackerConfig::default(),
        })
    }
}

#[pymethods]
impl Pipeline {
    /// Generate a corpus and build the index, graph, and eligibility
    /// thresholds. Training happens separately in train().
    #[staticmethod]
    #[pyo3(signature = (seed=42, items=300, queries=120, product_types=12, brands=8, mixture=0.0))]
    fn generate(
        seed: u64,
        items: usize,
        queries: usize,
        product_types: usize,
        brands: usize,
        mixture: f64,
    ) -> PyResult<Pipeline> {
        let corpus = generate_corpus(
            seed,
            &CorpusSpec {
                items,
                queries,
                product_types,
                brands,
                intent_mixture: mixture,
                mixture_overrides: vec![],
            },
        )
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let logs = filter_logs(&corpus.logs, 10, 10);
        let graph = build_graph(
            &corpus.catalog,
            &logs,
            corpus.hierarchy.clone(),
            EngagementWeights::default(),
        );
        let index = build_index(&corpus.catalog).map_err(runtime_err)?;
        let thresholds = compute_thresholds(&corpus.catalog, &logs, &ThresholdConfig::default())
            .map_err(runtime_err)?;
        Ok(Pipeline {
            catalog: corpus.catalog,
            logs,
            graph,
            mapper: None,
            index,
            thresholds,
            seed,
        })
    }

    /// Train the graph auto-encoder (inferring lateral relations) and the
    /// hierarchy mapper.
    #[pyo3(signature = (encoder_epochs=200, mapper_epochs=400))]
    fn train(&mut self, encoder_epochs: usize, mapper_epochs: usize) -> PyResult<()> {
        let config = TrainConfig {
            epochs: encoder_epochs,
            seed: self.seed,
            ..Default::default()
        };
        let features = init_features(&self.graph, config.hash_dims, config.ngram_range);
        let state = train_encoder(&self.graph, &features, &config).map_err(runtime_err)?;
        let mut relations = infer_links(&state, &self.graph, AttrKind::Brand, 0.5, 5);
        relations.extend(infer_links(
            &state,
            &self.graph,
            AttrKind::ProductType,
            0.5,
            5,
        ));
        self.graph.set_lateral(relations);

        let hierarchy = self.graph.hierarchy.clone();
        let mapper_config = MapperConfig {
            level: stackrecall::mapper::LevelTrainConfig {
                epochs: mapper_epochs,
                seed: self.seed,
                ..Default::default()
            },
            embed: stackrecall::mapper::SkipGramConfig {
                seed: self.seed,
                ..Default::default()
            },
            ..Default::default()
        };
        self.mapper = Some(
            train_mapper(&self.catalog, &self.logs, &hierarchy, &mapper_config)
                .map_err(runtime_err)?,
        );
        Ok(())
    }

    /// Flat ranked retrieval; optional brand / product-type hard filters.
    #[pyo3(signature = (query, limit=10, brand=None, product_type=None))]
    fn search<'py>(
        &self,
        py: Python<'py>,
        query: &str,
        limit: usize,
        brand: Option<String>,
        product_type: Option<String>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let mut filters = Vec::new();
        if let Some(b) = brand {
            filters.push((AttrKind::Brand, b));
        }
        if let Some(p) = product_type {
            filters.push((AttrKind::ProductType, p));
        }
        let hits = search(&self.index, query, &filters, limit, &RankWeights::default());
        let rows: Vec<serde_json::Value> = hits
            .iter()
            .map(|h| {
                serde_json::json!({
                    "item_id": h.item_id,
                    "title": h.title,
                    "score": h.score,
                })
            })
            .collect();
        json_to_py(py, &serde_json::Value::Array(rows))
    }

    /// Grouped (stacked) results for a query, as a plain dict.
    fn group<'py>(&self, py: Python<'py>, query: &str) -> PyResult<Bound<'py, PyAny>> {
        let result = group(&self.ctx()?, query);
        json_to_py(py, &to_wire_json(&result))
    }

    /// Hierarchy paths for a query via the trained mapper.
    fn traverse(&self, query: &str) -> PyResult<Vec<Vec<String>>> {
        let mapper = self
            .mapper
            .as_ref()
            .ok_or_else(|| PyRuntimeError::new_err("call train() first"))?;
        Ok(mapper.traverse(query))
    }

    /// (eligible, chosen intent as {kind: value} or None) for a query.
    fn eligibility<'py>(
        &self,
        py: Python<'py>,
        query: &str,
    ) -> PyResult<(bool, Option<Bound<'py, PyAny>>)> {
        let profile = extract_intents(query, &self.catalog, &self.logs);
        let (eligible, chosen) = is_eligible(
            &profile,
            &self.catalog,
            self.thresholds.loss,
            self.thresholds.count,
        );
        let intent = match chosen {
            Some(i) => {
                let map: serde_json::Map<String, serde_json::Value> = i
                    .attrs()
                    .map(|(k, v)| (k.as_str().to_string(), serde_json::Value::from(v)))
                    .collect();
                Some(json_to_py(py, &serde_json::Value::Object(map))?)
            }
            None => None,
        };
        Ok((eligible, intent))
    }

    /// Offline grouped-vs-flat comparison; returns the full report dict.
    #[pyo3(signature = (ndcg_k=10, primary_only=false))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        ndcg_k: usize,
        primary_only: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let report = run_experiment(
            &self.ctx()?,
            &ExperimentConfig {
                ndcg_k,
                primary_only,
            },
        )
        .map_err(runtime_err)?;
        let value = serde_json::to_value(&report)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        json_to_py(py, &value)
    }

    #[getter]
    fn item_count(&self) -> usize {
        self.catalog.len()
    }

    #[getter]
    fn query_count(&self) -> usize {
        stackrecall::eligibility::distinct_queries(&self.logs).len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Pipeline(items={}, queries={}, trained={})",
            self.catalog.len(),
            stackrecall::eligibility::distinct_queries(&self.logs).len(),
            self.mapper.is_some()
        )
    }
}

#[pymodule]
fn stackrecall_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Pipeline>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(stem, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg, m)?)?;
    m.add_function(wrap_pyfunction!(latency_percentiles, m)?)?;
    Ok(())
}
