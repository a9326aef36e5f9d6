//! Graph persistence: a directory holding nodes.jsonl, edges.tsv,
//! hierarchy.json and lateral.tsv. Edge endpoints are indices into the
//! node file's line order; floats are written in shortest round-trip form.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{Node, ProductGraph};

pub fn save_graph(dir: &Path, graph: &ProductGraph) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut nodes = fs::File::create(dir.join("nodes.jsonl"))?;
    for node in graph.nodes() {
        serde_json::to_writer(&mut nodes, node)?;
        nodes.write_all(b"\n")?;
    }

    let mut edges = fs::File::create(dir.join("edges.tsv"))?;
    for (u, v, w) in graph.edges() {
        writeln!(edges, "{u}\t{v}\t{w}")?;
    }

    crate::corpus::io::write_hierarchy(&dir.join("hierarchy.json"), &graph.hierarchy)?;

    let mut lateral = fs::File::create(dir.join("lateral.tsv"))?;
    for (a, b, s) in graph.lateral_relations() {
        writeln!(lateral, "{a}\t{b}\t{s}")?;
    }

    Ok(())
}

fn parse_tsv_triple(path: &Path) -> Result<Vec<(usize, usize, f64)>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = || Error::Parse {
            file: path.display().to_string(),
            msg: format!("line {}: expected `u\\tv\\tweight`", lineno + 1),
        };
        if cols.len() != 3 {
            return Err(bad());
        }
        let u: usize = cols[0].parse().map_err(|_| bad())?;
        let v: usize = cols[1].parse().map_err(|_| bad())?;
        let w: f64 = cols[2].parse().map_err(|_| bad())?;
        out.push((u, v, w));
    }
    Ok(out)
}

pub fn load_graph(dir: &Path) -> Result<ProductGraph> {
    let nodes_path = dir.join("nodes.jsonl");
    let f = fs::File::open(&nodes_path)?;
    let mut nodes: Vec<Node> = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        nodes.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            file: nodes_path.display().to_string(),
            msg: format!("line {}: {}", lineno + 1, e),
        })?);
    }

    let hierarchy = crate::corpus::io::read_hierarchy(&dir.join("hierarchy.json"))?;
    let mut graph = ProductGraph::new(hierarchy);
    graph.restore_nodes(nodes)?;

    for (u, v, w) in parse_tsv_triple(&dir.join("edges.tsv"))? {
        graph.restore_edge(u, v, w)?;
    }

    let lateral_path = dir.join("lateral.tsv");
    if lateral_path.exists() {
        graph.set_lateral(parse_tsv_triple(&lateral_path)?);
    }

    Ok(graph)
}

impl ProductGraph {
    fn restore_nodes(&mut self, nodes: Vec<Node>) -> Result<()> {
        self.set_nodes(nodes);
        Ok(())
    }

    fn restore_edge(&mut self, u: usize, v: usize, w: f64) -> Result<()> {
        let n = self.node_count();
        if u >= n || v >= n || u == v {
            return Err(Error::Parse {
                file: "edges.tsv".into(),
                msg: format!("edge ({u}, {v}) out of range for {n} nodes"),
            });
        }
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::Parse {
                file: "edges.tsv".into(),
                msg: format!("edge ({u}, {v}) has non-positive weight {w}"),
            });
        }
        self.insert_edge_raw(u, v, w);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate::{generate_corpus, CorpusSpec};
    use crate::corpus::{filter_logs, AttrKind};
    use crate::graph::{build_graph, EngagementWeights};

    #[test]
    fn graph_roundtrips_exactly() {
        let c = generate_corpus(
            11,
            &CorpusSpec {
                items: 50,
                queries: 25,
                ..Default::default()
            },
        )
        .unwrap();
        let logs = filter_logs(&c.logs, 10, 10);
        let mut g = build_graph(&c.catalog, &logs, c.hierarchy, EngagementWeights::default());
        let a = g.attribute_index(AttrKind::ProductType, "Milk").unwrap();
        let b = g.attribute_index(AttrKind::ProductType, "Apple").unwrap();
        g.set_lateral([(a, b, 0.123456789012345)]);

        let dir = tempfile::tempdir().unwrap();
        save_graph(dir.path(), &g).unwrap();
        let back = load_graph(dir.path()).unwrap();

        assert_eq!(back.nodes(), g.nodes());
        assert_eq!(
            back.edges().collect::<Vec<_>>(),
            g.edges().collect::<Vec<_>>()
        );
        assert_eq!(
            back.lateral_relations().collect::<Vec<_>>(),
            g.lateral_relations().collect::<Vec<_>>()
        );
        assert_eq!(back.hierarchy, g.hierarchy);
    }
}
