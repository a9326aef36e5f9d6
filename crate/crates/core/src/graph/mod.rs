//! The typed product graph: queries, query terms, attributes and attribute
//! terms as vertices; term-frequency and engagement edges; the product-type
//! hierarchy; and lateral attribute relations inferred by the encoder.

pub mod io;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, AttrKind, Catalog, EngagementRecord, HierarchyNode};
use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Query,
    QueryTerm,
    Attribute,
    AttributeTerm,
}

/// Graph node identity: kind + normalized key (+ attribute kind for
/// attribute nodes).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub kind: NodeKind,
    pub key: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub attr_kind: Option<AttrKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    #[serde(flatten)]
    pub node_ref: NodeRef,
    /// Original surface form (first seen), e.g. "Great Value" for key
    /// "great value".
    pub label: String,
}

/// Engagement blend for query-attribute edge weights.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EngagementWeights {
    pub click: f64,
    pub atc: f64,
    pub order: f64,
}

impl Default for EngagementWeights {
    fn default() -> Self {
        // Clicks excluded by default; carts and orders count equally.
        EngagementWeights {
            click: 0.0,
            atc: 1.0,
            order: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductGraph {
    nodes: Vec<Node>,
    #[serde(skip)]
    index: HashMap<NodeRef, usize>,
    /// Undirected edges keyed (low, high), weight > 0.
    edges: BTreeMap<(usize, usize), f64>,
    pub hierarchy: HierarchyNode,
    /// Inferred same-kind attribute relations, keyed (low, high).
    lateral: BTreeMap<(usize, usize), f64>,
}

impl ProductGraph {
    pub fn new(hierarchy: HierarchyNode) -> Self {
        ProductGraph {
            nodes: Vec::new(),
            index: HashMap::new(),
            edges: BTreeMap::new(),
            hierarchy,
            lateral: BTreeMap::new(),
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(u, v), &w)| (u, v, w))
    }

    pub fn lateral_relations(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.lateral.iter().map(|(&(a, b), &s)| (a, b, s))
    }

    pub fn node_index(&self, r: &NodeRef) -> Option<usize> {
        self.index.get(r).copied()
    }

    pub fn attribute_index(&self, kind: AttrKind, value: &str) -> Option<usize> {
        self.node_index(&NodeRef {
            kind: NodeKind::Attribute,
            key: normalize(value).join(),
            attr_kind: Some(kind),
        })
    }

    fn intern(&mut self, kind: NodeKind, label: &str, attr_kind: Option<AttrKind>) -> usize {
        let key = match kind {
            NodeKind::QueryTerm | NodeKind::AttributeTerm => label.to_string(),
            _ => normalize(label).join(),
        };
        let r = NodeRef {
            kind,
            key,
            attr_kind,
        };
        if let Some(&i) = self.index.get(&r) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(Node {
            node_ref: r.clone(),
            label: label.to_string(),
        });
        self.index.insert(r, i);
        i
    }

    fn add_edge_weight(&mut self, u: usize, v: usize, w: f64) {
        debug_assert!(u != v);
        debug_assert!(w > 0.0);
        let key = (u.min(v), u.max(v));
        *self.edges.entry(key).or_insert(0.0) += w;
    }

    fn allowed_edge(&self, u: usize, v: usize) -> bool {
        use NodeKind::*;
        matches!(
            (self.nodes[u].node_ref.kind, self.nodes[v].node_ref.kind),
            (QueryTerm, Query)
                | (Query, QueryTerm)
                | (Query, Attribute)
                | (Attribute, Query)
                | (AttributeTerm, Attribute)
                | (Attribute, AttributeTerm)
        )
    }

    /// Rebuild the identity index after deserialization.
    pub(crate) fn rebuild_index(&mut self) {
        self.index = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.node_ref.clone(), i))
            .collect();
    }

    pub(crate) fn set_nodes(&mut self, nodes: Vec<Node>) {
        self.nodes = nodes;
        self.rebuild_index();
    }

    pub(crate) fn insert_edge_raw(&mut self, u: usize, v: usize, w: f64) {
        self.edges.insert((u.min(v), u.max(v)), w);
    }

    /// Replace the lateral relation set; pairs are stored canonically and
    /// read back symmetrically.
    pub fn set_lateral(&mut self, relations: impl IntoIterator<Item = (usize, usize, f64)>) {
        self.lateral.clear();
        for (a, b, s) in relations {
            if a == b {
                continue;
            }
            self.lateral.insert((a.min(b), a.max(b)), s);
        }
    }

    /// Top-k lateral neighbors of an attribute value, same kind only,
    /// descending score then ascending key.
    pub fn lateral_neighbors(
        &self,
        kind: AttrKind,
        value: &str,
        k: usize,
    ) -> Vec<(&Node, f64)> {
        let Some(idx) = self.attribute_index(kind, value) else {
            return Vec::new();
        };
        let mut out: Vec<(&Node, f64)> = self
            .lateral
            .iter()
            .filter_map(|(&(a, b), &s)| {
                let other = if a == idx {
                    Some(b)
                } else if b == idx {
                    Some(a)
                } else {
                    None
                }?;
                let node = &self.nodes[other];
                (node.node_ref.attr_kind == Some(kind)).then_some((node, s))
            })
            .collect();
        out.sort_by(|(na, sa), (nb, sb)| {
            sb.partial_cmp(sa)
                .unwrap()
                .then_with(|| na.node_ref.key.cmp(&nb.node_ref.key))
        });
        out.truncate(k);
        out
    }

    /// Root-to-leaf path for a product type in the hierarchy.
    pub fn hierarchy_path(&self, product_type: &str) -> Result<Vec<String>> {
        if let Some(p) = self.hierarchy.path_to(product_type) {
            return Ok(p);
        }
        // Fall back to a normalized-name match.
        let want = normalize(product_type).join();
        let mut stack = vec![(&self.hierarchy, Vec::new())];
        while let Some((node, mut path)) = stack.pop() {
            path.push(node.name.clone());
            if normalize(&node.name).join() == want {
                return Ok(path);
            }
            for c in &node.children {
                stack.push((c, path.clone()));
            }
        }
        Err(Error::NotFound(format!(
            "product type {product_type:?} not in hierarchy"
        )))
    }

    /// True if the two nodes are related through the hierarchy
    /// (ancestor/descendant), checked on product-type attribute nodes.
    pub fn hierarchy_related(&self, a: usize, b: usize) -> bool {
        let (na, nb) = (&self.nodes[a], &self.nodes[b]);
        if na.node_ref.attr_kind != Some(AttrKind::ProductType)
            || nb.node_ref.attr_kind != Some(AttrKind::ProductType)
        {
            return false;
        }
        let (pa, pb) = (
            self.hierarchy.path_to(&na.label),
            self.hierarchy.path_to(&nb.label),
        );
        match (pa, pb) {
            (Some(pa), Some(pb)) => pa.contains(&nb.label) || pb.contains(&na.label),
            _ => false,
        }
    }

    /// Dense symmetric adjacency in node order: A[u][v] = edge weight.
    pub fn adjacency(&self) -> Mat {
        let n = self.nodes.len();
        let mut a = Mat::zeros(n, n);
        for (&(u, v), &w) in &self.edges {
            a[(u, v)] = w;
            a[(v, u)] = w;
        }
        a
    }
}

/// Build the engagement graph from a filtered log set. Term-frequency
/// edges connect queries and attributes to their terms; engagement edges
/// connect queries to the attributes of the items they engaged.
pub fn build_graph(
    catalog: &Catalog,
    logs: &[EngagementRecord],
    hierarchy: HierarchyNode,
    weights: EngagementWeights,
) -> ProductGraph {
    let mut g = ProductGraph::new(hierarchy);

    // Attribute + attribute-term nodes from the catalog.
    let mut seen_attrs: HashSet<(AttrKind, String)> = HashSet::new();
    for item in catalog.items() {
        for (kind, value) in [
            (AttrKind::Brand, &item.brand),
            (AttrKind::ProductType, &item.product_type),
        ] {
            if !seen_attrs.insert((kind, value.clone())) {
                continue;
            }
            let a = g.intern(NodeKind::Attribute, value, Some(kind));
            let tokens = normalize(value).0;
            let mut tf: BTreeMap<String, f64> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_insert(0.0) += 1.0;
            }
            for (term, count) in tf {
                let t = g.intern(NodeKind::AttributeTerm, &term, None);
                debug_assert!(g.allowed_edge(t, a));
                g.add_edge_weight(t, a, count);
            }
        }
    }

    // Query nodes, term edges, engagement edges.
    let mut seen_queries: HashSet<String> = HashSet::new();
    for rec in logs {
        let tokens = normalize(&rec.query).0;
        if tokens.is_empty() {
            continue;
        }
        let q = g.intern(NodeKind::Query, &rec.query, None);
        if seen_queries.insert(g.nodes()[q].node_ref.key.clone()) {
            let mut tf: BTreeMap<String, f64> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_insert(0.0) += 1.0;
            }
            for (term, count) in tf {
                let t = g.intern(NodeKind::QueryTerm, &term, None);
                debug_assert!(g.allowed_edge(t, q));
                g.add_edge_weight(t, q, count);
            }
        }
        let Some(item) = catalog.get(&rec.item_id) else {
            continue;
        };
        let engagement = weights.click * rec.clicks as f64
            + weights.atc * rec.atc as f64
            + weights.order * rec.orders as f64;
        if engagement <= 0.0 {
            continue;
        }
        for (kind, value) in [
            (AttrKind::Brand, &item.brand),
            (AttrKind::ProductType, &item.product_type),
        ] {
            let a = g.intern(NodeKind::Attribute, value, Some(kind));
            debug_assert!(g.allowed_edge(q, a));
            g.add_edge_weight(q, a, engagement);
        }
    }

    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Item;

    fn item(id: &str, brand: &str, pt: &str) -> Item {
        Item {
            item_id: id.into(),
            title: format!("{brand} {pt}"),
            brand: brand.into(),
            product_type: pt.into(),
            popularity: 0.0,
            sales: 0,
        }
    }

    fn fruit_hierarchy() -> HierarchyNode {
        HierarchyNode {
            name: "Root".into(),
            children: vec![
                HierarchyNode {
                    name: "Fruit".into(),
                    children: vec![HierarchyNode::leaf("Apple"), HierarchyNode::leaf("Banana")],
                },
                HierarchyNode {
                    name: "Dairy".into(),
                    children: vec![HierarchyNode::leaf("Milk")],
                },
            ],
        }
    }

    fn rec(query: &str, item_id: &str, clicks: u64, atc: u64, orders: u64) -> EngagementRecord {
        EngagementRecord {
            query: query.into(),
            item_id: item_id.into(),
            clicks,
            atc,
            orders,
        }
    }

    #[test]
    fn engagement_edge_weight_is_atc_plus_orders() {
        let catalog = Catalog::new(vec![item("i1", "Great Value", "Milk")]).unwrap();
        let logs = vec![rec("great value milk", "i1", 99, 5, 2)];
        let g = build_graph(&catalog, &logs, fruit_hierarchy(), EngagementWeights::default());
        let q = g
            .node_index(&NodeRef {
                kind: NodeKind::Query,
                key: "great value milk".into(),
                attr_kind: None,
            })
            .unwrap();
        let b = g.attribute_index(AttrKind::Brand, "Great Value").unwrap();
        let w = g.edges().find(|&(u, v, _)| {
            (u, v) == (q.min(b), q.max(b))
        });
        assert_eq!(w.map(|(_, _, w)| w), Some(7.0));
    }

    #[test]
    fn repeated_term_gets_frequency_weight() {
        let catalog = Catalog::new(vec![item("i1", "B", "Milk")]).unwrap();
        let logs = vec![rec("milk milk", "i1", 0, 10, 10)];
        let g = build_graph(&catalog, &logs, fruit_hierarchy(), EngagementWeights::default());
        let q = g
            .node_index(&NodeRef {
                kind: NodeKind::Query,
                key: "milk milk".into(),
                attr_kind: None,
            })
            .unwrap();
        let t = g
            .node_index(&NodeRef {
                kind: NodeKind::QueryTerm,
                key: "milk".into(),
                attr_kind: None,
            })
            .unwrap();
        let w = g
            .edges()
            .find(|&(u, v, _)| (u, v) == (q.min(t), q.max(t)))
            .map(|(_, _, w)| w);
        assert_eq!(w, Some(2.0));
    }

    #[test]
    fn node_census_matches_construction() {
        let catalog = Catalog::new(vec![
            item("i1", "Great Value", "Milk"),
            item("i2", "Sunny Farm", "Apple"),
        ])
        .unwrap();
        let logs = vec![
            rec("milk", "i1", 1, 10, 10),
            rec("fresh apple", "i2", 1, 10, 10),
        ];
        let g = build_graph(&catalog, &logs, fruit_hierarchy(), EngagementWeights::default());
        // queries: milk, fresh apple -> 2
        // query terms: milk, fresh, apple -> 3
        // attributes: Great Value, Milk, Sunny Farm, Apple -> 4
        // attribute terms: great, value, milk, sunny, farm, apple -> 6
        assert_eq!(g.node_count(), 2 + 3 + 4 + 6);
    }

    #[test]
    fn empty_logs_leave_attribute_nodes_only() {
        let catalog = Catalog::new(vec![item("i1", "Great Value", "Milk")]).unwrap();
        let g = build_graph(&catalog, &[], fruit_hierarchy(), EngagementWeights::default());
        assert!(g
            .nodes()
            .iter()
            .all(|n| matches!(n.node_ref.kind, NodeKind::Attribute | NodeKind::AttributeTerm)));
        assert!(g.node_count() > 0);
    }

    #[test]
    fn hierarchy_path_examples() {
        let g = ProductGraph::new(fruit_hierarchy());
        assert_eq!(
            g.hierarchy_path("Apple").unwrap(),
            vec!["Root", "Fruit", "Apple"]
        );
        assert_eq!(g.hierarchy_path("Root").unwrap(), vec!["Root"]);
        assert!(g.hierarchy_path("Widget").is_err());
    }

    #[test]
    fn adjacency_symmetric_zero_diagonal() {
        let catalog = Catalog::new(vec![
            item("i1", "Great Value", "Milk"),
            item("i2", "Sunny Farm", "Apple"),
        ])
        .unwrap();
        let logs = vec![rec("milk", "i1", 0, 3, 4), rec("apple", "i2", 0, 2, 2)];
        let g = build_graph(&catalog, &logs, fruit_hierarchy(), EngagementWeights::default());
        let a = g.adjacency();
        assert_eq!(a.rows, g.node_count());
        let mut nonzero = 0;
        for i in 0..a.rows {
            assert_eq!(a[(i, i)], 0.0);
            for j in 0..a.cols {
                assert_eq!(a[(i, j)], a[(j, i)]);
                if j > i && a[(i, j)] != 0.0 {
                    nonzero += 1;
                }
            }
        }
        assert_eq!(nonzero, g.edge_count());
    }

    #[test]
    fn every_query_node_has_a_term_edge() {
        let c = crate::corpus::generate::generate_corpus(
            5,
            &crate::corpus::generate::CorpusSpec {
                items: 60,
                queries: 30,
                ..Default::default()
            },
        )
        .unwrap();
        let logs = crate::corpus::filter_logs(&c.logs, 10, 10);
        let g = build_graph(&c.catalog, &logs, c.hierarchy, EngagementWeights::default());
        for (i, n) in g.nodes().iter().enumerate() {
            if n.node_ref.kind == NodeKind::Query {
                let has_term = g.edges().any(|(u, v, _)| {
                    (u == i && g.nodes()[v].node_ref.kind == NodeKind::QueryTerm)
                        || (v == i && g.nodes()[u].node_ref.kind == NodeKind::QueryTerm)
                });
                assert!(has_term, "query node {} lacks a term edge", n.label);
            }
        }
    }

    #[test]
    fn lateral_neighbors_ranked_and_kind_filtered() {
        let catalog = Catalog::new(vec![
            item("i1", "A", "Noodles"),
            item("i2", "A", "Instant Noodles"),
            item("i3", "A", "Noodle Soups"),
        ])
        .unwrap();
        let mut g = build_graph(&catalog, &[], fruit_hierarchy(), EngagementWeights::default());
        let n = g.attribute_index(AttrKind::ProductType, "Noodles").unwrap();
        let inst = g
            .attribute_index(AttrKind::ProductType, "Instant Noodles")
            .unwrap();
        let soup = g
            .attribute_index(AttrKind::ProductType, "Noodle Soups")
            .unwrap();
        let brand = g.attribute_index(AttrKind::Brand, "A").unwrap();
        g.set_lateral([(n, inst, 0.9), (soup, n, 0.8), (n, brand, 0.99)]);

        let top = g.lateral_neighbors(AttrKind::ProductType, "Noodles", 5);
        let labels: Vec<&str> = top.iter().map(|(n, _)| n.label.as_str()).collect();
        assert_eq!(labels, vec!["Instant Noodles", "Noodle Soups"]);
        assert!(g.lateral_neighbors(AttrKind::ProductType, "Noodles", 0).is_empty());
        assert!(g.lateral_neighbors(AttrKind::ProductType, "Unknown", 3).is_empty());
    }
}
