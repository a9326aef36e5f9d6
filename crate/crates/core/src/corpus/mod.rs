//! Catalog records, engagement logs, and the product-type hierarchy,
//! plus the log filter every downstream module assumes.

pub mod generate;
pub mod io;
pub mod text;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use text::{normalize, stem, TokenStream};

/// Attribute dimensions carried by catalog items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrKind {
    Brand,
    ProductType,
}

impl AttrKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttrKind::Brand => "brand",
            AttrKind::ProductType => "product_type",
        }
    }

    pub fn parse(s: &str) -> Result<AttrKind> {
        match s {
            "brand" => Ok(AttrKind::Brand),
            "product_type" | "pt" => Ok(AttrKind::ProductType),
            other => Err(Error::InvalidInput(format!("unknown attribute kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: String,
    pub title: String,
    pub brand: String,
    pub product_type: String,
    pub popularity: f64,
    pub sales: u64,
}

impl Item {
    pub fn attr(&self, kind: AttrKind) -> &str {
        match kind {
            AttrKind::Brand => &self.brand,
            AttrKind::ProductType => &self.product_type,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementRecord {
    pub query: String,
    pub item_id: String,
    pub clicks: u64,
    pub atc: u64,
    pub orders: u64,
}

/// Catalog with an id lookup. Construction rejects duplicate item ids.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    items: Vec<Item>,
    by_id: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(items: Vec<Item>) -> Result<Catalog> {
        let mut by_id = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if item.brand.is_empty() || item.product_type.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "item {} has an empty brand or product_type",
                    item.item_id
                )));
            }
            if by_id.insert(item.item_id.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate item_id {}",
                    item.item_id
                )));
            }
        }
        Ok(Catalog { items, by_id })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, item_id: &str) -> Option<&Item> {
        self.by_id.get(item_id).map(|&i| &self.items[i])
    }

    /// Item ids carrying the given attribute value, in catalog order.
    pub fn items_with_attr(&self, kind: AttrKind, value: &str) -> Vec<&Item> {
        self.items
            .iter()
            .filter(|it| it.attr(kind) == value)
            .collect()
    }

    /// Distinct values of an attribute, in first-seen order.
    pub fn attr_values(&self, kind: AttrKind) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for it in &self.items {
            let v = it.attr(kind);
            if seen.insert(v.to_string()) {
                out.push(v.to_string());
            }
        }
        out
    }
}

/// Product-type hierarchy as shipped on disk: a rooted name tree whose
/// leaves are catalog product types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub name: String,
    #[serde(default)]
    pub children: Vec<HierarchyNode>,
}

impl HierarchyNode {
    pub fn leaf(name: impl Into<String>) -> Self {
        HierarchyNode {
            name: name.into(),
            children: Vec::new(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        if self.is_leaf() {
            out.push(&self.name);
        } else {
            for c in &self.children {
                c.collect_leaves(out);
            }
        }
    }

    /// Root-to-target path by node name, if present.
    pub fn path_to(&self, name: &str) -> Option<Vec<String>> {
        if self.name == name {
            return Some(vec![self.name.clone()]);
        }
        for c in &self.children {
            if let Some(mut p) = c.path_to(name) {
                p.insert(0, self.name.clone());
                return Some(p);
            }
        }
        None
    }

    /// Nodes at the given depth (root is depth 0), left to right.
    pub fn at_depth(&self, depth: usize) -> Vec<&HierarchyNode> {
        let mut out = Vec::new();
        self.walk_depth(0, depth, &mut out);
        out
    }

    fn walk_depth<'a>(&'a self, d: usize, target: usize, out: &mut Vec<&'a HierarchyNode>) {
        if d == target {
            out.push(self);
            return;
        }
        for c in &self.children {
            c.walk_depth(d + 1, target, out);
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(|c| c.depth()).max().unwrap_or(0)
    }
}

pub const DEFAULT_MIN_ATC: u64 = 10;
pub const DEFAULT_MIN_ORDERS: u64 = 10;

/// Keep only query-item pairs with enough cart adds AND enough orders.
/// Order-preserving; `(0, 0)` is the identity.
pub fn filter_logs(
    records: &[EngagementRecord],
    min_atc: u64,
    min_orders: u64,
) -> Vec<EngagementRecord> {
    records
        .iter()
        .filter(|r| r.atc >= min_atc && r.orders >= min_orders)
        .cloned()
        .collect()
}
