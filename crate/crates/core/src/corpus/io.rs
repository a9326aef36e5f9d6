//! On-disk formats: catalog as JSON-Lines, logs as TSV with a header row,
//! hierarchy as a JSON name tree.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{Catalog, EngagementRecord, HierarchyNode, Item};

pub fn write_catalog(path: &Path, catalog: &Catalog) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for item in catalog.items() {
        serde_json::to_writer(&mut f, item)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_catalog(path: &Path) -> Result<Catalog> {
    let f = fs::File::open(path)?;
    let mut items = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: Item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            file: path.display().to_string(),
            msg: format!("line {}: {}", lineno + 1, e),
        })?;
        items.push(item);
    }
    Catalog::new(items)
}

const LOG_HEADER: &str = "query\titem_id\tclicks\tatc\torders";

pub fn write_logs(path: &Path, logs: &[EngagementRecord]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "{LOG_HEADER}")?;
    for r in logs {
        writeln!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            r.query, r.item_id, r.clicks, r.atc, r.orders
        )?;
    }
    Ok(())
}

pub fn read_logs(path: &Path) -> Result<Vec<EngagementRecord>> {
    let f = fs::File::open(path)?;
    let mut lines = BufReader::new(f).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != LOG_HEADER {
        return Err(Error::Parse {
            file: path.display().to_string(),
            msg: format!("expected header {LOG_HEADER:?}, got {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::Parse {
                file: path.display().to_string(),
                msg: format!("line {}: expected 5 columns, got {}", lineno + 2, cols.len()),
            });
        }
        let parse_count = |s: &str, name: &str| -> Result<u64> {
            s.parse().map_err(|_| Error::Parse {
                file: path.display().to_string(),
                msg: format!("line {}: bad {name} {s:?}", lineno + 2),
            })
        };
        out.push(EngagementRecord {
            query: cols[0].to_string(),
            item_id: cols[1].to_string(),
            clicks: parse_count(cols[2], "clicks")?,
            atc: parse_count(cols[3], "atc")?,
            orders: parse_count(cols[4], "orders")?,
        });
    }
    Ok(out)
}

pub fn write_hierarchy(path: &Path, root: &HierarchyNode) -> Result<()> {
    let f = fs::File::create(path)?;
    serde_json::to_writer_pretty(f, root)?;
    Ok(())
}

pub fn read_hierarchy(path: &Path) -> Result<HierarchyNode> {
    let f = fs::File::open(path)?;
    Ok(serde_json::from_reader(f)?)
}
