//! Loader for the plain edge-list format used by the public SNAP graph
//! dumps: one `FromNodeId ToNodeId` pair per line, `#` comment lines.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses `path` and returns the sorted union of endpoint keys plus the
/// sorted, deduplicated directed edges. Blank lines and lines starting with
/// `#` are skipped; anything else must be exactly two integer fields.
pub fn load_snap_edge_list(path: &Path) -> Result<(Vec<i64>, Vec<(i64, i64)>)> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let reader = BufReader::new(file);

    let mut vertices = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.with_context(|| format!("{}:{}: read failed", path.display(), lineno))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            bail!(
                "{}:{}: expected `FromNodeId ToNodeId`, got {:?}",
                path.display(),
                lineno,
                line
            );
        };
        let from: i64 = a.parse().with_context(|| {
            format!("{}:{}: bad FromNodeId {:?}", path.display(), lineno, a)
        })?;
        let to: i64 = b.parse().with_context(|| {
            format!("{}:{}: bad ToNodeId {:?}", path.display(), lineno, b)
        })?;
        vertices.insert(from);
        vertices.insert(to);
        edges.insert((from, to));
    }

    Ok((
        vertices.into_iter().collect(),
        edges.into_iter().collect(),
    ))
}
