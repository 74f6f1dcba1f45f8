//! Whitespace-separated `src dst t` edge lists with 1-based snapshot indices.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{DynamicGraph, Snapshot};
use crate::error::{Error, Result};

/// Parse an edge list into `t_count` snapshots.
///
/// Blank lines and lines starting with `#` are skipped; further columns after
/// the third are ignored. Pairs are symmetrised and repeated records collapse.
pub fn load_edge_list<R: Read>(source: R, t_count: usize) -> Result<DynamicGraph> {
    let mut per_t: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); t_count];
    let mut max_node: Option<usize> = None;
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let mut next = |what: &str| -> Result<usize> {
            let tok = fields.next().ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("missing {what}"),
            })?;
            tok.parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("{what} `{tok}` is not a nonnegative integer"),
            })
        };
        let (u, v, t) = (next("src")?, next("dst")?, next("t")?);
        if t == 0 || t > t_count {
            return Err(Error::SnapshotRange {
                line: line_no,
                t,
                max: t_count,
            });
        }
        max_node = Some(max_node.map_or(u.max(v), |m| m.max(u).max(v)));
        if u != v {
            per_t[t - 1].insert((u.min(v), u.max(v)));
        }
    }
    let n = max_node.map_or(0, |m| m + 1);
    let snapshots = per_t
        .into_iter()
        .map(|e| Snapshot::from_edges(n, e))
        .collect();
    DynamicGraph::new(n, snapshots)
}

pub fn read_edge_list(path: impl AsRef<Path>, t_count: usize) -> Result<DynamicGraph> {
    load_edge_list(File::open(path)?, t_count)
}

/// Inverse of [`load_edge_list`]: one `u v t` line per undirected edge.
pub fn write_edge_list<W: Write>(g: &DynamicGraph, mut out: W) -> Result<()> {
    writeln!(out, "# nodes={} snapshots={}", g.node_count(), g.len())?;
    for (t, s) in g.snapshots().iter().enumerate() {
        for &(u, v) in s.edges() {
            writeln!(out, "{u} {v} {}", t + 1)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_line_example() {
        let g = load_edge_list("0 1 1\n1 2 2\n".as_bytes(), 2).unwrap();
        assert_eq!(g.node_count(), 3);
        assert!(g.snapshot(0).has_edge(0, 1));
        assert_eq!(g.snapshot(0).edge_count(), 1);
        assert!(g.snapshot(1).has_edge(1, 2));
        assert_eq!(g.snapshot(1).edge_count(), 1);
    }

    #[test]
    fn empty_stream() {
        let g = load_edge_list("".as_bytes(), 3).unwrap();
        assert_eq!(g.node_count(), 0);
        assert_eq!(g.len(), 3);
        assert_eq!(g.total_edges(), 0);
    }

    #[test]
    fn comments_duplicates_and_direction() {
        let src = "# header\n\n3 1 1\n1 3 1\n3 1 1\n";
        let g = load_edge_list(src.as_bytes(), 1).unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.total_edges(), 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = load_edge_list("0 1 1\n0 x 1\n".as_bytes(), 1).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = load_edge_list("0 1\n".as_bytes(), 1).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn snapshot_out_of_range() {
        let err = load_edge_list("0 1 3\n".as_bytes(), 2).unwrap_err();
        assert!(matches!(err, Error::SnapshotRange { line: 1, t: 3, max: 2 }));
        let err = load_edge_list("0 1 0\n".as_bytes(), 2).unwrap_err();
        assert!(matches!(err, Error::SnapshotRange { t: 0, .. }));
    }

    #[test]
    fn write_then_read() {
        let g = load_edge_list("0 1 1\n1 2 2\n4 2 2\n".as_bytes(), 2).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        assert_eq!(load_edge_list(buf.as_slice(), 2).unwrap(), g);
    }
}
