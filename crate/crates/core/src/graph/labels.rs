use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Static,
    PerSnapshot,
}

/// Node labels keyed by `(node, t)`; `t` is `None` for static tables and
/// zero-based otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    kind: LabelKind,
    values: BTreeMap<(usize, Option<usize>), usize>,
    class_count: usize,
}

impl LabelTable {
    pub fn new_static(labels: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let values: BTreeMap<_, _> = labels.into_iter().map(|(v, c)| ((v, None), c)).collect();
        Self::build(LabelKind::Static, values)
    }

    pub fn new_per_snapshot(labels: impl IntoIterator<Item = (usize, usize, usize)>) -> Self {
        let values: BTreeMap<_, _> = labels
            .into_iter()
            .map(|(v, t, c)| ((v, Some(t)), c))
            .collect();
        Self::build(LabelKind::PerSnapshot, values)
    }

    fn build(kind: LabelKind, values: BTreeMap<(usize, Option<usize>), usize>) -> Self {
        let class_count = values.values().max().map_or(0, |m| m + 1);
        Self {
            kind,
            values,
            class_count,
        }
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(node, t, class)` in key order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, Option<usize>, usize)> + '_ {
        self.values.iter().map(|(&(v, t), &c)| (v, t, c))
    }

    pub fn get(&self, node: usize, t: Option<usize>) -> Option<usize> {
        self.values.get(&(node, t)).copied()
    }

    pub fn validate(&self, node_count: usize, t_count: usize) -> Result<()> {
        for (v, t, _) in self.iter() {
            if v >= node_count {
                return Err(Error::Contract(format!("label for unknown node {v}")));
            }
            if let Some(t) = t {
                if t >= t_count {
                    return Err(Error::Contract(format!("label at snapshot {} > T", t + 1)));
                }
            }
        }
        Ok(())
    }

    /// `node label` or `node t label` lines (t 1-based); the column count of
    /// the first data line decides the kind.
    pub fn read<R: Read>(source: R) -> Result<Self> {
        let mut kind = None;
        let mut values = BTreeMap::new();
        for (i, line) in BufReader::new(source).lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let nums = trimmed
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<usize>().map_err(|_| Error::Parse {
                        line: line_no,
                        msg: format!("`{tok}` is not a nonnegative integer"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let this = match nums.len() {
                2 => LabelKind::Static,
                3 => LabelKind::PerSnapshot,
                k => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("expected 2 or 3 columns, found {k}"),
                    })
                }
            };
            if *kind.get_or_insert(this) != this {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "mixed static and per-snapshot rows".into(),
                });
            }
            match this {
                LabelKind::Static => {
                    values.insert((nums[0], None), nums[1]);
                }
                LabelKind::PerSnapshot => {
                    if nums[1] == 0 {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "snapshot indices are 1-based".into(),
                        });
                    }
                    values.insert((nums[0], Some(nums[1] - 1)), nums[2]);
                }
            }
        }
        Ok(Self::build(kind.unwrap_or(LabelKind::Static), values))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (v, t, c) in self.iter() {
            match t {
                None => writeln!(out, "{v} {c}")?,
                Some(t) => writeln!(out, "{v} {} {c}", t + 1)?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_snapshot_file() {
        let t = LabelTable::read("0 1 2\n1 2 0\n".as_bytes()).unwrap();
        assert_eq!(t.kind(), LabelKind::PerSnapshot);
        assert_eq!(t.get(0, Some(0)), Some(2));
        assert_eq!(t.class_count(), 3);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 1 2\n1 2 0\n");
    }

    #[test]
    fn mixed_rows_rejected() {
        assert!(LabelTable::read("0 1\n1 2 0\n".as_bytes()).is_err());
    }

    #[test]
    fn validate_catches_bad_node() {
        let t = LabelTable::new_static([(5, 0)]);
        assert!(t.validate(5, 1).is_err());
        assert!(t.validate(6, 1).is_ok());
    }
}
