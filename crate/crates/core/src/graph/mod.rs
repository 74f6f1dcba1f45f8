//! Discrete-time dynamic graphs: snapshots, normalisation, I/O, synthetic
//! generation and edge noise.

mod csr;
mod io;
mod labels;
mod noise;
mod planted;

use std::collections::BTreeSet;
use std::sync::Arc;

pub use csr::Csr;
pub use io::{load_edge_list, read_edge_list, write_edge_list};
pub use labels::{LabelKind, LabelTable};
pub use noise::perturb_edges;
pub use planted::{generate_planted, PlantedConfig, PlantedGraph};

/// One static graph in the sequence. Edges are undirected and stored once as
/// `(min, max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Csr,
}

impl Snapshot {
    /// Builds a snapshot from arbitrary pairs; direction is dropped and
    /// self-loops are discarded.
    pub fn from_edges(node_count: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let edges: BTreeSet<(usize, usize)> = pairs
            .into_iter()
            .filter(|&(u, v)| u != v)
            .map(|(u, v)| (u.min(v), u.max(v)))
            .inspect(|&(_, v)| assert!(v < node_count, "node {v} outside 0..{node_count}"))
            .collect();
        let mut trip = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in &edges {
            trip.push((u, v, 1.0));
            trip.push((v, u, 1.0));
        }
        let adjacency = Csr::from_triplets(node_count, node_count, trip);
        Self {
            node_count,
            edges,
            adjacency,
        }
    }

    pub fn empty(node_count: usize) -> Self {
        Self::from_edges(node_count, std::iter::empty())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> &Csr {
        &self.adjacency
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency.row(v).count()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.row(v).map(|(c, _)| c)
    }

    /// Same edges, larger index space.
    pub fn widen(&self, node_count: usize) -> Self {
        assert!(node_count >= self.node_count);
        Self::from_edges(node_count, self.edges.iter().copied())
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn normalize_adjacency(s: &Snapshot) -> Csr {
    let n = s.node_count();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| 1.0 / ((s.degree(v) + 1) as f64).sqrt())
        .collect();
    let mut trip = Vec::with_capacity(s.adjacency().nnz() + n);
    for (v, &d) in inv_sqrt.iter().enumerate() {
        trip.push((v, v, d * d));
        for u in s.neighbors(v) {
            trip.push((v, u, d * inv_sqrt[u]));
        }
    }
    Csr::from_triplets(n, n, trip)
}

/// Ordered snapshots over one shared node index space.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicGraph {
    node_count: usize,
    snapshots: Vec<Snapshot>,
}

impl DynamicGraph {
    pub fn new(node_count: usize, snapshots: Vec<Snapshot>) -> crate::Result<Self> {
        if snapshots.is_empty() {
            return Err(crate::Error::Contract("a dynamic graph needs T >= 1".into()));
        }
        let snapshots = snapshots
            .into_iter()
            .map(|s| {
                if s.node_count() == node_count {
                    Ok(s)
                } else if s.node_count() < node_count {
                    Ok(s.widen(node_count))
                } else {
                    Err(crate::Error::Contract(format!(
                        "snapshot has {} nodes, graph only {node_count}",
                        s.node_count()
                    )))
                }
            })
            .collect::<crate::Result<Vec<_>>>()?;
        Ok(Self {
            node_count,
            snapshots,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Number of snapshots `T`.
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    /// Zero-based snapshot access.
    pub fn snapshot(&self, t: usize) -> &Snapshot {
        &self.snapshots[t]
    }

    /// First `t` snapshots.
    pub fn prefix(&self, t: usize) -> Self {
        assert!(t >= 1 && t <= self.len());
        Self {
            node_count: self.node_count,
            snapshots: self.snapshots[..t].to_vec(),
        }
    }

    pub fn total_edges(&self) -> usize {
        self.snapshots.iter().map(Snapshot::edge_count).sum()
    }

    /// Normalised adjacency of every snapshot, in time order.
    pub fn normalized(&self) -> Vec<Arc<Csr>> {
        self.snapshots
            .iter()
            .map(|s| Arc::new(normalize_adjacency(s)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_node_normalizes_to_identity() {
        let a = normalize_adjacency(&Snapshot::empty(1));
        assert_eq!(a.to_dense().data(), &[1.0]);
    }

    #[test]
    fn single_edge_normalizes_to_halves() {
        let a = normalize_adjacency(&Snapshot::from_edges(2, [(0, 1)]));
        for v in a.to_dense().data() {
            assert!((v - 0.5).abs() < 1e-15, "{v}");
        }
    }

    #[test]
    fn path_graph_entry() {
        let a = normalize_adjacency(&Snapshot::from_edges(3, [(0, 1), (1, 2)]));
        assert!((a.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((a.get(0, 1) - 0.4082).abs() < 1e-4);
        assert!((a.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.get(0, 2), 0.0);
    }

    #[test]
    fn edges_are_undirected() {
        let s = Snapshot::from_edges(3, [(2, 0), (0, 2), (1, 1)]);
        assert_eq!(s.edge_count(), 1);
        assert!(s.has_edge(0, 2) && s.has_edge(2, 0));
        assert!(s.adjacency().is_symmetric(0.0));
    }

    #[test]
    fn graph_requires_a_snapshot() {
        assert!(DynamicGraph::new(3, vec![]).is_err());
    }
}
