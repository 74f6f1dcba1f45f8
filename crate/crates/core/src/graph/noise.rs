use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DynamicGraph, Snapshot};

/// Per snapshot, delete `⌊(r/2)% · |E|⌋` edges uniformly at random and add the
/// same number of uniformly drawn non-edges.
///
/// When the complement has fewer free pairs than the quota, every free pair
/// is added.
pub fn perturb_edges(g: &DynamicGraph, rate_percent: f64, seed: u64) -> DynamicGraph {
    assert!(
        (0.0..=100.0).contains(&rate_percent),
        "noise rate {rate_percent} outside [0, 100]"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.node_count();
    let snapshots = g
        .snapshots()
        .iter()
        .map(|s| {
            let quota = ((rate_percent / 200.0) * s.edge_count() as f64).floor() as usize;
            if quota == 0 {
                return s.clone();
            }
            let edges: Vec<(usize, usize)> = s.edges().iter().copied().collect();
            let quota = quota.min(edges.len());
            let drop: BTreeSet<usize> = sample(&mut rng, edges.len(), quota).into_iter().collect();
            let mut kept: BTreeSet<(usize, usize)> = edges
                .iter()
                .enumerate()
                .filter(|(i, _)| !drop.contains(i))
                .map(|(_, &e)| e)
                .collect();

            let total_pairs = n * n.saturating_sub(1) / 2;
            let free = total_pairs - edges.len();
            let mut to_add = quota.min(free);
            while to_add > 0 {
                let u = rng.random_range(0..n);
                let v = rng.random_range(0..n);
                if u == v {
                    continue;
                }
                let e = (u.min(v), u.max(v));
                if s.has_edge(e.0, e.1) || kept.contains(&e) {
                    continue;
                }
                kept.insert(e);
                to_add -= 1;
            }
            Snapshot::from_edges(n, kept)
        })
        .collect();
    DynamicGraph::new(n, snapshots).expect("same shape as input")
}
