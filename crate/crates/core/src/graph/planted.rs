//! Synthetic dynamic graphs with a planted static partition and a planted
//! per-snapshot state partition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DynamicGraph, LabelTable, Snapshot};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedConfig {
    pub node_count: usize,
    #[serde(rename = "T")]
    pub snapshots: usize,
    pub static_classes: usize,
    pub dynamic_states: usize,
    /// Per-step probability that a node leaves its current state.
    pub state_transition_prob: f64,
    pub edge_base_rate: f64,
    pub static_affinity: f64,
    pub dynamic_affinity: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            node_count: 200,
            snapshots: 12,
            static_classes: 4,
            dynamic_states: 3,
            state_transition_prob: 0.3,
            edge_base_rate: 0.005,
            static_affinity: 0.1,
            dynamic_affinity: 0.05,
            seed: 0,
        }
    }
}

impl PlantedConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {x} outside [0, 1]")))
            }
        };
        if self.static_classes < 2 || self.dynamic_states < 2 {
            return Err(Error::Config(
                "static_classes and dynamic_states must both be >= 2".into(),
            ));
        }
        if self.snapshots == 0 {
            return Err(Error::Config("T must be >= 1".into()));
        }
        unit("state_transition_prob", self.state_transition_prob)?;
        unit("edge_base_rate", self.edge_base_rate)?;
        unit("static_affinity", self.static_affinity)?;
        unit("dynamic_affinity", self.dynamic_affinity)?;
        let top = self.edge_base_rate + self.static_affinity + self.dynamic_affinity;
        if top > 1.0 {
            return Err(Error::Config(format!(
                "edge probability can reach {top} > 1 (edge_base_rate + static_affinity + dynamic_affinity)"
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone)]
pub struct PlantedGraph {
    pub graph: DynamicGraph,
    /// Node → static class.
    pub static_labels: LabelTable,
    /// (node, t) → dynamic state.
    pub dynamic_labels: LabelTable,
}

/// Draw a planted graph; a pure function of the config (including its seed).
pub fn generate_planted(cfg: &PlantedConfig) -> Result<PlantedGraph> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.node_count;
    let classes: Vec<usize> = (0..n).map(|_| rng.random_range(0..cfg.static_classes)).collect();

    let m = cfg.dynamic_states;
    let mut states: Vec<Vec<usize>> = Vec::with_capacity(cfg.snapshots);
    states.push((0..n).map(|_| rng.random_range(0..m)).collect());
    for t in 1..cfg.snapshots {
        let next = states[t - 1]
            .iter()
            .map(|&z| {
                if rng.random_bool(cfg.state_transition_prob) {
                    // uniform over the other m - 1 states
                    let j = rng.random_range(0..m - 1);
                    if j >= z {
                        j + 1
                    } else {
                        j
                    }
                } else {
                    z
                }
            })
            .collect();
        states.push(next);
    }

    let mut snapshots = Vec::with_capacity(cfg.snapshots);
    for z in &states {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let mut p = cfg.edge_base_rate;
                if classes[u] == classes[v] {
                    p += cfg.static_affinity;
                }
                if z[u] == z[v] {
                    p += cfg.dynamic_affinity;
                }
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        snapshots.push(Snapshot::from_edges(n, edges));
    }

    let static_labels = LabelTable::new_static(classes.iter().copied().enumerate());
    let dynamic_labels = LabelTable::new_per_snapshot(
        states
            .iter()
            .enumerate()
            .flat_map(|(t, z)| z.iter().enumerate().map(move |(v, &s)| (v, t, s))),
    );
    Ok(PlantedGraph {
        graph: DynamicGraph::new(n, snapshots)?,
        static_labels,
        dynamic_labels,
    })
}
