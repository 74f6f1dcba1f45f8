use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::ClipSampling;

/// Self-supervised task driving the combined representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pretext {
    #[default]
    StructureProximity,
    LinkPrediction,
}

/// Which nodes appear in the denominator of the clip contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeMode {
    /// `n` uniform draws from the other nodes.
    #[default]
    Sampled,
    /// Every other node. Quadratic, meant for small graphs.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Total representation width; each half gets `d / 2`.
    pub d: usize,
    pub tau: f64,
    pub tau_g: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub n: usize,
    pub n_prime: usize,
    pub k_d: usize,
    pub pretext: Pretext,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// GCN/GRU width inside each generator. Zero means "same as the output".
    pub hidden: usize,
    /// Initial `α` of the length sampler.
    pub alpha_init: f64,
    pub clip_sampling: ClipSampling,
    pub negative_mode: NegativeMode,
    /// Subsample positive edges per snapshot for the pretext loss.
    pub max_edges_per_snapshot: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d: 32,
            tau: 0.1,
            tau_g: 0.01,
            lambda1: 0.5,
            lambda2: 0.1,
            lambda3: 5e-7,
            n: 5,
            n_prime: 256,
            k_d: 1,
            pretext: Pretext::StructureProximity,
            learning_rate: 0.01,
            epochs: 200,
            seed: 0,
            hidden: 0,
            alpha_init: 0.5,
            clip_sampling: ClipSampling::Bidirectional,
            negative_mode: NegativeMode::Sampled,
            max_edges_per_snapshot: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.d < 2 || self.d % 2 != 0 {
            return bad("d must be even and at least 2");
        }
        if [self.lambda1, self.lambda2, self.lambda3]
            .iter()
            .any(|l| !(l.is_finite() && *l >= 0.0))
        {
            return bad("lambda weights must be finite and non-negative");
        }
        if !(self.tau > 0.0 && self.tau_g > 0.0) {
            return bad("tau and tau_g must be positive");
        }
        if self.n == 0 || self.n_prime == 0 {
            return bad("n and n_prime must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.alpha_init > 0.0 && self.alpha_init < 1.0) {
            return bad("alpha_init must lie in (0, 1)");
        }
        if self.max_edges_per_snapshot == Some(0) {
            return bad("max_edges_per_snapshot must be at least 1");
        }
        Ok(())
    }

    pub fn half(&self) -> usize {
        self.d / 2
    }

    pub fn hidden_width(&self, out: usize) -> usize {
        if self.hidden == 0 {
            out
        } else {
            self.hidden
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
