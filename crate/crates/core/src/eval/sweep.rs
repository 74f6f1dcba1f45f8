use std::fmt;
use std::str::FromStr;

use super::tasks::{
    classification_samples, eval_link_prediction, eval_node_classification, features, EvalRow,
    ProbeOptions, Variant,
};
use crate::encoder::RepresentationSet;
use crate::error::{Error, Result};
use crate::graph::{generate_planted, perturb_edges, DynamicGraph, LabelTable, PlantedConfig};
use crate::train::{baseline_representations, extract_representations, train, train_baseline, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Edge noise rate in percent, link prediction on the held-out snapshot.
    Noise,
    /// Share of the downstream training labels, static node classification.
    DataFraction,
    /// Hidden width of the downstream classifier, static node classification.
    ClassifierWidth,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Noise => "noise",
            SweepKind::DataFraction => "data-fraction",
            SweepKind::ClassifierWidth => "classifier-width",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepKind::Noise, SweepKind::DataFraction, SweepKind::ClassifierWidth]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep kind `{s}`")))
    }
}

/// Fraction of link pairs used to fit the link-prediction classifier.
pub const LINK_TRAIN_FRACTION: f64 = 0.5;

/// Representations of the disentangled model and of the backbone alone,
/// both trained on the same graph.
pub struct TrainedPair {
    pub dyted: RepresentationSet,
    pub baseline: RepresentationSet,
}

pub fn train_pair(cfg: &TrainConfig, graph: &DynamicGraph) -> Result<TrainedPair> {
    let (model, _) = train(cfg, graph)?;
    let (base, _) = train_baseline(cfg, graph)?;
    Ok(TrainedPair {
        dyted: extract_representations(&model, graph)?,
        baseline: baseline_representations(&base, graph)?,
    })
}

/// Train on all but the last snapshot and score links of the last one, using
/// the representation at the snapshot before it.
pub fn next_snapshot_link_auc(
    reps: &RepresentationSet,
    variant: Variant,
    graph: &DynamicGraph,
    seed: u64,
) -> Result<(f64, f64)> {
    let t = graph.len() - 1;
    let x = features(reps, variant, t - 1)?;
    let s = eval_link_prediction(&x, graph.snapshot(t), LINK_TRAIN_FRACTION, seed)?;
    Ok((s.auc, s.ap))
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub planted: PlantedConfig,
    pub train: TrainConfig,
}

fn row(task: String, variant: Variant, seed: u64, metric: &str, value: f64) -> EvalRow {
    EvalRow {
        task,
        variant: variant.name().to_string(),
        seed,
        metric: metric.to_string(),
        value,
    }
}

/// One row per (grid point, variant, seed). Each seed regenerates the planted
/// graph and retrains both models.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<EvalRow>> {
    let mut rows = Vec::new();
    if spec.grid.is_empty() {
        return Ok(rows);
    }
    for &seed in &spec.seeds {
        let planted = generate_planted(&PlantedConfig {
            seed: spec.planted.seed.wrapping_add(seed),
            ..spec.planted.clone()
        })?;
        let cfg = TrainConfig {
            seed,
            ..spec.train.clone()
        };
        match spec.kind {
            SweepKind::Noise => {
                for &rate in &spec.grid {
                    let noisy = perturb_edges(&planted.graph, rate, seed);
                    let history = noisy.prefix(noisy.len() - 1);
                    let pair = train_pair(&cfg, &history)?;
                    let task = format!("link@noise={rate}");
                    for (variant, reps) in
                        [(Variant::Combine, &pair.dyted), (Variant::Baseline, &pair.baseline)]
                    {
                        let (auc, _) = next_snapshot_link_auc(reps, variant, &noisy, seed)?;
                        rows.push(row(task.clone(), variant, seed, "auc", auc));
                    }
                }
            }
            SweepKind::DataFraction | SweepKind::ClassifierWidth => {
                let pair = train_pair(&cfg, &planted.graph)?;
                for &point in &spec.grid {
                    let opts = if spec.kind == SweepKind::DataFraction {
                        ProbeOptions {
                            label_fraction: point,
                            ..Default::default()
                        }
                    } else {
                        ProbeOptions {
                            hidden: point as usize,
                            ..Default::default()
                        }
                    };
                    let task = format!("static@{}={point}", spec.kind);
                    for (variant, reps) in static_variants(&pair) {
                        let f1 = static_probe(reps, &planted.static_labels, variant, opts, seed)?;
                        rows.push(row(task.clone(), variant, seed, "micro-f1", f1));
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn static_variants(pair: &TrainedPair) -> [(Variant, &RepresentationSet); 4] {
    [
        (Variant::Combine, &pair.dyted),
        (Variant::TimeInvariant, &pair.dyted),
        (Variant::TimeVarying, &pair.dyted),
        (Variant::Baseline, &pair.baseline),
    ]
}

fn static_probe(
    reps: &RepresentationSet,
    labels: &LabelTable,
    variant: Variant,
    opts: ProbeOptions,
    seed: u64,
) -> Result<f64> {
    let (x, y) = classification_samples(reps, labels, variant)?;
    Ok(eval_node_classification(&x, &y, opts, seed)?.micro)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_yields_no_rows() {
        let spec = SweepSpec {
            kind: SweepKind::Noise,
            grid: vec![],
            seeds: vec![0, 1, 2],
            planted: PlantedConfig::default(),
            train: TrainConfig::default(),
        };
        assert!(run_sweep(&spec).unwrap().is_empty());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [SweepKind::Noise, SweepKind::DataFraction, SweepKind::ClassifierWidth] {
            assert_eq!(k.name().parse::<SweepKind>().unwrap(), k);
        }
    }
}
