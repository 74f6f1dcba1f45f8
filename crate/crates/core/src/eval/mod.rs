//! Downstream probes, metrics, mutual information and robustness sweeps.

mod classifier;
mod metrics;
mod mi;
mod sweep;
mod tasks;

pub use classifier::{LogisticRegression, SoftmaxProbe, Standardizer};
pub use metrics::{auc, average_precision, f1_scores, F1Scores};
pub use mi::{estimate_mi, paired_samples, KSG_K};
pub use sweep::{
    next_snapshot_link_auc, run_sweep, train_pair, SweepKind, SweepSpec, TrainedPair,
    LINK_TRAIN_FRACTION,
};
pub use tasks::{
    classification_samples, eval_link_prediction, eval_node_classification, features,
    sample_link_pairs, write_rows, EvalRow, LinkScores, NodeSplit, ProbeOptions, Variant,
    REPORT_HEADER,
};
