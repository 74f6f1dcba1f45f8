use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::classifier::{LogisticRegression, SoftmaxProbe};
use super::metrics::{auc, average_precision, f1_scores, F1Scores};
use crate::autodiff::Tensor;
use crate::encoder::RepresentationSet;
use crate::error::{Error, Result};
use crate::graph::{LabelKind, LabelTable, Snapshot};

/// Which slice of a representation set a task reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// `(s_v, d_v^t)`.
    Combine,
    /// `s_v` alone.
    TimeInvariant,
    /// `d_v^t` alone.
    TimeVarying,
    /// Full-width output of an entangled model.
    Baseline,
    /// Mean over all snapshots of the per-snapshot representation.
    Pooled,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Combine,
        Variant::TimeInvariant,
        Variant::TimeVarying,
        Variant::Baseline,
        Variant::Pooled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Combine => "combine",
            Variant::TimeInvariant => "time-invariant",
            Variant::TimeVarying => "time-varying",
            Variant::Baseline => "baseline",
            Variant::Pooled => "pooled",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// Node features for `variant` at zero-based snapshot `t`.
///
/// The time-invariant variant never touches `D`, and the time-varying and
/// baseline variants never touch `S`.
pub fn features(reps: &RepresentationSet, variant: Variant, t: usize) -> Result<Tensor> {
    let need_s = || {
        reps.s
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("variant {variant} needs a time-invariant part")))
    };
    let need_t = || {
        reps.d
            .get(t)
            .ok_or_else(|| Error::Contract(format!("snapshot {t} outside 0..{}", reps.t_count())))
    };
    match variant {
        Variant::TimeInvariant => Ok(need_s()?.clone()),
        Variant::TimeVarying => Ok(need_t()?.clone()),
        Variant::Combine => Ok(Tensor::hcat(&[need_s()?, need_t()?])),
        Variant::Baseline => {
            if reps.s.is_some() {
                return Err(Error::Contract(
                    "baseline variant expects an entangled representation set".into(),
                ));
            }
            Ok(need_t()?.clone())
        }
        Variant::Pooled => {
            if reps.d.is_empty() {
                return Err(Error::Contract("no snapshots to pool".into()));
            }
            let mut acc = reps.combined(0);
            for k in 1..reps.t_count() {
                acc.add_assign(&reps.combined(k));
            }
            let inv = 1.0 / reps.t_count() as f64;
            Ok(acc.map(|v| v * inv))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkScores {
    pub auc: f64,
    pub ap: f64,
}

/// Edges of `target` against as many uniformly drawn non-edges.
pub fn sample_link_pairs<R: Rng + ?Sized>(target: &Snapshot, rng: &mut R) -> Vec<((usize, usize), bool)> {
    let n = target.node_count();
    let pos: Vec<(usize, usize)> = target.edges().iter().copied().collect();
    let max_neg = n * n.saturating_sub(1) / 2 - pos.len();
    let want = pos.len().min(max_neg);
    let mut neg = BTreeSet::new();
    while neg.len() < want {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && !target.has_edge(u, v) {
            neg.insert((u.min(v), u.max(v)));
        }
    }
    let mut out: Vec<((usize, usize), bool)> = pos.into_iter().map(|p| (p, true)).collect();
    out.extend(neg.into_iter().map(|p| (p, false)));
    out
}

fn hadamard(x: &Tensor, pairs: &[(usize, usize)]) -> Tensor {
    let f = x.cols();
    let mut data = Vec::with_capacity(pairs.len() * f);
    for &(u, v) in pairs {
        data.extend(x.row_slice(u).iter().zip(x.row_slice(v)).map(|(a, b)| a * b));
    }
    Tensor::from_rows(pairs.len(), f, data)
}

/// Logistic regression on Hadamard pair features; AUC and AP on the held-out
/// share of pairs.
pub fn eval_link_prediction(
    x: &Tensor,
    target: &Snapshot,
    train_fraction: f64,
    seed: u64,
) -> Result<LinkScores> {
    if x.rows() != target.node_count() {
        return Err(Error::Contract("features and target snapshot differ in node count".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = sample_link_pairs(target, &mut rng);
    pairs.shuffle(&mut rng);
    let cut = ((pairs.len() as f64) * train_fraction).round() as usize;
    let (train, test) = pairs.split_at(cut.min(pairs.len()));
    let unzip = |s: &[((usize, usize), bool)]| -> (Vec<(usize, usize)>, Vec<bool>) {
        s.iter().copied().unzip()
    };
    let (tr_pairs, tr_y) = unzip(train);
    let (te_pairs, te_y) = unzip(test);
    let model = LogisticRegression::fit(&hadamard(x, &tr_pairs), &tr_y)?;
    let scores = model.decision(&hadamard(x, &te_pairs));
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (s, y) in scores.into_iter().zip(te_y) {
        if y {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    Ok(LinkScores {
        auc: auc(&pos, &neg)?,
        ap: average_precision(&pos, &neg)?,
    })
}

/// Feature rows and labels for a classification task. Static labels read the
/// representation at the last snapshot; per-snapshot labels read it at their
/// own snapshot.
pub fn classification_samples(
    reps: &RepresentationSet,
    labels: &LabelTable,
    variant: Variant,
) -> Result<(Tensor, Vec<usize>)> {
    let last = reps.t_count().saturating_sub(1);
    let mut cache: Vec<Option<Tensor>> = vec![None; reps.t_count().max(1)];
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (node, t, class) in labels.iter() {
        let t = match labels.kind() {
            LabelKind::Static => last,
            LabelKind::PerSnapshot => t.unwrap_or(last),
        };
        if cache[t].is_none() {
            cache[t] = Some(features(reps, variant, t)?);
        }
        let x = cache[t].as_ref().expect("filled above");
        if node >= x.rows() {
            return Err(Error::Contract(format!("label for node {node} outside the representation")));
        }
        rows.push(x.row_slice(node).to_vec());
        y.push(class);
    }
    let f = rows.first().map_or(0, Vec::len);
    Ok((Tensor::from_rows(rows.len(), f, rows.concat()), y))
}

/// Fractions of samples for the train and validation splits; the rest is test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSplit {
    pub train: f64,
    pub val: f64,
}

impl Default for NodeSplit {
    fn default() -> Self {
        Self { train: 0.2, val: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    pub split: NodeSplit,
    /// Hidden width of the classifier; 0 is linear.
    pub hidden: usize,
    /// Share of the train split actually used.
    pub label_fraction: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            split: NodeSplit::default(),
            hidden: 0,
            label_fraction: 1.0,
        }
    }
}

/// Softmax probe on a random split, early-stopped on validation, F1 on test.
pub fn eval_node_classification(
    x: &Tensor,
    y: &[usize],
    opts: ProbeOptions,
    seed: u64,
) -> Result<F1Scores> {
    let n = y.len();
    if x.rows() != n || n == 0 {
        return Err(Error::Contract("features and labels differ in length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (n as f64 * opts.split.train).round() as usize;
    let n_val = (n as f64 * opts.split.val).round() as usize;
    let used = ((n_train as f64) * opts.label_fraction).round().max(1.0) as usize;
    let train = &order[..used.min(n_train)];
    let val = &order[n_train..n_train + n_val];
    let test = &order[n_train + n_val..];
    if test.is_empty() {
        return Err(Error::Contract("split leaves no test samples".into()));
    }
    let classes: BTreeSet<usize> = y.iter().copied().collect();
    let seen: BTreeSet<usize> = train.iter().map(|&i| y[i]).collect();
    if let Some(c) = classes.difference(&seen).next() {
        return Err(Error::Contract(format!("class {c} has no training sample")));
    }
    let k = classes.last().map_or(0, |c| c + 1);
    let take = |idx: &[usize]| (x.gather_rows(idx), idx.iter().map(|&i| y[i]).collect::<Vec<_>>());
    let (xtr, ytr) = take(train);
    let (xva, yva) = take(val);
    let (xte, yte) = take(test);
    let probe = SoftmaxProbe::fit((&xtr, &ytr), (&xva, &yva), k, opts.hidden, &mut rng)?;
    f1_scores(&yte, &probe.predict(&xte)?)
}

/// One evaluated metric.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub task: String,
    pub variant: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

pub const REPORT_HEADER: [&str; 5] = ["task", "variant", "seed", "metric", "value"];

pub fn write_rows<W: Write>(rows: &[EvalRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.task.clone(),
            r.variant.clone(),
            r.seed.to_string(),
            r.metric.clone(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reps() -> RepresentationSet {
        RepresentationSet {
            s: Some(Tensor::from_rows(2, 1, vec![1.0, 2.0])),
            d: vec![
                Tensor::from_rows(2, 1, vec![10.0, 20.0]),
                Tensor::from_rows(2, 1, vec![30.0, 40.0]),
            ],
        }
    }

    #[test]
    fn variant_slices() {
        let r = reps();
        assert_eq!(features(&r, Variant::TimeInvariant, 1).unwrap().data(), &[1.0, 2.0]);
        assert_eq!(features(&r, Variant::TimeVarying, 1).unwrap().data(), &[30.0, 40.0]);
        assert_eq!(
            features(&r, Variant::Combine, 0).unwrap().data(),
            &[1.0, 10.0, 2.0, 20.0]
        );
        assert_eq!(
            features(&r, Variant::Pooled, 0).unwrap().data(),
            &[1.0, 20.0, 2.0, 30.0]
        );
        assert!(features(&r, Variant::Baseline, 0).is_err());
    }

    #[test]
    fn time_invariant_never_reads_d() {
        let mut r = reps();
        r.d = vec![Tensor::filled(2, 1, f64::NAN)];
        let x = features(&r, Variant::TimeInvariant, 0).unwrap();
        assert!(x.all_finite());
        let mut r = reps();
        r.s = None;
        assert!(features(&r, Variant::TimeVarying, 1).unwrap().all_finite());
        assert!(features(&r, Variant::TimeInvariant, 0).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("entangled".parse::<Variant>().is_err());
    }

    #[test]
    fn link_pairs_are_balanced() {
        let s = Snapshot::from_edges(10, [(0, 1), (2, 3), (4, 5), (1, 9)]);
        let pairs = sample_link_pairs(&s, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(pairs.iter().filter(|p| p.1).count(), 4);
        assert_eq!(pairs.iter().filter(|p| !p.1).count(), 4);
        for ((u, v), y) in pairs {
            assert_eq!(s.has_edge(u, v), y);
        }
    }

    #[test]
    fn missing_training_class_is_rejected() {
        let x = Tensor::from_rows(10, 1, (0..10).map(f64::from).collect());
        let mut y = vec![0; 10];
        y[9] = 1;
        let opts = ProbeOptions {
            split: NodeSplit { train: 0.1, val: 0.1 },
            ..Default::default()
        };
        // with one training sample, at most one class can be covered
        assert!(matches!(
            eval_node_classification(&x, &y, opts, 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn csv_header_only_when_empty() {
        let mut buf = Vec::new();
        write_rows(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "task,variant,seed,metric,value\n");
    }
}
