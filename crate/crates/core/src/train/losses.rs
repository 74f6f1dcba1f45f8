//! Contrastive, pretext and adversarial objectives, plus the index sampling
//! that feeds them. Every sampled index is drawn outside the tape.

use rand::seq::index;
use rand::Rng;

use super::NegativeMode;
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::graph::{DynamicGraph, Snapshot};

/// Clamp applied to discriminator outputs before taking logs.
pub const D_CLAMP: f64 = 1e-7;

/// Row indices for one InfoNCE evaluation. `negatives` holds `n` columns, each
/// as long as `anchors`, so column `k` lists the `k`-th negative of every
/// anchor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContrastBatch {
    pub anchors: Vec<usize>,
    pub positives: Vec<usize>,
    pub negatives: Vec<Vec<usize>>,
}

impl ContrastBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Positive and negative node pairs for next-snapshot link prediction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinkBatch {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

/// `mean_b −log softmax([sim(a,p), sim(a,n_1), …])[0]` with cosine similarity.
pub fn info_nce<'t>(
    anchor_src: Var<'t>,
    positive_src: Var<'t>,
    negative_src: Var<'t>,
    batch: &ContrastBatch,
    tau: f64,
) -> Result<Var<'t>> {
    if batch.is_empty() {
        return Err(Error::Contract("contrastive batch is empty".into()));
    }
    let b = batch.len();
    if batch.positives.len() != b || batch.negatives.iter().any(|c| c.len() != b) {
        return Err(Error::Contract("contrastive batch columns differ in length".into()));
    }
    let anchors = anchor_src.gather_rows(&batch.anchors)?;
    let mut cols = Vec::with_capacity(batch.negatives.len() + 1);
    cols.push(anchors.cosine(positive_src.gather_rows(&batch.positives)?)?);
    for col in &batch.negatives {
        cols.push(anchors.cosine(negative_src.gather_rows(col)?)?);
    }
    let logits = Var::concat(&cols)?.scale(1.0 / tau);
    Ok(logits.log_softmax().slice_cols(0, 1)?.mean().scale(-1.0))
}

/// Clip contrast: node `v` in clip 1 against itself in clip 2, with other
/// nodes of clip 1 as negatives.
pub fn loss_time_invariant<'t>(
    s1: Var<'t>,
    s2: Var<'t>,
    batch: &ContrastBatch,
    tau: f64,
) -> Result<Var<'t>> {
    info_nce(s1, s2, s1, batch, tau)
}

/// Structure-proximity contrast on the combined representation, summed over
/// snapshots. Empty batches contribute nothing.
pub fn loss_structure_proximity<'t>(
    reps: &[Var<'t>],
    batches: &[ContrastBatch],
    tau: f64,
) -> Result<Var<'t>> {
    if reps.len() != batches.len() {
        return Err(Error::Contract(format!(
            "{} snapshots of representations, {} batches",
            reps.len(),
            batches.len()
        )));
    }
    let mut total: Option<Var<'t>> = None;
    for (r, batch) in reps.iter().zip(batches) {
        if batch.is_empty() {
            continue;
        }
        let term = info_nce(*r, *r, *r, batch, tau)?;
        total = Some(match total {
            Some(acc) => acc.add(term)?,
            None => term,
        });
    }
    Ok(total.unwrap_or_else(|| reps_tape_zero(reps)))
}

/// Binary cross-entropy of `σ(r_u·r_v)` on snapshot `t + 1` edges using the
/// representation at `t`, summed over `t`.
pub fn loss_link_prediction<'t>(reps: &[Var<'t>], batches: &[LinkBatch]) -> Result<Var<'t>> {
    if reps.len() < 2 {
        return Err(Error::Contract(
            "link-prediction pretext needs at least two snapshots".into(),
        ));
    }
    if batches.len() != reps.len() - 1 {
        return Err(Error::Contract(format!(
            "{} link batches for {} snapshots",
            batches.len(),
            reps.len()
        )));
    }
    let mut total: Option<Var<'t>> = None;
    for (r, batch) in reps.iter().zip(batches) {
        if batch.positives.is_empty() || batch.negatives.is_empty() {
            continue;
        }
        let pos = pair_scores(*r, &batch.positives)?.log_sigmoid().mean();
        let neg = pair_scores(*r, &batch.negatives)?
            .scale(-1.0)
            .log_sigmoid()
            .mean();
        let term = pos.add(neg)?.scale(-1.0);
        total = Some(match total {
            Some(acc) => acc.add(term)?,
            None => term,
        });
    }
    Ok(total.unwrap_or_else(|| reps_tape_zero(reps)))
}

fn pair_scores<'t>(r: Var<'t>, pairs: &[(usize, usize)]) -> Result<Var<'t>> {
    let (us, vs): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
    r.gather_rows(&us)?.row_dot(r.gather_rows(&vs)?)
}

fn reps_tape_zero<'t>(reps: &[Var<'t>]) -> Var<'t> {
    reps[0].tape().scalar(0.0)
}

/// `mean log D(r) + mean log(1 − D(z))` from discriminator outputs on true
/// and false samples.
pub fn discriminator_value<'t>(d_real: Var<'t>, d_fake: Var<'t>) -> Result<Var<'t>> {
    if d_real.value().len() != d_fake.value().len() {
        return Err(Error::Contract(
            "true and false sample counts must match".into(),
        ));
    }
    let real = d_real.clamp(D_CLAMP, 1.0 - D_CLAMP).ln().mean();
    let fake = d_fake
        .clamp(D_CLAMP, 1.0 - D_CLAMP)
        .scale(-1.0)
        .add_scalar(1.0)
        .ln()
        .mean();
    real.add(fake)
}

/// Uniform draw from `0..n` excluding `v`.
fn other_node<R: Rng + ?Sized>(n: usize, v: usize, rng: &mut R) -> usize {
    let u = rng.random_range(0..n - 1);
    if u >= v {
        u + 1
    } else {
        u
    }
}

/// Every node as an anchor against itself, with negatives from the other
/// nodes.
pub fn node_batch<R: Rng + ?Sized>(
    node_count: usize,
    n: usize,
    mode: NegativeMode,
    rng: &mut R,
) -> Result<ContrastBatch> {
    if node_count < 2 {
        return Err(Error::Contract("contrast needs at least two nodes".into()));
    }
    let anchors: Vec<usize> = (0..node_count).collect();
    let negatives = match mode {
        NegativeMode::Sampled => (0..n)
            .map(|_| anchors.iter().map(|&v| other_node(node_count, v, rng)).collect())
            .collect(),
        NegativeMode::Full => (0..node_count - 1)
            .map(|j| anchors.iter().map(|&v| if j < v { j } else { j + 1 }).collect())
            .collect(),
    };
    Ok(ContrastBatch {
        positives: anchors.clone(),
        anchors,
        negatives,
    })
}

/// A node other than `v` that is not adjacent to it, falling back to any
/// other node when `v` is adjacent to everything.
fn non_neighbor<R: Rng + ?Sized>(s: &Snapshot, v: usize, rng: &mut R) -> usize {
    let n = s.node_count();
    if s.degree(v) + 1 < n {
        loop {
            let u = other_node(n, v, rng);
            if !s.has_edge(u, v) {
                return u;
            }
        }
    }
    other_node(n, v, rng)
}

fn capped_edges<R: Rng + ?Sized>(
    s: &Snapshot,
    both_directions: bool,
    cap: Option<usize>,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for &(u, v) in s.edges() {
        edges.push((u, v));
        if both_directions {
            edges.push((v, u));
        }
    }
    match cap {
        Some(c) if c < edges.len() => {
            let mut picked = index::sample(rng, edges.len(), c).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| edges[i]).collect()
        }
        _ => edges,
    }
}

/// One batch per snapshot: each edge in both orientations, with `n` sampled
/// non-neighbors of the anchor as negatives.
pub fn structure_batches<R: Rng + ?Sized>(
    graph: &DynamicGraph,
    n: usize,
    cap: Option<usize>,
    rng: &mut R,
) -> Vec<ContrastBatch> {
    graph
        .snapshots()
        .iter()
        .map(|s| {
            let pairs = capped_edges(s, true, cap, rng);
            let anchors: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let positives = pairs.iter().map(|p| p.1).collect();
            let negatives = (0..n)
                .map(|_| anchors.iter().map(|&v| non_neighbor(s, v, rng)).collect())
                .collect();
            ContrastBatch {
                anchors,
                positives,
                negatives,
            }
        })
        .collect()
}

/// For each `t < T−1`: edges of snapshot `t+1` and `n` non-edges per edge.
pub fn link_batches<R: Rng + ?Sized>(
    graph: &DynamicGraph,
    n: usize,
    cap: Option<usize>,
    rng: &mut R,
) -> Vec<LinkBatch> {
    graph.snapshots()[1..]
        .iter()
        .map(|s| {
            let positives = capped_edges(s, false, cap, rng);
            let mut negatives = Vec::with_capacity(positives.len() * n);
            for _ in 0..n {
                for &(u, _) in &positives {
                    negatives.push((u, non_neighbor(s, u, rng)));
                }
            }
            LinkBatch {
                positives,
                negatives,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b}");
    }

    #[test]
    fn one_negative_example() {
        // sim(anchor, pos) = 1, sim(anchor, neg) = 0
        let tape = Tape::new();
        let s1 = tape.constant(Tensor::from_rows(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let s2 = tape.constant(Tensor::from_rows(2, 2, vec![2.0, 0.0, 0.0, 1.0]));
        let batch = ContrastBatch {
            anchors: vec![0],
            positives: vec![0],
            negatives: vec![vec![1]],
        };
        let l = loss_time_invariant(s1, s2, &batch, 1.0).unwrap().item();
        let e = std::f64::consts::E;
        close(l, -(e / (e + 1.0)).ln(), 1e-12);
        close(l, 0.3133, 1e-4);
    }

    #[test]
    fn uniform_similarities_give_log_n_plus_one() {
        let tape = Tape::new();
        let s = tape.constant(Tensor::filled(4, 3, 0.7));
        let batch = node_batch(4, 3, NegativeMode::Sampled, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        let l = loss_time_invariant(s, s, &batch, 0.1).unwrap().item();
        close(l, 4f64.ln(), 1e-12);
    }

    #[test]
    fn small_temperature_limit() {
        let tape = Tape::new();
        let s1 = tape.constant(Tensor::from_rows(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        let batch = ContrastBatch {
            anchors: vec![0, 1],
            positives: vec![0, 1],
            negatives: vec![vec![1, 0]],
        };
        let l = loss_time_invariant(s1, s1, &batch, 1e-3).unwrap().item();
        assert!(l < 1e-12, "{l}");
    }

    #[test]
    fn empty_batch_is_rejected() {
        let tape = Tape::new();
        let s = tape.constant(Tensor::filled(2, 2, 1.0));
        let err = loss_time_invariant(s, s, &ContrastBatch::default(), 0.1).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn full_mode_lists_every_other_node() {
        let b = node_batch(4, 1, NegativeMode::Full, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(b.negatives.len(), 3);
        for (i, &v) in b.anchors.iter().enumerate() {
            let mut others: Vec<usize> = b.negatives.iter().map(|c| c[i]).collect();
            others.sort_unstable();
            let expect: Vec<usize> = (0..4).filter(|&u| u != v).collect();
            assert_eq!(others, expect);
        }
    }

    fn graph(n: usize, snaps: &[&[(usize, usize)]]) -> DynamicGraph {
        DynamicGraph::new(
            n,
            snaps
                .iter()
                .map(|e| Snapshot::from_edges(n, e.iter().copied()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn structure_proximity_on_identical_reps() {
        let g = graph(6, &[&[(0, 1), (2, 3)], &[(1, 4)]]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batches = structure_batches(&g, 4, None, &mut rng);
        let tape = Tape::new();
        let r = tape.constant(Tensor::filled(6, 4, 0.3));
        let l = loss_structure_proximity(&[r, r], &batches, 0.1).unwrap().item();
        // one log(n+1) per snapshot
        close(l, 2.0 * 5f64.ln(), 1e-12);
    }

    #[test]
    fn structure_proximity_edgeless_is_zero() {
        let g = graph(3, &[&[], &[]]);
        let batches = structure_batches(&g, 2, None, &mut ChaCha8Rng::seed_from_u64(0));
        let tape = Tape::new();
        let r = tape.constant(Tensor::filled(3, 2, 1.0));
        assert_eq!(loss_structure_proximity(&[r, r], &batches, 0.1).unwrap().item(), 0.0);
    }

    #[test]
    fn structure_proximity_hand_evaluation() {
        // path 0-1, node 2 isolated; one negative, forced to 2
        let g = graph(3, &[&[(0, 1)]]);
        let batches = structure_batches(&g, 1, None, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(batches[0].negatives, vec![vec![2, 2]]);
        let r = [[1.0, 0.0], [0.6, 0.8], [0.0, -1.0]];
        let tape = Tape::new();
        let rv = tape.constant(Tensor::from_rows(3, 2, r.concat()));
        let l = loss_structure_proximity(&[rv], &batches, 0.5).unwrap().item();
        let cos = |a: [f64; 2], b: [f64; 2]| {
            (a[0] * b[0] + a[1] * b[1]) / (a[0].hypot(a[1]) * b[0].hypot(b[1]))
        };
        let term = |v: usize, u: usize| {
            let p = (cos(r[v], r[u]) / 0.5).exp();
            let q = (cos(r[v], r[2]) / 0.5).exp();
            -(p / (p + q)).ln()
        };
        close(l, 0.5 * (term(0, 1) + term(1, 0)), 1e-12);
    }

    #[test]
    fn negatives_avoid_neighbors() {
        let g = graph(8, &[&[(0, 1), (0, 2), (0, 3), (4, 5)]]);
        let batches = structure_batches(&g, 6, None, &mut ChaCha8Rng::seed_from_u64(9));
        let s = g.snapshot(0);
        for col in &batches[0].negatives {
            for (&a, &u) in batches[0].anchors.iter().zip(col) {
                assert!(a != u && !s.has_edge(a, u));
            }
        }
    }

    #[test]
    fn edge_cap_limits_batch() {
        let g = graph(6, &[&[(0, 1), (1, 2), (2, 3), (3, 4)]]);
        let b = structure_batches(&g, 1, Some(3), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(b[0].len(), 3);
    }

    fn link_pair_value(pos_sigma: f64, neg_sigma: f64) -> f64 {
        // two nodes per pair with 1-d reps whose product hits the logit
        let logit = |s: f64| (s / (1.0 - s)).ln();
        let tape = Tape::new();
        let r = tape.constant(Tensor::from_rows(
            4,
            1,
            vec![1.0, logit(pos_sigma), 1.0, logit(neg_sigma)],
        ));
        let batch = LinkBatch {
            positives: vec![(0, 1)],
            negatives: vec![(2, 3)],
        };
        loss_link_prediction(&[r, r], &[batch]).unwrap().item()
    }

    #[test]
    fn link_prediction_examples() {
        close(link_pair_value(0.5, 0.5), 2.0 * 2f64.ln(), 1e-12);
        close(link_pair_value(0.5, 0.5), 1.3863, 1e-4);
        close(link_pair_value(0.8, 0.3), -(0.8f64.ln() + 0.7f64.ln()), 1e-12);
        close(link_pair_value(0.8, 0.3), 0.5798, 1e-4);
        assert!(link_pair_value(1.0 - 1e-12, 1e-12) < 1e-9);
    }

    #[test]
    fn link_prediction_needs_two_snapshots() {
        let tape = Tape::new();
        let r = tape.constant(Tensor::filled(2, 2, 1.0));
        assert!(matches!(
            loss_link_prediction(&[r], &[]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn link_batches_target_next_snapshot() {
        let g = graph(5, &[&[(0, 1)], &[(2, 3), (3, 4)]]);
        let b = link_batches(&g, 2, None, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].positives, vec![(2, 3), (3, 4)]);
        assert_eq!(b[0].negatives.len(), 4);
        for &(u, w) in &b[0].negatives {
            assert!(u != w && !g.snapshot(1).has_edge(u, w));
        }
    }

    fn v_of(real: f64, fake: f64) -> f64 {
        let tape = Tape::new();
        let r = tape.constant(Tensor::filled(3, 1, real));
        let f = tape.constant(Tensor::filled(3, 1, fake));
        discriminator_value(r, f).unwrap().item()
    }

    #[test]
    fn discriminator_value_examples() {
        close(v_of(0.5, 0.5), 2.0 * 0.5f64.ln(), 1e-12);
        close(v_of(0.5, 0.5), -1.3863, 1e-4);
        close(v_of(0.8, 0.3), 0.8f64.ln() + 0.7f64.ln(), 1e-12);
        close(v_of(0.8, 0.3), -0.5798, 1e-4);
        // the clamp keeps the perfect discriminator finite and near zero
        let perfect = v_of(1.0, 0.0);
        assert!(perfect.is_finite() && perfect.abs() < 1e-6);
        assert!(v_of(0.0, 1.0).is_finite());
    }
}
