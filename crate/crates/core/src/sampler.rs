//! Bidirectional Bernoulli sampling of temporal-clip pairs.
//!
//! A pair is drawn by picking a range length `L` and a start `t_i`, then two
//! clip lengths from a geometric law truncated to `{1..L}` whose success
//! probability `ψ(L) = 1 − α·L/(L+2)` shrinks as the range grows. The first
//! clip runs forward from `t_i`, the second backward from `t_j = t_i + L − 1`.
//!
//! Lengths are relaxed with Gumbel-softmax so that `α` receives gradients:
//! the soft one-hot `k` over lengths is turned into a per-snapshot mask by
//! suffix sums, `mask[j] = Σ_{m > j} k_m`.

use rand::Rng;
use rand_distr::{Distribution, Gumbel};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Geometric distribution restricted to `{1..L}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncGeom {
    p: f64,
    len: usize,
}

impl TruncGeom {
    pub fn new(p: f64, len: usize) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("success probability {p} outside (0, 1)")));
        }
        if len == 0 {
            return Err(Error::Domain("support bound L must be >= 1".into()));
        }
        Ok(Self { p, len })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn support(&self) -> usize {
        self.len
    }

    fn weights(&self) -> Vec<f64> {
        let q = 1.0 - self.p;
        (0..self.len).map(|k| self.p * q.powi(k as i32)).collect()
    }

    /// Normaliser `Φ(L) = Σ_m p(1−p)^{m−1} = 1 − (1−p)^L`.
    pub fn phi(&self) -> f64 {
        self.weights().iter().sum()
    }

    /// Entry `m − 1` holds `Pr(m)`.
    pub fn pmf(&self) -> Vec<f64> {
        let w = self.weights();
        let phi: f64 = w.iter().sum();
        w.into_iter().map(|x| x / phi).collect()
    }

    /// Closed form `1/p − L(1−p)^L / (1 − (1−p)^L)`.
    pub fn mean(&self) -> f64 {
        let ql = (1.0 - self.p).powi(self.len as i32);
        1.0 / self.p - self.len as f64 * ql / (1.0 - ql)
    }
}

pub fn trunc_geom_pmf(p: f64, len: usize) -> Result<Vec<f64>> {
    Ok(TruncGeom::new(p, len)?.pmf())
}

pub fn trunc_geom_mean(p: f64, len: usize) -> Result<f64> {
    Ok(TruncGeom::new(p, len)?.mean())
}

/// `ψ(L) = 1 − α·L/(L+2)`, valid for `0 < α ≤ 1`.
pub fn psi(alpha: f64, len: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 1]")));
    }
    if len == 0 {
        return Err(Error::Domain("L must be >= 1".into()));
    }
    let l = len as f64;
    Ok(1.0 - alpha * l / (l + 2.0))
}

/// How clip lengths are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipSampling {
    /// Truncated geometric lengths with `p = ψ(L)`.
    #[default]
    Bidirectional,
    /// Lengths uniform on `{1..L}`; `α` receives no gradient.
    UniformLength,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerParams {
    /// `α = σ(alpha_raw)`.
    pub alpha_raw: f64,
    /// Gumbel-softmax temperature.
    pub tau_g: f64,
}

impl SamplerParams {
    pub fn alpha(&self) -> f64 {
        1.0 / (1.0 + (-self.alpha_raw).exp())
    }
}

/// The random part of one clip-pair draw. Everything downstream of it is a
/// deterministic function of `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipDraw {
    /// Zero-based first snapshot of the range.
    pub t_i: usize,
    /// Range length `L`.
    pub len: usize,
    pub gumbel1: Vec<f64>,
    pub gumbel2: Vec<f64>,
}

impl ClipDraw {
    /// `L ~ U{1..T}`, `t_i ~ U{1..T−L+1}`.
    pub fn sample<R: Rng + ?Sized>(t_count: usize, rng: &mut R) -> Self {
        assert!(t_count >= 1, "need at least one snapshot");
        let len = rng.random_range(1..=t_count);
        Self::sample_with_len(t_count, len, rng)
    }

    pub fn sample_with_len<R: Rng + ?Sized>(t_count: usize, len: usize, rng: &mut R) -> Self {
        assert!((1..=t_count).contains(&len));
        let t_i = rng.random_range(0..=t_count - len);
        let g = Gumbel::new(0.0, 1.0).expect("unit gumbel");
        let gumbel1 = (0..len).map(|_| g.sample(rng)).collect();
        let gumbel2 = (0..len).map(|_| g.sample(rng)).collect();
        Self {
            t_i,
            len,
            gumbel1,
            gumbel2,
        }
    }

    /// Zero-based last snapshot `t_j`.
    pub fn t_j(&self) -> usize {
        self.t_i + self.len - 1
    }

    /// Gumbel-max lengths `(m1, m2)` implied by this draw.
    pub fn hard_lengths(&self, log_pmf: &[f64]) -> (usize, usize) {
        (argmax_plus(log_pmf, &self.gumbel1) + 1, argmax_plus(log_pmf, &self.gumbel2) + 1)
    }
}

fn argmax_plus(a: &[f64], b: &[f64]) -> usize {
    a.iter()
        .zip(b)
        .map(|(x, y)| x + y)
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Log-probabilities of lengths `1..=L` under the given mode.
pub fn length_log_pmf(mode: ClipSampling, alpha: f64, len: usize) -> Result<Vec<f64>> {
    match mode {
        ClipSampling::UniformLength => Ok(vec![-(len as f64).ln(); len]),
        ClipSampling::Bidirectional => {
            let p = psi(alpha, len)?;
            if len == 1 {
                return Ok(vec![0.0]);
            }
            Ok(TruncGeom::new(p, len)?.pmf().iter().map(|x| x.ln()).collect())
        }
    }
}

/// Differentiable `[1, L]` log-pmf as a function of `alpha_raw`.
pub fn length_log_pmf_var<'t>(alpha_raw: Var<'t>, len: usize) -> Result<Var<'t>> {
    let tape = alpha_raw.tape();
    let l = len as f64;
    let frac = l / (l + 2.0);
    let alpha = alpha_raw.sigmoid();
    // 1 − p = α·L/(L+2)
    let q = alpha.scale(frac);
    let p = q.scale(-1.0).add_scalar(1.0);
    let ln_p = p.ln();
    let ln_q = q.ln();
    // ln Φ = ln(1 − q^L)
    let ln_phi = ln_q.scale(l).exp().scale(-1.0).add_scalar(1.0).ln();
    let ones = tape.constant(Tensor::filled(1, len, 1.0));
    let steps = tape.constant(Tensor::row(&(0..len).map(|k| k as f64).collect::<Vec<_>>()));
    let head = ones.scale_by(ln_p.sub(ln_phi)?)?;
    head.add(steps.scale_by(ln_q)?)
}

/// Suffix-sum matrix: `(k · U)[j] = Σ_{i ≥ j} k_i`.
fn forward_mask_matrix(len: usize) -> Tensor {
    let mut u = Tensor::zeros(len, len);
    for i in 0..len {
        for j in 0..=i {
            u.set(i, j, 1.0);
        }
    }
    u
}

/// Reversed analogue: position `q` is covered when `m ≥ L − q`.
fn backward_mask_matrix(len: usize) -> Tensor {
    let mut r = Tensor::zeros(len, len);
    for i in 0..len {
        for q in (len - 1 - i)..len {
            r.set(i, q, 1.0);
        }
    }
    r
}

/// Prefix mask from a length distribution `k` (entry `m−1` weights length `m`).
pub fn prefix_mask(k: &[f64]) -> Vec<f64> {
    let mut out = k.to_vec();
    for j in (0..out.len().saturating_sub(1)).rev() {
        out[j] += out[j + 1];
    }
    out
}

/// Suffix mask: the position-reversed [`prefix_mask`].
pub fn suffix_mask(k: &[f64]) -> Vec<f64> {
    let mut m = prefix_mask(k);
    m.reverse();
    m
}

/// Soft masks for both clips, recorded on the tape of `alpha_raw`.
pub struct ClipMasks<'t> {
    pub k1: Var<'t>,
    pub k2: Var<'t>,
    /// `[1, L]`, non-increasing in the hard limit.
    pub mask1: Var<'t>,
    /// `[1, L]`, non-decreasing in the hard limit.
    pub mask2: Var<'t>,
}

/// Gumbel-softmax relaxation of both length draws, followed by the suffix-sum
/// conversion to snapshot masks.
pub fn clip_masks<'t>(
    alpha_raw: Var<'t>,
    draw: &ClipDraw,
    tau_g: f64,
    mode: ClipSampling,
) -> Result<ClipMasks<'t>> {
    let tape = alpha_raw.tape();
    let len = draw.len;
    let logits = match mode {
        ClipSampling::Bidirectional => length_log_pmf_var(alpha_raw, len)?,
        ClipSampling::UniformLength => tape.constant(Tensor::filled(1, len, -(len as f64).ln())),
    };
    let relax = |g: &[f64]| -> Result<Var<'t>> {
        Ok(logits
            .add(tape.constant(Tensor::row(g)))?
            .scale(1.0 / tau_g)
            .softmax())
    };
    let k1 = relax(&draw.gumbel1)?;
    let k2 = relax(&draw.gumbel2)?;
    let mask1 = k1.matmul(tape.constant(forward_mask_matrix(len)))?;
    let mask2 = k2.matmul(tape.constant(backward_mask_matrix(len)))?;
    Ok(ClipMasks {
        k1,
        k2,
        mask1,
        mask2,
    })
}

/// A sampled pair of temporal clips with concrete mask values.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPair {
    /// Zero-based range start.
    pub t_i: usize,
    /// Zero-based range end, `t_i + L − 1`.
    pub t_j: usize,
    pub len: usize,
    pub mask1: Vec<f64>,
    pub mask2: Vec<f64>,
    pub m1_soft: f64,
    pub m2_soft: f64,
    pub m1_hard: usize,
    pub m2_hard: usize,
}

impl ClipPair {
    pub fn from_draw(draw: &ClipDraw, params: SamplerParams, mode: ClipSampling) -> Result<Self> {
        let tape = Tape::new();
        let a = tape.param(&Tensor::scalar(params.alpha_raw));
        let masks = clip_masks(a, draw, params.tau_g, mode)?;
        let mask1 = masks.mask1.value().data().to_vec();
        let mask2 = masks.mask2.value().data().to_vec();
        let (m1_hard, m2_hard) =
            draw.hard_lengths(&length_log_pmf(mode, params.alpha(), draw.len)?);
        Ok(Self {
            t_i: draw.t_i,
            t_j: draw.t_j(),
            len: draw.len,
            m1_soft: mask1.iter().sum(),
            m2_soft: mask2.iter().sum(),
            mask1,
            mask2,
            m1_hard,
            m2_hard,
        })
    }
}

pub fn sample_clip_pair<R: Rng + ?Sized>(
    t_count: usize,
    params: SamplerParams,
    rng: &mut R,
) -> Result<ClipPair> {
    ClipPair::from_draw(&ClipDraw::sample(t_count, rng), params, ClipSampling::Bidirectional)
}

/// Exact joint law of `(m1, m2)` for a range of length `L` and the induced
/// overlap probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistribution {
    /// `joint[m1−1][m2−1]`.
    pub joint: Vec<Vec<f64>>,
    /// `Pr(X = 1 | L)`: the clips share a snapshot, i.e. `m1 + m2 ≥ L + 1`.
    pub overlap: f64,
    /// `Pr(X = 0 | L)`.
    pub disjoint: f64,
}

pub fn enumerate_pair_distribution(p: f64, len: usize) -> Result<PairDistribution> {
    let pmf = trunc_geom_pmf(p, len)?;
    let mut joint = vec![vec![0.0; len]; len];
    let (mut overlap, mut disjoint) = (0.0, 0.0);
    for m1 in 1..=len {
        for m2 in 1..=len {
            let pr = pmf[m1 - 1] * pmf[m2 - 1];
            joint[m1 - 1][m2 - 1] = pr;
            if m1 + m2 > len {
                overlap += pr;
            } else {
                disjoint += pr;
            }
        }
    }
    Ok(PairDistribution {
        joint,
        overlap,
        disjoint,
    })
}

/// `Φ(l)^{-2} [p·l(1−p)^{l−1} − (1−p)^l + (1−p)^{2l}]`.
pub fn overlap_closed_form(p: f64, len: usize) -> Result<f64> {
    let g = TruncGeom::new(p, len)?;
    let q = 1.0 - p;
    let l = len as i32;
    let num = p * len as f64 * q.powi(l - 1) - q.powi(l) + q.powi(2 * l);
    Ok(num / g.phi().powi(2))
}

/// `Φ(l)^{-2} [1 − (1−p)^l − p·l(1−p)^{l−1}]`.
pub fn disjoint_closed_form(p: f64, len: usize) -> Result<f64> {
    let g = TruncGeom::new(p, len)?;
    let q = 1.0 - p;
    let l = len as i32;
    let num = 1.0 - q.powi(l) - p * len as f64 * q.powi(l - 1);
    Ok(num / g.phi().powi(2))
}

/// One `(α, L)` row of the overlap-ratio check.
///
/// With `L` uniform, the conditional ratios reduce to ratios of the
/// per-range overlap probabilities at `L + 1` and `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropositionRow {
    pub alpha: f64,
    pub len: usize,
    /// `Pr(X=1 | L) / Pr(X=0 | L)`; must be ≤ 1.
    pub ratio1: f64,
    /// `Pr(L+1 | X=0) / Pr(L | X=0)`; must be ≥ 1.
    pub ratio2: f64,
    /// `Pr(L+1 | X=1) / Pr(L | X=1)`; must be ≤ 1.
    pub ratio3: f64,
    /// Largest gap between enumeration and the closed forms at `L` and `L+1`.
    pub closed_form_gap: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropositionReport {
    pub rows: Vec<PropositionRow>,
}

impl PropositionReport {
    pub fn violations(&self) -> impl Iterator<Item = &PropositionRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn max_closed_form_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.closed_form_gap).fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alpha", "L", "ratio1", "ratio2_min", "ratio3_max", "pass"])?;
        for r in &self.rows {
            w.write_record([
                r.alpha.to_string(),
                r.len.to_string(),
                format!("{:.12}", r.ratio1),
                format!("{:.12}", r.ratio2),
                format!("{:.12}", r.ratio3),
                r.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

const RATIO_TOL: f64 = 1e-12;
const CLOSED_FORM_TOL: f64 = 1e-10;

/// Check the three overlap-ratio inequalities by exact enumeration for every
/// `α` and every `L` in `lens`, using `p = ψ(L)`.
pub fn verify_proposition(
    alphas: &[f64],
    lens: impl IntoIterator<Item = usize> + Clone,
) -> Result<PropositionReport> {
    let mut rows = Vec::new();
    for &alpha in alphas {
        for len in lens.clone() {
            if len < 3 {
                return Err(Error::Domain(format!("L = {len}: the ratio bounds need L >= 3")));
            }
            let p = psi(alpha, len)?;
            let p_next = psi(alpha, len + 1)?;
            let lower = 2.0 / (len as f64 + 2.0);
            if p < lower - 1e-12 || p >= 1.0 {
                return Err(Error::Domain(format!(
                    "p = {p} outside [2/(L+2), 1) at alpha {alpha}, L {len}"
                )));
            }
            let here = enumerate_pair_distribution(p, len)?;
            let next = enumerate_pair_distribution(p_next, len + 1)?;
            let gap = [
                (here.overlap - overlap_closed_form(p, len)?).abs(),
                (here.disjoint - disjoint_closed_form(p, len)?).abs(),
                (next.overlap - overlap_closed_form(p_next, len + 1)?).abs(),
                (next.disjoint - disjoint_closed_form(p_next, len + 1)?).abs(),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            let ratio1 = here.overlap / here.disjoint;
            let ratio2 = next.disjoint / here.disjoint;
            let ratio3 = next.overlap / here.overlap;
            let pass = ratio1 <= 1.0 + RATIO_TOL
                && ratio2 >= 1.0 - RATIO_TOL
                && ratio3 <= 1.0 + RATIO_TOL
                && gap <= CLOSED_FORM_TOL;
            rows.push(PropositionRow {
                alpha,
                len,
                ratio1,
                ratio2,
                ratio3,
                closed_form_gap: gap,
                pass,
            });
        }
    }
    Ok(PropositionReport { rows })
}
