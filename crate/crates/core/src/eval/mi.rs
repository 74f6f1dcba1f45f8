use statrs::function::gamma::digamma;

use crate::autodiff::Tensor;
use crate::encoder::RepresentationSet;
use crate::error::{Error, Result};

pub const KSG_K: usize = 3;

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Kraskov–Stögbauer–Grassberger estimate (first algorithm) of `I(X; Y)` in
/// nats, with max-norm distances in each marginal space, truncated at zero.
/// Rows of `x` and `y` are paired.
pub fn estimate_mi(x: &Tensor, y: &Tensor, k: usize) -> Result<f64> {
    let n = x.rows();
    if y.rows() != n {
        return Err(Error::Contract(format!("{n} X samples but {} Y samples", y.rows())));
    }
    if k == 0 || n < k + 1 {
        return Err(Error::Contract(format!(
            "need more than k = {k} samples, got {n}"
        )));
    }
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    let mut dz = Vec::with_capacity(n - 1);
    let mut acc = 0.0;
    for i in 0..n {
        dz.clear();
        for j in 0..n {
            dx[j] = max_dist(x.row_slice(i), x.row_slice(j));
            dy[j] = max_dist(y.row_slice(i), y.row_slice(j));
            if j != i {
                dz.push(dx[j].max(dy[j]));
            }
        }
        let (_, eps, _) = dz.select_nth_unstable_by(k - 1, f64::total_cmp);
        let eps = *eps;
        let nx = (0..n).filter(|&j| j != i && dx[j] < eps).count();
        let ny = (0..n).filter(|&j| j != i && dy[j] < eps).count();
        acc += digamma((nx + 1) as f64) + digamma((ny + 1) as f64);
    }
    let mi = digamma(k as f64) + digamma(n as f64) - acc / n as f64;
    Ok(mi.max(0.0))
}

/// `(s_v, d_v^t)` over every node and snapshot.
pub fn paired_samples(reps: &RepresentationSet) -> Result<(Tensor, Tensor)> {
    let s = reps
        .s
        .as_ref()
        .ok_or_else(|| Error::Contract("representation set has no time-invariant part".into()))?;
    let t_count = reps.t_count();
    let rows: Vec<usize> = (0..t_count).flat_map(|_| 0..s.rows()).collect();
    let x = s.gather_rows(&rows);
    let parts: Vec<&Tensor> = reps.d.iter().collect();
    Ok((x, Tensor::vcat(&parts)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_pairs(n: usize, rho: f64, seed: u64) -> (Tensor, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            xs.push(a);
            ys.push(rho * a + (1.0 - rho * rho).sqrt() * b);
        }
        (Tensor::from_rows(n, 1, xs), Tensor::from_rows(n, 1, ys))
    }

    #[test]
    fn correlated_gaussian_matches_analytic_value() {
        let (x, y) = gaussian_pairs(4000, 0.9, 1);
        let mi = estimate_mi(&x, &y, KSG_K).unwrap();
        let exact = -0.5 * (1.0 - 0.81f64).ln();
        assert!((mi - exact).abs() < 0.05, "{mi} vs {exact}");
    }

    #[test]
    fn constant_shift_leaves_estimate_unchanged() {
        let (x, y) = gaussian_pairs(300, 0.5, 2);
        let shifted = x.map(|v| v + 17.0);
        let a = estimate_mi(&x, &y, KSG_K).unwrap();
        let b = estimate_mi(&shifted, &y.map(|v| v - 3.0), KSG_K).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        let x = Tensor::zeros(3, 1);
        assert!(matches!(estimate_mi(&x, &x, 3), Err(Error::Contract(_))));
    }
}
