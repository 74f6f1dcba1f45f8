use dyted::autodiff::Tensor;
use dyted::eval::{auc, estimate_mi, f1_scores, KSG_K};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Multiples of 1/1024 in [-1, 1].
fn grid(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-1024i32..=1024) as f64 / 1024.0
}

fn normal_column(n: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_rows(n, 1, (0..n).map(|_| StandardNormal.sample(rng)).collect())
}

/// Count every (positive, negative) pair directly.
fn pairwise_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for p in pos {
        for n in neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

// Coarse grid so ties are frequent.
fn scores(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..20).prop_map(|v| v as f64 / 4.0), 1..=max)
}

proptest! {
    #[test]
    fn auc_matches_pairwise_count(pos in scores(100), neg in scores(100)) {
        let fast = auc(&pos, &neg).unwrap();
        prop_assert!((fast - pairwise_auc(&pos, &neg)).abs() < 1e-12);
    }

    #[test]
    fn micro_f1_is_accuracy(
        pairs in prop::collection::vec((0usize..6, 0usize..6), 1..200)
    ) {
        let (truth, pred): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let acc = truth.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64
            / truth.len() as f64;
        let f1 = f1_scores(&truth, &pred).unwrap();
        prop_assert!((f1.micro - acc).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&f1.macro_));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mi_is_non_negative_and_shift_invariant(
        seed in any::<u64>(),
        n in 20usize..120,
        shift in -50.0f64..50.0,
        dim in 1usize..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_rows(n, dim, (0..n * dim).map(|_| grid(&mut rng)).collect());
        let y = Tensor::from_rows(n, dim, (0..n * dim).map(|_| grid(&mut rng)).collect());
        let base = estimate_mi(&x, &y, KSG_K).unwrap();
        prop_assert!(base >= 0.0);
        // dyadic samples plus integer shifts keep every distance exact
        let s = shift.round();
        let moved = estimate_mi(&x.map(|v| v + s), &y.map(|v| v - s), KSG_K).unwrap();
        prop_assert_eq!(base, moved);
    }
}

#[test]
fn independent_normals_have_near_zero_mi() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x = normal_column(10_000, &mut rng);
    let y = normal_column(10_000, &mut rng);
    let mi = estimate_mi(&x, &y, KSG_K).unwrap();
    assert!(mi.abs() < 0.05, "{mi}");
}

#[test]
fn mi_of_a_copy_grows_with_sample_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = normal_column(2000, &mut rng);
    let at = |n: usize| {
        let rows: Vec<usize> = (0..n).collect();
        let xs = x.gather_rows(&rows);
        estimate_mi(&xs, &xs, KSG_K).unwrap()
    };
    let (small, mid, large) = (at(100), at(500), at(2000));
    assert!(small < mid && mid < large, "{small} {mid} {large}");
    assert!(small > 1.0);
}

#[test]
fn random_scores_give_chance_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 2000;
    let pos: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let neg: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let a = auc(&pos, &neg).unwrap();
    // Mann-Whitney standard error for equal classes without ties
    let se = ((2 * n + 1) as f64 / (12.0 * (n * n) as f64)).sqrt();
    assert!((a - 0.5).abs() < 3.0 * se, "{a} (se {se})");
}
