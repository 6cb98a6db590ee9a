//! Multi-seed evaluation statistics: interquartile mean and stratified
//! bootstrap confidence intervals.

use rand::Rng;

use crate::error::{Error, Result};

/// Mean of the middle 50% of the values.
///
/// The lowest and highest quarter are dropped; when `n` is not divisible by
/// four the boundary elements enter with fractional weight, so the total
/// trimmed weight is exactly `n/2`. Needs at least 4 values.
pub fn iqm(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 4 {
        return Err(Error::InvalidConfig(format!("iqm needs at least 4 values, got {n}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let trim = n as f64 / 4.0;
    let lo = trim;
    let hi = n as f64 - trim;
    let mut weighted = 0.0;
    let mut weight = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        // Overlap of [i, i+1) with the kept band [lo, hi).
        let w = ((i + 1) as f64).min(hi) - (i as f64).max(lo);
        if w > 0.0 {
            weighted += w * v;
            weight += w;
        }
    }
    Ok(weighted / weight)
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Per-iteration IQM with a stratified bootstrap confidence interval.
///
/// `runs[s][i]` is the metric of seed `s` at iteration `i`. Seeds are
/// resampled with replacement `n_boot` times; each replicate's per-iteration
/// IQM forms the bootstrap distribution from which the percentile interval
/// is taken. Deterministic given the rng.
pub fn stratified_bootstrap_ci<R: Rng + ?Sized>(
    runs: &[Vec<f64>],
    n_boot: usize,
    level: f64,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    let n_seeds = runs.len();
    if n_seeds < 2 {
        return Err(Error::InvalidConfig("bootstrap needs at least 2 seeds".into()));
    }
    let n_iters = runs[0].len();
    if runs.iter().any(|r| r.len() != n_iters) {
        return Err(Error::ShapeMismatch("seed runs disagree on the iteration grid".into()));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidConfig("confidence level must lie in (0, 1)".into()));
    }
    let mut replicates = vec![Vec::with_capacity(n_boot); n_iters];
    let mut sample = vec![0.0; n_seeds];
    for _ in 0..n_boot {
        let picks: Vec<usize> = (0..n_seeds).map(|_| rng.random_range(0..n_seeds)).collect();
        for (i, reps) in replicates.iter_mut().enumerate() {
            for (slot, &s) in sample.iter_mut().zip(&picks) {
                *slot = runs[s][i];
            }
            reps.push(replicate_iqm(&sample)?);
        }
    }
    let tail = (1.0 - level) / 2.0;
    let mut out = Vec::with_capacity(n_iters);
    for reps in &mut replicates {
        reps.sort_by(|a, b| a.total_cmp(b));
        out.push((quantile_sorted(reps, tail), quantile_sorted(reps, 1.0 - tail)));
    }
    Ok(out)
}

/// IQM of a bootstrap replicate; falls back to the plain mean when fewer
/// than 4 seeds are in play, where trimming is not meaningful.
pub fn replicate_iqm(values: &[f64]) -> Result<f64> {
    if values.len() >= 4 {
        iqm(values)
    } else {
        Ok(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent re-derivation: explicit sort + per-element band overlap.
    fn iqm_oracle(values: &[f64]) -> f64 {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let n = sorted.len() as f64;
        let (lo, hi) = (n / 4.0, 3.0 * n / 4.0);
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &v) in sorted.iter().enumerate() {
            let left = (i as f64).max(lo);
            let right = ((i + 1) as f64).min(hi);
            if right > left {
                num += (right - left) * v;
                den += right - left;
            }
        }
        num / den
    }

    #[test]
    fn one_through_eight_trims_to_the_middle_four() {
        let v: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        assert_abs_diff_eq!(iqm(&v).unwrap(), 4.5, epsilon = 1e-12);
    }

    #[test]
    fn constant_values_return_the_constant() {
        assert_abs_diff_eq!(iqm(&[3.3; 7]).unwrap(), 3.3, epsilon = 1e-12);
    }

    #[test]
    fn too_few_values_error() {
        assert!(iqm(&[1.0, 2.0, 3.0]).is_err());
    }

    proptest! {
        #[test]
        fn iqm_matches_the_brute_force_oracle(values in proptest::collection::vec(-1e6f64..1e6, 4..50)) {
            let got = iqm(&values).unwrap();
            let want = iqm_oracle(&values);
            prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        }

        #[test]
        fn iqm_is_permutation_invariant(mut values in proptest::collection::vec(-1e3f64..1e3, 5..20), seed in 0u64..100) {
            let a = iqm(&values).unwrap();
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            values.shuffle(&mut rng);
            let b = iqm(&values).unwrap();
            prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn identical_seeds_give_zero_width_intervals() {
        let runs = vec![vec![1.0, 2.0, 3.0]; 5];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ci = stratified_bootstrap_ci(&runs, 200, 0.95, &mut rng).unwrap();
        for (i, (lo, hi)) in ci.iter().enumerate() {
            assert_abs_diff_eq!(*lo, (i + 1) as f64, epsilon = 1e-12);
            assert_abs_diff_eq!(*hi, (i + 1) as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn interval_contains_the_point_estimate() {
        let runs = vec![
            vec![0.0, 1.0],
            vec![2.0, 3.0],
            vec![-1.0, 4.0],
            vec![1.0, 2.0],
            vec![0.5, 2.5],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ci = stratified_bootstrap_ci(&runs, 2000, 0.95, &mut rng).unwrap();
        for i in 0..2 {
            let column: Vec<f64> = runs.iter().map(|r| r[i]).collect();
            let point = iqm(&column).unwrap();
            assert!(ci[i].0 <= point && point <= ci[i].1);
        }
    }

    #[test]
    fn two_seed_bootstrap_matches_exhaustive_enumeration() {
        // With 2 seeds there are exactly 4 equally likely resamples whose
        // replicate means are {a, m, m, b}. A large bootstrap's percentile
        // endpoints must match the exhaustive distribution's.
        let runs = vec![vec![10.0], vec![20.0]];
        let a = 10.0;
        let b = 20.0;
        let m = 15.0;
        let mut exhaustive: Vec<f64> = vec![a, m, m, b];
        exhaustive.sort_by(|x, y| x.total_cmp(y));
        let want_lo = quantile_sorted(&exhaustive, 0.025);
        let want_hi = quantile_sorted(&exhaustive, 0.975);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ci = stratified_bootstrap_ci(&runs, 40_000, 0.95, &mut rng).unwrap();
        // The empirical quantile converges to the atoms at the tails.
        assert_abs_diff_eq!(ci[0].0, want_lo, epsilon = 0.5);
        assert_abs_diff_eq!(ci[0].1, want_hi, epsilon = 0.5);
        assert_abs_diff_eq!(ci[0].0, a, epsilon = 0.5);
        assert_abs_diff_eq!(ci[0].1, b, epsilon = 0.5);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let runs = vec![vec![1.0, 2.0], vec![1.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(stratified_bootstrap_ci(&runs, 10, 0.95, &mut rng).is_err());
    }

    #[test]
    fn intervals_shrink_with_more_seeds() {
        // Statistical check: average CI width over repetitions is smaller
        // with 16 seeds than with 4, on i.i.d. synthetic data.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut widths = [0.0f64; 2];
        let reps = 40;
        for _ in 0..reps {
            for (k, &n_seeds) in [4usize, 16].iter().enumerate() {
                let runs: Vec<Vec<f64>> =
                    (0..n_seeds).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
                let ci = stratified_bootstrap_ci(&runs, 300, 0.95, &mut rng).unwrap();
                widths[k] += ci[0].1 - ci[0].0;
            }
        }
        assert!(
            widths[1] < widths[0],
            "width(16 seeds) {} should be below width(4 seeds) {}",
            widths[1] / reps as f64,
            widths[0] / reps as f64
        );
    }
}
