//! Summary statistics for Monte Carlo success rates and losses.

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials` at 95% confidence.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    wilson_interval_z(successes, trials, Z_95)
}

pub fn wilson_interval_z(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes >= trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Interval end points found by bisection on the score test
    /// `(p̂ - p)² ≤ z² p (1 - p) / n`.
    fn score_test_bounds(k: usize, n: usize) -> (f64, f64) {
        let phat = k as f64 / n as f64;
        let accepts = |p: f64| (phat - p).powi(2) <= Z_95 * Z_95 * p * (1.0 - p) / n as f64;
        let edge = |mut inside: f64, mut outside: f64| {
            for _ in 0..200 {
                let mid = 0.5 * (inside + outside);
                if accepts(mid) {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            inside
        };
        let lo = if k == 0 { 0.0 } else { edge(phat, 0.0) };
        let hi = if k == n { 1.0 } else { edge(phat, 1.0) };
        (lo, hi)
    }

    #[test]
    fn wilson_matches_score_test_enumeration() {
        for n in 1..=20 {
            for k in 0..=n {
                let (lo, hi) = wilson_interval(k, n);
                let (elo, ehi) = score_test_bounds(k, n);
                assert!((lo - elo).abs() < 1e-9, "k={k} n={n}: {lo} vs {elo}");
                assert!((hi - ehi).abs() < 1e-9, "k={k} n={n}: {hi} vs {ehi}");
                assert!(lo <= k as f64 / n as f64 && k as f64 / n as f64 <= hi);
            }
        }
    }

    #[test]
    fn wilson_edge_cases() {
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
        let (lo, _) = wilson_interval(400, 400);
        assert!(lo > 0.99);
        let (lo, _) = wilson_interval(399, 400);
        assert!(lo < 0.99);
    }

    #[test]
    fn mean_and_median() {
        assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(mean(&[]).is_nan());
    }
}
