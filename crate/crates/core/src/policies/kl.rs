use crate::error::{Error, Result};

/// Bernoulli Kullback-Leibler divergence `d(p, q)` with `0 ln 0 = 0`.
///
/// Boundary `q` follows the limits: `d(p, 0)` and `d(p, 1)` are infinite unless
/// `p` sits on the same boundary.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

/// `f(n) = ln n + 3 ln(max(ln n, 1))`.
pub fn exploration(n: u64) -> f64 {
    let ln = (n.max(1) as f64).ln();
    ln + 3.0 * ln.max(1.0).ln()
}

/// Largest `q` in `[mean, 1]` with `count * d(mean, q) <= f(round)`, by bisection.
pub fn klucb_index(count: u64, mean: f64, round: u64, tolerance: f64) -> Result<f64> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidTolerance(tolerance));
    }
    if count == 0 {
        return Ok(1.0);
    }
    let bound = exploration(round) / count as f64;
    let (mut lo, mut hi) = (mean, 1.0);
    if bernoulli_kl(mean, hi) <= bound {
        return Ok(hi);
    }
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if bernoulli_kl(mean, mid) <= bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn divergence_values_and_limits() {
        assert_eq!(bernoulli_kl(0.5, 0.5), 0.0);
        assert_abs_diff_eq!(bernoulli_kl(0.5, 0.75), 0.143_841_036_225_890_1, epsilon = 1e-15);
        assert_abs_diff_eq!(bernoulli_kl(0.0, 0.3), -(0.7f64).ln(), epsilon = 1e-15);
        assert_eq!(bernoulli_kl(1.0, 1.0), 0.0);
        assert_eq!(bernoulli_kl(0.0, 0.0), 0.0);
        assert!(bernoulli_kl(0.4, 1.0).is_infinite());
        assert!(bernoulli_kl(0.4, 0.0).is_infinite());
    }

    #[test]
    fn unexplored_and_saturated_indices() {
        assert_eq!(klucb_index(0, 0.0, 1, 1e-6).unwrap(), 1.0);
        let big = klucb_index(u64::MAX / 4, 0.5, 100, 1e-9).unwrap();
        assert_abs_diff_eq!(big, 0.5, epsilon = 1e-6);
        assert!(matches!(klucb_index(3, 0.5, 10, 0.0), Err(Error::InvalidTolerance(_))));
        assert_eq!(klucb_index(3, 1.0, 10, 1e-6).unwrap(), 1.0);
    }

    #[test]
    fn bisection_agrees_with_a_grid_search() {
        let (n_a, mean, round) = (10u64, 0.2, 100u64);
        let q = klucb_index(n_a, mean, round, 1e-6).unwrap();
        let f = exploration(round);
        // Independent oracle: largest grid point with N d(mean, q) <= f.
        let mut grid = mean;
        let mut k = 0u64;
        loop {
            let next = mean + (k + 1) as f64 * 1e-6;
            if next > 1.0 || n_a as f64 * bernoulli_kl(mean, next) > f {
                break;
            }
            grid = next;
            k += 1;
        }
        assert!((q - grid).abs() <= 2e-6, "{q} vs {grid}");
        // Residual bounded by slope times tolerance.
        let slope = n_a as f64 * (q - mean) / (q * (1.0 - q));
        assert!((n_a as f64 * bernoulli_kl(mean, q) - f).abs() <= slope * 1e-6 + 1e-12);
    }

    proptest! {
        #[test]
        fn index_is_monotone(n_a in 1u64..500, mean in 0.0f64..1.0, round in 1u64..100_000) {
            let tol = 1e-9;
            let base = klucb_index(n_a, mean, round, tol).unwrap();
            prop_assert!(base >= mean - tol && base <= 1.0);
            prop_assert!(klucb_index(n_a, mean, round + 1, tol).unwrap() >= base - 2.0 * tol);
            prop_assert!(klucb_index(n_a + 1, mean, round, tol).unwrap() <= base + 2.0 * tol);
        }
    }
}
