//! Dense linear-algebra helpers for the least-squares estimators.
//!
//! Two properties matter here beyond correctness:
//!
//! - **Determinism.** All reductions are fixed-order pairwise sums over
//!   materialized slices, so results never depend on thread scheduling. The
//!   Monte Carlo harness relies on this for bit-identical output across
//!   worker counts.
//! - **Rank-revealing solves.** Normal equations are solved through a
//!   symmetric eigendecomposition; a smallest eigenvalue below
//!   `1e-8 * trace` is reported as [`Error::SingularDesign`] instead of being
//!   regularized away.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative threshold under which a Gram matrix counts as singular.
pub const SINGULARITY_RTOL: f64 = 1e-8;

/// Sum of a slice by pairwise (cascade) reduction.
///
/// Compared with a running sum this keeps the error growth at O(log n) and,
/// more importantly here, makes the result a pure function of the slice
/// contents and order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Arithmetic mean via [`pairwise_sum`]; `NaN` on an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample standard deviation (denominator `n - 1`); 0 for fewer than two
/// observations.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    (pairwise_sum(&sq) / (xs.len() - 1) as f64).sqrt()
}

/// A least-squares solution of `E_n[r r'] b = E_n[r y]` together with the
/// spectral facts needed by the regularity diagnostics.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    /// Smallest eigenvalue of the (mean-normalized) Gram matrix `E_n[r r']`.
    pub gram_min_eigenvalue: f64,
    pub gram_trace: f64,
}

/// Solve the normal equations for rows `rows` and response `y`.
///
/// The Gram matrix and right-hand side are accumulated entrywise with
/// pairwise sums and normalized by `n` (so eigenvalues refer to
/// `E_n[r r']`). After the eigendecomposition solve, two steps of iterative
/// refinement push the normal-equation residual down to rounding level even
/// for badly conditioned designs.
pub fn solve_normal_equations(rows: &[Vec<f64>], y: &[f64]) -> Result<LeastSquares> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Data("least squares on an empty sample".into()));
    }
    let p = rows[0].len();
    if y.len() != n {
        return Err(Error::Data(format!(
            "response length {} does not match {} design rows",
            y.len(),
            n
        )));
    }
    if n <= p {
        return Err(Error::Data(format!(
            "need more observations ({n}) than parameters ({p})"
        )));
    }

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut scratch = vec![0.0; n];
    for j in 0..p {
        for k in j..p {
            for (i, row) in rows.iter().enumerate() {
                scratch[i] = row[j] * row[k];
            }
            let s = pairwise_sum(&scratch) / n as f64;
            gram[(j, k)] = s;
            gram[(k, j)] = s;
        }
    }
    let mut rhs = DVector::<f64>::zeros(p);
    for j in 0..p {
        for (i, row) in rows.iter().enumerate() {
            scratch[i] = row[j] * y[i];
        }
        rhs[j] = pairwise_sum(&scratch) / n as f64;
    }

    if gram.iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "non-finite entries in the normal equations".into(),
        ));
    }

    let trace = gram.trace();
    let eigen = SymmetricEigen::new(gram.clone());
    let min_eigenvalue = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let threshold = SINGULARITY_RTOL * trace;
    if !(min_eigenvalue > threshold) {
        return Err(Error::SingularDesign {
            min_eigenvalue,
            threshold,
            trace,
        });
    }

    let apply_inverse = |v: &DVector<f64>| -> DVector<f64> {
        let mut w = eigen.eigenvectors.transpose() * v;
        for (i, lambda) in eigen.eigenvalues.iter().enumerate() {
            w[i] /= lambda;
        }
        &eigen.eigenvectors * w
    };

    let mut beta = apply_inverse(&rhs);
    // Iterative refinement: with kappa * eps well below one this drives the
    // residual of the *solve* to rounding level, which the normal-equation
    // identity tests (residual <= 1e-8) depend on.
    for _ in 0..2 {
        let residual = &rhs - &gram * &beta;
        beta += apply_inverse(&residual);
    }

    Ok(LeastSquares {
        coefficients: beta.iter().cloned().collect(),
        gram_min_eigenvalue: min_eigenvalue,
        gram_trace: trace,
    })
}

/// Kolmogorov–Smirnov distance of a sample from Uniform(0, 1).
pub fn ks_uniform(sample: &[f64]) -> f64 {
    if sample.is_empty() {
        return 0.0;
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &u) in sorted.iter().enumerate() {
        let hi = (i + 1) as f64 / n - u;
        let lo = u - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Simple-regression fit of `y` on `x`: intercept, slope, and the classical
/// standard error of the slope.
#[derive(Debug, Clone, Copy)]
pub struct SlopeFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
}

pub fn simple_regression(x: &[f64], y: &[f64]) -> Result<SlopeFit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return Err(Error::Data(
            "simple regression needs two equal-length samples of size >= 2".into(),
        ));
    }
    let xbar = mean(x);
    let ybar = mean(y);
    let sxx: Vec<f64> = x.iter().map(|xi| (xi - xbar) * (xi - xbar)).collect();
    let sxy: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (xi - xbar) * (yi - ybar))
        .collect();
    let sxx = pairwise_sum(&sxx);
    if sxx <= 0.0 {
        return Err(Error::Data("degenerate regressor in simple regression".into()));
    }
    let slope = pairwise_sum(&sxy) / sxx;
    let intercept = ybar - slope * xbar;
    let rss: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let r = yi - intercept - slope * xi;
            r * r
        })
        .collect();
    let stderr = if n > 2 {
        (pairwise_sum(&rss) / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok(SlopeFit {
        intercept,
        slope,
        slope_stderr: stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pairwise_matches_sequential_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
    }

    #[test]
    fn solves_well_conditioned_system_exactly() {
        // y = 2 + 3 x over a small grid; exact recovery.
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 + 3.0 * i as f64).collect();
        let ls = solve_normal_equations(&rows, &y).unwrap();
        assert!((ls.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((ls.coefficients[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![1.0, i as f64, i as f64])
            .collect();
        let y = vec![0.0; 10];
        match solve_normal_equations(&rows, &y) {
            Err(Error::SingularDesign { .. }) => {}
            other => panic!("expected SingularDesign, got {other:?}"),
        }
    }

    #[test]
    fn ks_distance_of_a_perfect_grid_is_half_spacing() {
        // Midpoints i/n - 1/(2n) have KS distance exactly 1/(2n).
        let n = 100;
        let sample: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        assert!((ks_uniform(&sample) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let x: Vec<f64> = [250.0, 500.0, 1000.0, 2000.0]
            .iter()
            .map(|n: &f64| n.ln())
            .collect();
        let y: Vec<f64> = [250.0f64, 500.0, 1000.0, 2000.0]
            .iter()
            .map(|n| n.powf(-0.5).ln())
            .collect();
        let fit = simple_regression(&x, &y).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-10);
        assert!(fit.slope_stderr < 1e-10);
    }

    proptest! {
        // Pairwise and compensated (Kahan) summation agree to relative 1e-12:
        // the pairwise tree cannot lose more than that on these magnitudes.
        #[test]
        fn pairwise_close_to_kahan(xs in proptest::collection::vec(-1e6f64..1e6, 0..400)) {
            let mut sum = 0.0f64;
            let mut c = 0.0f64;
            for &x in &xs {
                let t = sum + x;
                c += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
                sum = t;
            }
            let kahan = sum + c;
            let pw = pairwise_sum(&xs);
            let scale = xs.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
            prop_assert!((pw - kahan).abs() <= 1e-12 * scale);
        }

        // Rescaling design column j by 2^k rescales its coefficient by 2^-k
        // and leaves predictions unchanged: OLS scale equivariance.
        #[test]
        fn ols_column_scale_equivariance(seed in 0u64..1000, col in 0usize..3, pow in -6i32..7) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 40;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![1.0, rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>()])
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let c = 2f64.powi(pow);
            let scaled: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r[col] *= c;
                    r
                })
                .collect();
            let base = solve_normal_equations(&rows, &y).unwrap();
            let scal = solve_normal_equations(&scaled, &y).unwrap();
            for j in 0..3 {
                let expect = if j == col { base.coefficients[j] / c } else { base.coefficients[j] };
                prop_assert!((scal.coefficients[j] - expect).abs() < 1e-9 * (1.0 + expect.abs()));
            }
            // Predictions agree on every row.
            for (r, rs) in rows.iter().zip(&scaled) {
                let p0: f64 = r.iter().zip(&base.coefficients).map(|(a, b)| a * b).sum();
                let p1: f64 = rs.iter().zip(&scal.coefficients).map(|(a, b)| a * b).sum();
                prop_assert!((p0 - p1).abs() < 1e-10 * (1.0 + p0.abs()));
            }
        }
    }
}
