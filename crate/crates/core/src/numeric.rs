//! Small numerical helpers shared by the model and the fitting code.

use nalgebra::{DMatrix, DVector};

/// `ln Σ exp(v_i)` with the running maximum factored out.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + values.into_iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Ridge added to the normal equations when the weighted design is rank deficient.
pub const WLS_RIDGE: f64 = 1e-10;

/// Weighted least squares `argmin_β Σ_i c_i (y_i - x_iᵀβ)²`.
///
/// Solved through a QR factorisation of the √c-scaled design. When the design
/// is numerically rank deficient, falls back to the normal equations with a
/// [`WLS_RIDGE`] diagonal.
pub fn weighted_least_squares(x: &DMatrix<f64>, y: &DVector<f64>, weights: &[f64]) -> DVector<f64> {
    let (n, p) = x.shape();
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.max(0.0).sqrt()).collect();
    let xs = DMatrix::from_fn(n, p, |i, j| sqrt_w[i] * x[(i, j)]);
    let ys = DVector::from_fn(n, |i, _| sqrt_w[i] * y[i]);

    if n >= p {
        let qr = xs.clone().qr();
        let r = qr.r();
        let diag_max = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
        let diag_min = (0..p).map(|j| r[(j, j)].abs()).fold(f64::INFINITY, f64::min);
        if diag_max > 0.0 && diag_min > 1e-12 * diag_max {
            let qty = qr.q().transpose() * &ys;
            if let Some(beta) = r.solve_upper_triangular(&qty) {
                if beta.iter().all(|v| v.is_finite()) {
                    return beta;
                }
            }
        }
    }

    let mut gram = xs.transpose() * &xs;
    for j in 0..p {
        gram[(j, j)] += WLS_RIDGE;
    }
    let rhs = xs.transpose() * ys;
    gram.clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_is_stable() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        let w = [-1000.0, -1001.0];
        assert!((log_sum_exp(w) - (-1000.0 + (1.0 + (-1f64).exp()).ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp([f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn wls_interpolates_exact_line() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![2.0, 5.0, 8.0, 11.0]);
        let beta = weighted_least_squares(&x, &y, &[1.0; 4]);
        assert!((beta[0] - 2.0).abs() < 1e-12 && (beta[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn wls_against_explicit_two_by_two_inverse() {
        let xs = [0.1, 0.4, -0.3, 0.9, 0.5, -0.7, 0.2, 0.8, -0.1, 0.6];
        let ys = [1.0, 0.3, -0.2, 2.1, 0.7, -1.3, 0.4, 1.1, 0.0, 0.9];
        let ws = [0.3, 0.9, 0.1, 0.5, 0.7, 0.2, 0.8, 0.4, 0.6, 0.05];
        let x = DMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let y = DVector::from_row_slice(&ys);
        let beta = weighted_least_squares(&x, &y, &ws);

        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..10 {
            s0 += ws[i];
            s1 += ws[i] * xs[i];
            s2 += ws[i] * xs[i] * xs[i];
            t0 += ws[i] * ys[i];
            t1 += ws[i] * xs[i] * ys[i];
        }
        let det = s0 * s2 - s1 * s1;
        let b0 = (s2 * t0 - s1 * t1) / det;
        let b1 = (s0 * t1 - s1 * t0) / det;
        assert!((beta[0] - b0).abs() < 1e-10);
        assert!((beta[1] - b1).abs() < 1e-10);
    }

    #[test]
    fn wls_rank_deficient_falls_back_to_ridge() {
        // all covariates identical: slope is unidentified
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let beta = weighted_least_squares(&x, &y, &[1.0; 3]);
        assert!(beta.iter().all(|v| v.is_finite()));
        assert!((beta[0] + 2.0 * beta[1] - 1.0).abs() < 1e-6);
    }
}
