//! Newton-Raphson (IRLS) maximisation of the gating objective
//! Q₁(α) = Σ_i Σ_k τ_ik ln π_k(r_i; α).

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::FitConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use crate::params::GatingParams;

/// Ridge added to the negated Hessian when its Cholesky factorisation fails.
const HESSIAN_RIDGE: f64 = 1e-8;
const MAX_HALVINGS: usize = 30;
/// Relative Q₁ gain below which Newton has stalled at rounding level.
const STALL_REL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct IrlsOutcome {
    pub gating: GatingParams,
    pub iterations: usize,
    /// Gradient max-norm fell below `irls_tol`.
    pub converged: bool,
    /// The Hessian stayed singular even after ridge regularisation.
    pub hessian_failure: bool,
    /// Max-norm of ∂Q₁/∂α at the returned coefficients.
    pub gradient_max: f64,
}

/// log π for every row of `r` under coefficient rows `alpha` (reference last).
fn log_probs(r: &DMatrix<f64>, alpha: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (r.nrows(), alpha.nrows());
    let logits = r * alpha.transpose();
    let mut out = DMatrix::zeros(n, m + 1);
    for i in 0..n {
        let norm = log_sum_exp(logits.row(i).iter().copied().chain(std::iter::once(0.0)));
        for k in 0..m {
            out[(i, k)] = logits[(i, k)] - norm;
        }
        out[(i, m)] = -norm;
    }
    out
}

fn objective_from_log_probs(tau: &DMatrix<f64>, log_pi: &DMatrix<f64>) -> f64 {
    tau.iter()
        .zip(log_pi.iter())
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, l)| t * l)
        .sum()
}

fn check_shapes(tau: &DMatrix<f64>, r: &DMatrix<f64>, gating: &GatingParams) -> Result<()> {
    if tau.nrows() != r.nrows() || tau.ncols() != gating.k() || r.ncols() != gating.q() {
        return Err(Error::Dimension(format!(
            "tau is {}x{}, r is {}x{}, gating has K = {}, q = {}",
            tau.nrows(),
            tau.ncols(),
            r.nrows(),
            r.ncols(),
            gating.k(),
            gating.q()
        )));
    }
    Ok(())
}

/// Q₁(α) = Σ_i Σ_k τ_ik ln π_k(r_i; α).
pub fn gating_objective(tau: &DMatrix<f64>, r: &DMatrix<f64>, gating: &GatingParams) -> Result<f64> {
    check_shapes(tau, r, gating)?;
    Ok(objective_from_log_probs(tau, &log_probs(r, gating.alpha())))
}

/// Analytic gradient ∂Q₁/∂α_k = Σ_i (τ_ik - π_ik) r_i, as a `(K-1) × q` matrix.
pub fn gating_gradient(tau: &DMatrix<f64>, r: &DMatrix<f64>, gating: &GatingParams) -> Result<DMatrix<f64>> {
    check_shapes(tau, r, gating)?;
    let pi = log_probs(r, gating.alpha()).map(f64::exp);
    let m = gating.k() - 1;
    let resid = (tau - pi).columns(0, m).clone_owned();
    Ok(resid.transpose() * r)
}

/// Affine recentring of the non-intercept gating covariates. Q₁ is invariant
/// under it, while the Newton system becomes much better conditioned for
/// covariates far from zero (calendar years, say).
struct Standardisation {
    r: DMatrix<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardisation {
    fn new(r: &DMatrix<f64>) -> Self {
        let (n, q) = r.shape();
        let mut mean = vec![0.0; q];
        let mut scale = vec![1.0; q];
        for j in 1..q {
            let col = r.column(j);
            let mu = col.mean();
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            if var > 0.0 && var.is_finite() {
                mean[j] = mu;
                scale[j] = var.sqrt();
            }
        }
        let r = DMatrix::from_fn(n, q, |i, j| (r[(i, j)] - mean[j]) / scale[j]);
        Self { r, mean, scale }
    }

    fn to_scaled(&self, alpha: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = alpha.clone();
        for k in 0..alpha.nrows() {
            let mut intercept = alpha[(k, 0)];
            for j in 1..alpha.ncols() {
                intercept += alpha[(k, j)] * self.mean[j];
                out[(k, j)] = alpha[(k, j)] * self.scale[j];
            }
            out[(k, 0)] = intercept;
        }
        out
    }

    fn to_original(&self, scaled: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = scaled.clone();
        for k in 0..scaled.nrows() {
            let mut intercept = scaled[(k, 0)];
            for j in 1..scaled.ncols() {
                let a = scaled[(k, j)] / self.scale[j];
                out[(k, j)] = a;
                intercept -= a * self.mean[j];
            }
            out[(k, 0)] = intercept;
        }
        out
    }

    /// Gradient w.r.t. original coefficients from the gradient in scaled ones.
    fn gradient_to_original(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = g.clone();
        for k in 0..g.nrows() {
            for j in 1..g.ncols() {
                out[(k, j)] = g[(k, j)] * self.scale[j] + g[(k, 0)] * self.mean[j];
            }
        }
        out.map(|v| v)
    }
}

/// Gradient (`m × q`) and negated Hessian (`mq × mq`) in the scaled system.
fn newton_system(tau: &DMatrix<f64>, r: &DMatrix<f64>, pi: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, q) = r.shape();
    let m = pi.ncols() - 1;
    let mut grad = DMatrix::zeros(m, q);
    let mut neg_hess = DMatrix::zeros(m * q, m * q);
    for i in 0..n {
        let ri = r.row(i);
        for k in 0..m {
            let resid = tau[(i, k)] - pi[(i, k)];
            for a in 0..q {
                grad[(k, a)] += resid * ri[a];
            }
            for l in 0..m {
                let wkl = pi[(i, k)] * (if k == l { 1.0 } else { 0.0 } - pi[(i, l)]);
                if wkl == 0.0 {
                    continue;
                }
                for a in 0..q {
                    let wa = wkl * ri[a];
                    for b in 0..q {
                        neg_hess[(k * q + a, l * q + b)] += wa * ri[b];
                    }
                }
            }
        }
    }
    (grad, neg_hess)
}

fn newton_direction(neg_hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(chol) = neg_hess.clone().cholesky() {
        return Some(chol.solve(grad));
    }
    let mut ridged = neg_hess.clone();
    for d in 0..ridged.nrows() {
        ridged[(d, d)] += HESSIAN_RIDGE;
    }
    ridged.cholesky().map(|chol| chol.solve(grad))
}

/// Maximises Q₁ by Newton-Raphson with step halving, starting from
/// `alpha_init`. Only steps that do not decrease Q₁ are accepted, so the
/// returned coefficients never do worse than the starting point.
pub fn irls_gating(tau: &DMatrix<f64>, data: &Dataset, alpha_init: &GatingParams, cfg: &FitConfig) -> Result<IrlsOutcome> {
    let r = data.r();
    check_shapes(tau, r, alpha_init)?;
    let m = alpha_init.k() - 1;
    if m == 0 {
        return Ok(IrlsOutcome {
            gating: alpha_init.clone(),
            iterations: 0,
            converged: true,
            hessian_failure: false,
            gradient_max: 0.0,
        });
    }
    let q = alpha_init.q();
    let std = Standardisation::new(r);
    let mut alpha = std.to_scaled(alpha_init.alpha());
    let mut log_pi = log_probs(&std.r, &alpha);
    let mut q1 = objective_from_log_probs(tau, &log_pi);

    let mut iterations = 0;
    let mut converged = false;
    let mut hessian_failure = false;
    let mut gradient_max;
    loop {
        let pi = log_pi.map(f64::exp);
        let (grad, neg_hess) = newton_system(tau, &std.r, &pi);
        gradient_max = std.gradient_to_original(&grad).amax();
        if gradient_max <= cfg.irls_tol {
            converged = true;
            break;
        }
        if iterations >= cfg.irls_max_iters {
            break;
        }
        iterations += 1;

        // row-major flattening: index k*q + a
        let g = DVector::from_iterator(m * q, grad.transpose().iter().copied());
        let Some(delta) = newton_direction(&neg_hess, &g) else {
            hessian_failure = true;
            break;
        };
        let delta = DMatrix::from_row_slice(m, q, delta.as_slice());

        let mut step = 1.0;
        let mut accepted = false;
        let mut stalled = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &alpha + &delta * step;
            if trial.iter().all(|v| v.is_finite()) {
                let trial_log_pi = log_probs(&std.r, &trial);
                let trial_q1 = objective_from_log_probs(tau, &trial_log_pi);
                if trial_q1 >= q1 {
                    stalled = trial_q1 - q1 <= STALL_REL * (1.0 + q1.abs());
                    alpha = trial;
                    log_pi = trial_log_pi;
                    q1 = trial_q1;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if stalled {
            let pi = log_pi.map(f64::exp);
            gradient_max = std.gradient_to_original(&newton_system(tau, &std.r, &pi).0).amax();
            converged = true;
            break;
        }
    }

    if hessian_failure {
        warn!("IRLS: singular Hessian after ridge regularisation; keeping best coefficients so far");
    }
    Ok(IrlsOutcome {
        gating: GatingParams::new(std.to_original(&alpha))?,
        iterations,
        converged,
        hessian_failure,
        gradient_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> FitConfig {
        FitConfig::default()
    }

    fn finite_difference_gradient(tau: &DMatrix<f64>, r: &DMatrix<f64>, g: &GatingParams) -> DMatrix<f64> {
        let base = g.alpha().clone();
        DMatrix::from_fn(base.nrows(), base.ncols(), |k, j| {
            let h = 1e-6 * base[(k, j)].abs().max(1.0);
            let mut plus = base.clone();
            plus[(k, j)] += h;
            let mut minus = base.clone();
            minus[(k, j)] -= h;
            let fp = gating_objective(tau, r, &GatingParams::new(plus).unwrap()).unwrap();
            let fm = gating_objective(tau, r, &GatingParams::new(minus).unwrap()).unwrap();
            (fp - fm) / (2.0 * h)
        })
    }

    fn soft_tau(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), 3, |i, k| {
            let raw = [(1.5 * xs[i]).exp(), 1.0, (-2.0 * xs[i] + 0.3).exp()];
            raw[k] / raw.iter().sum::<f64>()
        })
    }

    #[test]
    fn uniform_responsibilities_give_null_gate() {
        let xs: Vec<f64> = (-5..=5).map(|i| i as f64 / 5.0).collect();
        let data = Dataset::from_scalar(&xs, &vec![0.0; xs.len()], None).unwrap();
        let tau = DMatrix::from_element(xs.len(), 2, 0.5);
        let start = GatingParams::from_rows(&[vec![0.7, -0.4]], 2).unwrap();
        let out = irls_gating(&tau, &data, &start, &cfg()).unwrap();
        assert!(out.converged);
        assert!(out.gating.alpha().amax() < 1e-8);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let xs: Vec<f64> = (0..25).map(|i| -1.0 + 0.08 * i as f64).collect();
        let data = Dataset::from_scalar(&xs, &vec![0.0; xs.len()], None).unwrap();
        let tau = soft_tau(&xs);
        let g = GatingParams::from_rows(&[vec![0.2, -0.5], vec![-0.3, 0.9]], 2).unwrap();
        let analytic = gating_gradient(&tau, data.r(), &g).unwrap();
        let numeric = finite_difference_gradient(&tau, data.r(), &g);
        assert!((analytic - numeric).amax() < 1e-6);
    }

    #[test]
    fn converged_gradient_is_small_and_q1_increases() {
        let xs: Vec<f64> = (0..40).map(|i| -1.0 + 0.05 * i as f64).collect();
        let data = Dataset::from_scalar(&xs, &vec![0.0; xs.len()], None).unwrap();
        let tau = soft_tau(&xs);
        let start = GatingParams::null(3, 2);
        let before = gating_objective(&tau, data.r(), &start).unwrap();
        let out = irls_gating(&tau, &data, &start, &cfg()).unwrap();
        assert!(out.converged, "{out:?}");
        let after = gating_objective(&tau, data.r(), &out.gating).unwrap();
        assert!(after > before);
        let fd = finite_difference_gradient(&tau, data.r(), &out.gating);
        assert!(fd.amax() < 1e-5, "{fd}");
    }

    #[test]
    fn separated_memberships_reproduce_pattern() {
        let xs: Vec<f64> = (0..41).map(|i| -1.0 + 0.05 * i as f64).collect();
        let data = Dataset::from_scalar(&xs, &vec![0.0; xs.len()], None).unwrap();
        let tau = DMatrix::from_fn(xs.len(), 2, |i, k| {
            let first = if xs[i] > 0.0 { 1.0 } else { 0.0 };
            if k == 0 {
                first
            } else {
                1.0 - first
            }
        });
        let mut g = GatingParams::null(2, 2);
        let mut last = gating_objective(&tau, data.r(), &g).unwrap();
        let mut c = cfg();
        c.irls_max_iters = 1;
        for _ in 0..60 {
            g = irls_gating(&tau, &data, &g, &c).unwrap().gating;
            let now = gating_objective(&tau, data.r(), &g).unwrap();
            assert!(now >= last);
            last = now;
        }
        for (i, &x) in xs.iter().enumerate() {
            if x.abs() >= 0.5 {
                let pi = crate::model::gate_probs(&data.r_row(i), &g).unwrap();
                assert!((pi[0] - tau[(i, 0)]).abs() < 0.01, "x={x} pi={pi:?}");
            }
        }
    }

    #[test]
    fn large_offset_covariate_is_handled() {
        // calendar-year style covariate
        let xs: Vec<f64> = (0..60).map(|i| 1900.0 + i as f64 * 2.0).collect();
        let data = Dataset::from_scalar(&xs, &vec![0.0; xs.len()], None).unwrap();
        let tau = DMatrix::from_fn(xs.len(), 2, |i, k| {
            let p = 1.0 / (1.0 + (-(0.1 * (xs[i] - 1960.0))).exp());
            if k == 0 {
                p
            } else {
                1.0 - p
            }
        });
        let out = irls_gating(&tau, &data, &GatingParams::null(2, 2), &cfg()).unwrap();
        assert!(out.converged, "{out:?}");
        let a = out.gating.alpha();
        assert!((a[(0, 1)] - 0.1).abs() < 1e-6, "{a}");
        assert!((a[(0, 0)] + 196.0).abs() < 1e-3, "{a}");
    }

    #[test]
    fn single_component_is_trivial() {
        let data = Dataset::from_scalar(&[0.0, 1.0], &[0.0, 1.0], None).unwrap();
        let tau = DMatrix::from_element(2, 1, 1.0);
        let out = irls_gating(&tau, &data, &GatingParams::null(1, 2), &cfg()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.gating.k(), 1);
    }

    #[test]
    fn shape_errors() {
        let data = Dataset::from_scalar(&[0.0, 1.0], &[0.0, 1.0], None).unwrap();
        let tau = DMatrix::from_element(3, 2, 0.5);
        assert!(irls_gating(&tau, &data, &GatingParams::null(2, 2), &cfg()).is_err());
    }
}
