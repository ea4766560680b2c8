//! Degrees-of-freedom update for t experts.

use serde::Serialize;

use crate::densities::digamma;
use crate::error::{Error, Result};

/// Residual target for the root solve.
pub const DOF_RESIDUAL_TOL: f64 = 1e-8;
const MAX_BRENT_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DofStatus {
    /// A sign change was bracketed and the root located.
    Root,
    /// The equation is negative over the whole bracket; ν sits at its lower end.
    SaturatedLow,
    /// The equation is positive over the whole bracket (effectively normal tails).
    SaturatedHigh,
    /// The bracket is a single point.
    Pinned,
}

impl DofStatus {
    pub fn is_saturated(self) -> bool {
        matches!(self, DofStatus::SaturatedLow | DofStatus::SaturatedHigh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofSolution {
    pub nu: f64,
    pub status: DofStatus,
    /// Value of the root equation at `nu`.
    pub residual: f64,
}

/// The constant part Σ_i τ_i (e1_i - w_i) / Σ_i τ_i of the ν equation.
///
/// `e1` already carries the ψ((ν_prev+1)/2) - ln((ν_prev+1)/2) shift of the
/// previous iterate, so the equation below only involves the unknown ν.
pub fn dof_constant(tau: &[f64], w: &[f64], e1: &[f64]) -> Result<f64> {
    if tau.len() != w.len() || tau.len() != e1.len() {
        return Err(Error::Dimension(format!(
            "tau, w and e1 have lengths {}, {}, {}",
            tau.len(),
            w.len(),
            e1.len()
        )));
    }
    let mass: f64 = tau.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::DegenerateComponent { component: 0, mass });
    }
    let weighted: f64 = tau.iter().zip(w).zip(e1).map(|((t, w), e)| t * (e - w)).sum();
    Ok(weighted / mass)
}

/// -ψ(ν/2) + ln(ν/2) + 1 + c.
pub fn dof_equation(nu: f64, constant: f64) -> Result<f64> {
    let half = 0.5 * nu;
    Ok(-digamma(half)? + half.ln() + 1.0 + constant)
}

/// Solves the ν equation for one expert inside `bracket`.
///
/// The left-hand side decreases in ν, so when it keeps one sign over the
/// bracket the end with the smaller absolute residual is the constrained
/// maximiser of the ν part of the Q function and is returned with a
/// saturation status.
pub fn solve_dof(tau: &[f64], w: &[f64], e1: &[f64], bracket: (f64, f64)) -> Result<DofSolution> {
    let (lo, hi) = bracket;
    if !(lo > 0.0) || !hi.is_finite() || lo > hi {
        return Err(Error::Config(format!("invalid nu bracket [{lo}, {hi}]")));
    }
    let c = dof_constant(tau, w, e1)?;
    let f = |nu: f64| dof_equation(nu, c);
    if lo == hi {
        return Ok(DofSolution {
            nu: lo,
            status: DofStatus::Pinned,
            residual: f(lo)?,
        });
    }
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if flo == 0.0 {
        return Ok(DofSolution { nu: lo, status: DofStatus::Root, residual: 0.0 });
    }
    if fhi == 0.0 {
        return Ok(DofSolution { nu: hi, status: DofStatus::Root, residual: 0.0 });
    }
    if flo.signum() == fhi.signum() {
        let (nu, residual) = if flo.abs() <= fhi.abs() { (lo, flo) } else { (hi, fhi) };
        let status = if nu == hi { DofStatus::SaturatedHigh } else { DofStatus::SaturatedLow };
        return Ok(DofSolution { nu, status, residual });
    }
    let (nu, residual) = brent(&f, lo, hi, flo, fhi)?;
    Ok(DofSolution { nu, status: DofStatus::Root, residual })
}

/// Brent's bracketed root finder (bisection, secant and inverse quadratic
/// interpolation). Requires `fa` and `fb` of opposite sign.
fn brent(f: &impl Fn(f64) -> Result<f64>, a: f64, b: f64, fa: f64, fb: f64) -> Result<(f64, f64)> {
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_BRENT_ITERS {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs();
        let m = 0.5 * (c - b);
        if fb.abs() <= 1e-14 || m.abs() <= tol {
            return Ok((b, fb));
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * m * s, 1.0 - s)
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0)),
                    (qa - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Ok((b, fb))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shift(nu: f64) -> f64 {
        digamma(0.5 * (nu + 1.0)).unwrap() - (0.5 * (nu + 1.0)).ln()
    }

    #[test]
    fn unit_weights_saturate_high() {
        // w ≡ 1 and a vanishing shift: -ψ(ν/2) + ln(ν/2) > 0 everywhere
        let n = 20;
        let tau = vec![1.0; n];
        let w = vec![1.0; n];
        let e1 = vec![shift(1e12); n];
        let sol = solve_dof(&tau, &w, &e1, (0.1, 200.0)).unwrap();
        assert_eq!(sol.nu, 200.0);
        assert_eq!(sol.status, DofStatus::SaturatedHigh);
    }

    #[test]
    fn residual_small_at_bracketed_root() {
        let tau = [0.9, 0.4, 0.7, 1.0, 0.2, 0.6];
        let w = [1.3, 0.2, 0.9, 1.1, 0.05, 0.7];
        let nu_prev = 4.0;
        let e1: Vec<f64> = w.iter().map(|w: &f64| w.ln() + shift(nu_prev)).collect();
        let sol = solve_dof(&tau, &w, &e1, (0.1, 200.0)).unwrap();
        assert_eq!(sol.status, DofStatus::Root);
        assert!(sol.residual.abs() <= DOF_RESIDUAL_TOL);
        let c = dof_constant(&tau, &w, &e1).unwrap();
        assert!(dof_equation(sol.nu, c).unwrap().abs() <= DOF_RESIDUAL_TOL);
    }

    #[test]
    fn equation_decreases_in_nu() {
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let nu = 0.1 * 1.05f64.powi(i);
            let v = dof_equation(nu, -1.2).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn pinned_bracket() {
        let sol = solve_dof(&[1.0], &[1.0], &[0.0], (1e8, 1e8)).unwrap();
        assert_eq!(sol.status, DofStatus::Pinned);
        assert_eq!(sol.nu, 1e8);
    }

    #[test]
    fn invalid_brackets() {
        assert!(solve_dof(&[1.0], &[1.0], &[0.0], (5.0, 1.0)).is_err());
        assert!(solve_dof(&[1.0], &[1.0], &[0.0], (0.0, 1.0)).is_err());
        assert!(solve_dof(&[1.0], &[1.0], &[0.0], (1.0, f64::INFINITY)).is_err());
    }

    #[test]
    fn brent_on_polynomial() {
        let f = |x: f64| Ok(x * x * x - 2.0 * x - 5.0);
        let (root, res) = brent(&f, 2.0, 3.0, -1.0, 16.0).unwrap();
        assert!((root - 2.094_551_481_542_326_5).abs() < 1e-12);
        assert!(res.abs() < 1e-12);
    }

    #[test]
    fn heavy_weights_give_small_nu() {
        // very spread weights signal heavy tails
        let w = [5.0, 0.01, 3.0, 0.02, 4.0, 0.01];
        let tau = [1.0; 6];
        let e1: Vec<f64> = w.iter().map(|w: &f64| w.ln() + shift(1.0)).collect();
        let sol = solve_dof(&tau, &w, &e1, (0.1, 200.0)).unwrap();
        assert!(sol.nu < 2.0, "{sol:?}");
    }
}
