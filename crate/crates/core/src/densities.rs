//! Special functions and log-density kernels.
//!
//! Every density is evaluated in the log domain; the `*_pdf` helpers only
//! exponentiate the log form at the very end. Non-finite arguments are
//! rejected with [`Error::Domain`] instead of being propagated.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Arguments below this are shifted up before the asymptotic series is used.
const STIRLING_MIN: f64 = 15.0;
const DIGAMMA_MIN: f64 = 10.0;

// B_{2k} / (2k (2k - 1)) for k = 1..=8
const STIRLING_COEFFS: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

// B_{2k} / (2k) for k = 1..=7
const DIGAMMA_COEFFS: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
    1.0 / 12.0,
];

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and > 0, got {x}")))
    }
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {x}")))
    }
}

/// Correction term of the Stirling series, `ln Γ(x) - [(x - ½) ln x - x + ½ ln 2π]`.
fn stirling_tail(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for &c in STIRLING_COEFFS.iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    if x >= STIRLING_MIN {
        return (x - 0.5) * x.ln() - x + HALF_LN_2PI + stirling_tail(x);
    }
    let mut z = x;
    let mut prod = 1.0;
    while z < STIRLING_MIN {
        prod *= z;
        z += 1.0;
    }
    ln_gamma_unchecked(z) - prod.ln()
}

/// Natural log of the Gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    check_positive("ln_gamma argument", x)?;
    Ok(ln_gamma_unchecked(x))
}

fn digamma_unchecked(x: f64) -> f64 {
    let mut z = x;
    let mut shift = 0.0;
    while z < DIGAMMA_MIN {
        shift -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let mut acc = 0.0;
    for &c in DIGAMMA_COEFFS.iter().rev() {
        acc = acc * inv2 + c;
    }
    shift + z.ln() - 0.5 / z - acc * inv2
}

/// Digamma function ψ(x) = d/dx ln Γ(x) for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma argument", x)?;
    Ok(digamma_unchecked(x))
}

/// `ln Γ(a + ½) - ln Γ(a)` without the cancellation of the naive difference
/// at large `a`.
pub(crate) fn ln_gamma_half_ratio(a: f64) -> f64 {
    if a < STIRLING_MIN {
        return ln_gamma_unchecked(a + 0.5) - ln_gamma_unchecked(a);
    }
    a * (0.5 / a).ln_1p() + 0.5 * a.ln() - 0.5 + stirling_tail(a + 0.5) - stirling_tail(a)
}

/// Location, squared scale and degrees of freedom of a Student-t law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TParams {
    pub mu: f64,
    pub sigma2: f64,
    pub nu: f64,
}

impl TParams {
    pub fn new(mu: f64, sigma2: f64, nu: f64) -> Result<Self> {
        let p = Self { mu, sigma2, nu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("mu", self.mu)?;
        check_positive("sigma2", self.sigma2)?;
        check_positive("nu", self.nu)
    }
}

/// Precomputed normalising constant of a t density with fixed (σ², ν).
///
/// The E-step evaluates the same expert density at every observation, so the
/// log-gamma terms are paid once per component rather than once per point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TKernel {
    log_norm: f64,
    nu: f64,
    sigma2: f64,
}

impl TKernel {
    pub(crate) fn new(sigma2: f64, nu: f64) -> Self {
        let log_norm = ln_gamma_half_ratio(0.5 * nu) - 0.5 * (nu * PI * sigma2).ln();
        Self {
            log_norm,
            nu,
            sigma2,
        }
    }

    /// Squared standardised residual `((y - μ) / σ)²`.
    #[inline]
    pub(crate) fn mahalanobis(&self, resid: f64) -> f64 {
        resid * resid / self.sigma2
    }

    #[inline]
    pub(crate) fn logpdf_from_d2(&self, d2: f64) -> f64 {
        self.log_norm - 0.5 * (self.nu + 1.0) * (d2 / self.nu).ln_1p()
    }
}

/// Log density of the Student-t law with location μ, scale σ² and ν degrees
/// of freedom.
pub fn t_logpdf(y: f64, p: &TParams) -> Result<f64> {
    check_finite("y", y)?;
    p.validate()?;
    let kernel = TKernel::new(p.sigma2, p.nu);
    Ok(kernel.logpdf_from_d2(kernel.mahalanobis(y - p.mu)))
}

pub fn t_pdf(y: f64, p: &TParams) -> Result<f64> {
    t_logpdf(y, p).map(f64::exp)
}

#[inline]
pub(crate) fn normal_logpdf_unchecked(resid: f64, sigma2: f64) -> f64 {
    -0.5 * (LN_2PI + sigma2.ln()) - 0.5 * resid * resid / sigma2
}

/// Log density of N(μ, σ²) at `y`.
pub fn normal_logpdf(y: f64, mu: f64, sigma2: f64) -> Result<f64> {
    check_finite("y", y)?;
    check_finite("mu", mu)?;
    check_positive("sigma2", sigma2)?;
    Ok(normal_logpdf_unchecked(y - mu, sigma2))
}

pub fn normal_pdf(y: f64, mu: f64, sigma2: f64) -> Result<f64> {
    normal_logpdf(y, mu, sigma2).map(f64::exp)
}

#[inline]
pub(crate) fn laplace_logpdf_unchecked(resid: f64, lambda: f64) -> f64 {
    -(2.0 * lambda).ln() - resid.abs() / lambda
}

/// Log density of the Laplace law with location μ and scale λ.
pub fn laplace_logpdf(y: f64, mu: f64, lambda: f64) -> Result<f64> {
    check_finite("y", y)?;
    check_finite("mu", mu)?;
    check_positive("lambda", lambda)?;
    Ok(laplace_logpdf_unchecked(y - mu, lambda))
}

pub fn laplace_pdf(y: f64, mu: f64, lambda: f64) -> Result<f64> {
    laplace_logpdf(y, mu, lambda).map(f64::exp)
}

/// Log density of the shape–rate gamma law, `f(u) ∝ u^(a-1) e^(-b u)`.
pub fn gamma_logpdf(u: f64, shape: f64, rate: f64) -> Result<f64> {
    check_positive("u", u)?;
    check_positive("shape", shape)?;
    check_positive("rate", rate)?;
    Ok(shape * rate.ln() - ln_gamma_unchecked(shape) + (shape - 1.0) * u.ln() - rate * u)
}
