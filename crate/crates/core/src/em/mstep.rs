//! Weighted least-squares expert updates.

use nalgebra::{DMatrix, DVector};

use super::{FitConfig, SigmaUpdate};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numeric::weighted_least_squares;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertUpdate {
    pub beta: DVector<f64>,
    pub sigma2: f64,
}

fn check(data: &Dataset, m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != data.n() {
        return Err(Error::Dimension(format!("{what} has {} rows, data has {}", m.nrows(), data.n())));
    }
    Ok(())
}

/// β = argmin Σ c_i (y_i - x_iᵀβ)², σ² = Σ c_i resid² / divisor.
fn weighted_update(data: &Dataset, c: &[f64], divisor: f64, min_sigma2: f64) -> ExpertUpdate {
    let beta = weighted_least_squares(data.x(), data.y(), c);
    let fitted = data.x() * &beta;
    let rss: f64 = c
        .iter()
        .zip(data.y().iter().zip(fitted.iter()))
        .map(|(c, (y, f))| c * (y - f) * (y - f))
        .sum();
    ExpertUpdate {
        beta,
        sigma2: (rss / divisor).max(min_sigma2),
    }
}

/// Closed-form updates for normal experts given memberships `tau` (n × K).
pub fn mstep_experts_nmoe(data: &Dataset, tau: &DMatrix<f64>, cfg: &FitConfig) -> Result<Vec<ExpertUpdate>> {
    check(data, tau, "tau")?;
    tau.column_iter()
        .enumerate()
        .map(|(k, col)| {
            let c: Vec<f64> = col.iter().copied().collect();
            let mass: f64 = c.iter().sum();
            if !(mass > 0.0) {
                return Err(Error::DegenerateComponent { component: k, mass });
            }
            Ok(weighted_update(data, &c, mass, cfg.min_sigma2))
        })
        .collect()
}

/// Updates for t experts with case weights τ_ik w_ik; the σ² divisor is Σ τ
/// or Σ τ w according to `cfg.sigma_update`.
pub fn mstep_experts_tmoe(data: &Dataset, tau: &DMatrix<f64>, w: &DMatrix<f64>, cfg: &FitConfig) -> Result<Vec<ExpertUpdate>> {
    check(data, tau, "tau")?;
    check(data, w, "w")?;
    if tau.shape() != w.shape() {
        return Err(Error::Dimension("tau and w differ in shape".into()));
    }
    (0..tau.ncols())
        .map(|k| {
            let c: Vec<f64> = tau.column(k).iter().zip(w.column(k).iter()).map(|(t, w)| t * w).collect();
            let mass: f64 = tau.column(k).sum();
            let weighted_mass: f64 = c.iter().sum();
            if !(mass > 0.0) || !(weighted_mass > 0.0) {
                return Err(Error::DegenerateComponent { component: k, mass });
            }
            let divisor = match cfg.sigma_update {
                SigmaUpdate::Standard => mass,
                SigmaUpdate::ModifiedDivisor => weighted_mass,
            };
            Ok(weighted_update(data, &c, divisor, cfg.min_sigma2))
        })
        .collect()
}
