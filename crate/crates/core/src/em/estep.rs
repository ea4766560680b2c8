use nalgebra::DMatrix;

use crate::dataset::Dataset;
use crate::densities::digamma;
use crate::error::{Error, Result};
use crate::model::{expert_means, log_joint_matrix};
use crate::numeric::log_sum_exp;
use crate::params::{Family, MoEParams};

/// Conditional expectations computed by an E-step.
#[derive(Debug, Clone)]
pub struct EStepQuantities {
    /// Posterior memberships τ_ik (n × K).
    pub tau: DMatrix<f64>,
    /// E[W_i | y_i, Z_i = k] (t experts only).
    pub w: Option<DMatrix<f64>>,
    /// E[ln W_i | y_i, Z_i = k] (t experts only).
    pub e1: Option<DMatrix<f64>>,
    /// Observed-data log-likelihood at the parameters used.
    pub loglik: f64,
    /// ln[π_k(r_i) f_k(y_i | x_i)], kept for the classification likelihood.
    pub log_joint: DMatrix<f64>,
}

impl EStepQuantities {
    /// Σ_i τ_ik for every component.
    pub fn masses(&self) -> Vec<f64> {
        self.tau.column_iter().map(|c| c.sum()).collect()
    }
}

fn memberships(log_joint: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let (n, k) = log_joint.shape();
    let mut tau = DMatrix::zeros(n, k);
    let mut total = 0.0;
    for i in 0..n {
        let row = log_joint.row(i);
        let norm = log_sum_exp(row.iter().copied());
        if !norm.is_finite() {
            return Err(Error::InvalidParams(format!("observation {i} has zero likelihood under every expert")));
        }
        total += norm;
        for c in 0..k {
            tau[(i, c)] = (row[c] - norm).exp();
        }
    }
    Ok((tau, total))
}

/// Posterior memberships for normal (or Laplace) experts.
pub fn estep_nmoe(data: &Dataset, params: &MoEParams) -> Result<EStepQuantities> {
    let log_joint = log_joint_matrix(data, params)?;
    let (tau, loglik) = memberships(&log_joint)?;
    Ok(EStepQuantities {
        tau,
        w: None,
        e1: None,
        loglik,
        log_joint,
    })
}

/// Memberships plus the latent-scale expectations for t experts:
/// w_ik = (ν_k + 1) / (ν_k + d_ik²) and
/// e1_ik = ln w_ik + ψ((ν_k + 1)/2) - ln((ν_k + 1)/2).
pub fn estep_tmoe(data: &Dataset, params: &MoEParams) -> Result<EStepQuantities> {
    if params.family != Family::StudentT {
        return Err(Error::UnsupportedFamily(params.family));
    }
    let log_joint = log_joint_matrix(data, params)?;
    let (tau, loglik) = memberships(&log_joint)?;
    let means = expert_means(data, &params.experts);
    let (n, k) = (data.n(), params.k());
    let mut w = DMatrix::zeros(n, k);
    let mut e1 = DMatrix::zeros(n, k);
    for (c, expert) in params.experts.iter().enumerate() {
        let nu = expert.nu.expect("validated");
        let half = 0.5 * (nu + 1.0);
        let shift = digamma(half)? - half.ln();
        for i in 0..n {
            let resid = data.y()[i] - means[(i, c)];
            let d2 = resid * resid / expert.sigma2;
            let wik = (nu + 1.0) / (nu + d2);
            w[(i, c)] = wik;
            e1[(i, c)] = wik.ln() + shift;
        }
    }
    Ok(EStepQuantities {
        tau,
        w: Some(w),
        e1: Some(e1),
        loglik,
        log_joint,
    })
}

/// Dispatches on the parameter family.
pub fn estep(data: &Dataset, params: &MoEParams) -> Result<EStepQuantities> {
    match params.family {
        Family::StudentT => estep_tmoe(data, params),
        Family::Normal | Family::Laplace => estep_nmoe(data, params),
    }
}
