//! Gating, mixture log-likelihood, predictive moments and MAP clustering.

use nalgebra::DMatrix;

use crate::dataset::Dataset;
use crate::densities::{laplace_logpdf_unchecked, normal_logpdf_unchecked, TKernel};
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use crate::params::{ExpertParams, Family, GatingParams, MoEParams};

fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what} has length {got}, expected {expected}")))
    }
}

/// Log of the softmax gate for every component, reference component last.
fn log_gate_into(r: &[f64], alpha: &DMatrix<f64>, out: &mut [f64]) {
    let k = out.len();
    for (c, slot) in out.iter_mut().enumerate().take(k - 1) {
        *slot = alpha.row(c).iter().zip(r).map(|(a, v)| a * v).sum();
    }
    out[k - 1] = 0.0;
    let norm = log_sum_exp(out.iter().copied());
    out.iter_mut().for_each(|v| *v -= norm);
}

/// Mixing proportions π_k(r; α) for one gating covariate vector.
pub fn gate_probs(r: &[f64], gating: &GatingParams) -> Result<Vec<f64>> {
    check_len("gating covariate", r.len(), gating.q())?;
    let mut out = vec![0.0; gating.k()];
    log_gate_into(r, gating.alpha(), &mut out);
    out.iter_mut().for_each(|v| *v = v.exp());
    Ok(out)
}

/// `n × K` matrix of log π_k(r_i; α).
pub fn log_gate_matrix(r: &DMatrix<f64>, gating: &GatingParams) -> Result<DMatrix<f64>> {
    check_len("gating covariate", r.ncols(), gating.q())?;
    let (n, k) = (r.nrows(), gating.k());
    let mut out = DMatrix::zeros(n, k);
    let mut row = vec![0.0; k];
    let mut ri = vec![0.0; r.ncols()];
    for i in 0..n {
        ri.iter_mut().enumerate().for_each(|(j, v)| *v = r[(i, j)]);
        log_gate_into(&ri, gating.alpha(), &mut row);
        for c in 0..k {
            out[(i, c)] = row[c];
        }
    }
    Ok(out)
}

fn check_dataset(data: &Dataset, params: &MoEParams) -> Result<()> {
    params.validate()?;
    check_len("expert covariate", data.p(), params.p())?;
    check_len("gating covariate", data.q(), params.q())
}

/// `n × K` matrix of expert means β_kᵀx_i.
pub(crate) fn expert_means(data: &Dataset, experts: &[ExpertParams]) -> DMatrix<f64> {
    let mut betas = DMatrix::zeros(data.p(), experts.len());
    for (k, e) in experts.iter().enumerate() {
        betas.set_column(k, &e.beta);
    }
    data.x() * betas
}

/// `n × K` matrix of expert log densities log f_k(y_i | x_i).
pub fn expert_log_densities(data: &Dataset, params: &MoEParams) -> Result<DMatrix<f64>> {
    check_dataset(data, params)?;
    let means = expert_means(data, &params.experts);
    let mut out = DMatrix::zeros(data.n(), params.k());
    for (k, e) in params.experts.iter().enumerate() {
        match params.family {
            Family::Normal => {
                for i in 0..data.n() {
                    out[(i, k)] = normal_logpdf_unchecked(data.y()[i] - means[(i, k)], e.sigma2);
                }
            }
            Family::StudentT => {
                let kernel = TKernel::new(e.sigma2, e.nu.expect("validated"));
                for i in 0..data.n() {
                    let d2 = kernel.mahalanobis(data.y()[i] - means[(i, k)]);
                    out[(i, k)] = kernel.logpdf_from_d2(d2);
                }
            }
            Family::Laplace => {
                let lambda = e.lambda.expect("validated");
                for i in 0..data.n() {
                    out[(i, k)] = laplace_logpdf_unchecked(data.y()[i] - means[(i, k)], lambda);
                }
            }
        }
    }
    Ok(out)
}

/// `n × K` matrix of log[π_k(r_i) f_k(y_i | x_i)].
pub fn log_joint_matrix(data: &Dataset, params: &MoEParams) -> Result<DMatrix<f64>> {
    let dens = expert_log_densities(data, params)?;
    Ok(log_gate_matrix(data.r(), &params.gating)? + dens)
}

/// Observed-data log-likelihood Σ_i ln Σ_k π_k(r_i) f_k(y_i | x_i).
pub fn loglik(data: &Dataset, params: &MoEParams) -> Result<f64> {
    let joint = log_joint_matrix(data, params)?;
    Ok(joint.row_iter().map(|row| log_sum_exp(row.iter().copied())).sum())
}

/// Conditional mean Σ_k π_k(r) β_kᵀx.
pub fn predict_mean(x: &[f64], r: &[f64], params: &MoEParams) -> Result<f64> {
    check_len("expert covariate", x.len(), params.p())?;
    if params.family == Family::StudentT {
        if let Some((k, nu)) = params.experts.iter().enumerate().find_map(|(k, e)| e.nu.filter(|&v| v <= 1.0).map(|v| (k, v))) {
            return Err(Error::UndefinedMoment(format!("expert {k} has nu = {nu} <= 1, its mean is undefined")));
        }
    }
    let pi = gate_probs(r, &params.gating)?;
    Ok(params.experts.iter().zip(&pi).map(|(e, p)| p * e.mean(x)).sum())
}

fn expert_variance(family: Family, e: &ExpertParams, k: usize) -> Result<f64> {
    match family {
        Family::StudentT => {
            let nu = e.nu.expect("validated");
            if nu <= 2.0 {
                Err(Error::UndefinedMoment(format!("expert {k} has nu = {nu} <= 2, its variance is undefined")))
            } else {
                Ok(nu * e.sigma2 / (nu - 2.0))
            }
        }
        // for Laplace experts sigma2 holds 2λ²
        Family::Normal | Family::Laplace => Ok(e.sigma2),
    }
}

/// Conditional variance Σ_k π_k (m_k² + v_k) - (Σ_k π_k m_k)².
pub fn predict_variance(x: &[f64], r: &[f64], params: &MoEParams) -> Result<f64> {
    check_len("expert covariate", x.len(), params.p())?;
    let pi = gate_probs(r, &params.gating)?;
    let mut second = 0.0;
    let mut first = 0.0;
    for (k, (e, p)) in params.experts.iter().zip(&pi).enumerate() {
        let m = e.mean(x);
        let v = expert_variance(params.family, e, k)?;
        first += p * m;
        second += p * (m * m + v);
    }
    Ok((second - first * first).max(0.0))
}

/// MAP allocation ẑ_i = argmax_k τ_ik (0-based), ties toward the lowest index.
pub fn map_cluster(tau: &DMatrix<f64>) -> Result<Vec<usize>> {
    tau.row_iter()
        .enumerate()
        .map(|(i, row)| {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > 1e-8 {
                return Err(Error::InvalidParams(format!("responsibility row {i} is not a probability vector (sum {sum})")));
            }
            let mut best = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = k;
                }
            }
            Ok(best)
        })
        .collect()
}
