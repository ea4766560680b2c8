//! Estimation-error metrics against known generating parameters.

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::predict_mean;
use crate::params::{Family, MoEParams};

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                prefix.push(j);
                extend(prefix, used, out);
                prefix.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    out
}

/// Relabels `est` so that its experts best match `truth` in total squared
/// β distance (ties to the first permutation found).
pub fn align_to(truth: &MoEParams, est: &MoEParams) -> Result<MoEParams> {
    check_shapes(truth, est)?;
    let cost = |perm: &[usize]| -> f64 {
        perm.iter()
            .enumerate()
            .map(|(j, &src)| (&truth.experts[j].beta - &est.experts[src].beta).norm_squared())
            .sum()
    };
    let best = permutations(est.k())
        .into_iter()
        .map(|p| (cost(&p), p))
        .fold(None::<(f64, Vec<usize>)>, |acc, (c, p)| match acc {
            Some((bc, bp)) if bc <= c => Some((bc, bp)),
            _ => Some((c, p)),
        })
        .expect("at least one permutation");
    est.permuted(&best.1)
}

fn check_shapes(truth: &MoEParams, est: &MoEParams) -> Result<()> {
    if truth.family != est.family || truth.k() != est.k() || truth.p() != est.p() || truth.q() != est.q() {
        return Err(Error::Dimension(format!(
            "cannot compare {} K={} (p={}, q={}) with {} K={} (p={}, q={})",
            truth.family,
            truth.k(),
            truth.p(),
            truth.q(),
            est.family,
            est.k(),
            est.p(),
            est.q()
        )));
    }
    Ok(())
}

/// Squared error per scalar parameter, labelled with 1-based component and
/// 0-based coefficient indices (`alpha10`, `beta21`, `sigma1`, `nu2`, ...).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamErrors {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl ParamErrors {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// Mean of the entries whose name starts with `prefix`.
    pub fn mean_of(&self, prefix: &str) -> f64 {
        let picked: Vec<f64> = self
            .names
            .iter()
            .zip(&self.values)
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, v)| *v)
            .collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    }
}

/// Squared errors ‖Ψ_j - Ψ̂_j‖² after aligning `est` to `truth`. Scales enter
/// as standard deviations σ_k (not variances).
pub fn param_mse(truth: &MoEParams, est: &MoEParams) -> Result<ParamErrors> {
    let est = align_to(truth, est)?;
    let mut names = Vec::new();
    let mut values = Vec::new();
    let mut push = |name: String, a: f64, b: f64| {
        names.push(name);
        values.push((a - b) * (a - b));
    };
    let (ta, ea) = (truth.gating.alpha(), est.gating.alpha());
    for k in 0..ta.nrows() {
        for j in 0..ta.ncols() {
            push(format!("alpha{}{}", k + 1, j), ta[(k, j)], ea[(k, j)]);
        }
    }
    for (k, (t, e)) in truth.experts.iter().zip(&est.experts).enumerate() {
        for j in 0..t.beta.len() {
            push(format!("beta{}{}", k + 1, j), t.beta[j], e.beta[j]);
        }
    }
    for (k, (t, e)) in truth.experts.iter().zip(&est.experts).enumerate() {
        push(format!("sigma{}", k + 1), t.sigma2.sqrt(), e.sigma2.sqrt());
    }
    if truth.family == Family::StudentT {
        for (k, (t, e)) in truth.experts.iter().zip(&est.experts).enumerate() {
            push(format!("nu{}", k + 1), t.nu.expect("validated"), e.nu.expect("validated"));
        }
    }
    Ok(ParamErrors { names, values })
}

/// (1/n) Σ_i (E_Ψ[Y | x_i, r_i] - E_Ψ̂[Y | x_i, r_i])² over the covariates of `data`.
pub fn meanfn_mse(truth: &MoEParams, est: &MoEParams, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..data.n() {
        let (x, r) = (data.x_row(i), data.r_row(i));
        let gap = predict_mean(&x, &r, truth)? - predict_mean(&x, &r, est)?;
        total += gap * gap;
    }
    Ok(total / data.n() as f64)
}
