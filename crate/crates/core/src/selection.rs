//! Information criteria and the number-of-experts selection table.

use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::em::{fit, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::params::Family;

/// Number of free parameters of a K-expert model with expert covariate
/// vectors of length `p` and gating covariate vectors of length `q`
/// (intercepts included).
///
/// Gate: (K-1)·q, experts: K·p coefficients and K scales, plus K degrees of
/// freedom for t experts. With polynomial degrees d_x = p-1 and d_r = q-1 this
/// is K(d_x + d_r + 3) - d_r - 1 for normal experts and K(d_x + d_r + 4) - d_r - 1
/// for t experts.
pub fn free_params(family: Family, k: usize, p: usize, q: usize) -> Result<usize> {
    if k == 0 || p == 0 || q == 0 {
        return Err(Error::InvalidParams(format!("free_params needs K, p, q >= 1 (got {k}, {p}, {q})")));
    }
    let per_expert = match family {
        Family::Normal | Family::Laplace => p + q + 1,
        Family::StudentT => p + q + 2,
    };
    Ok(k * per_expert - q)
}

/// Penalised log-likelihood criteria, all to be maximised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Criteria {
    pub aic: f64,
    pub bic: f64,
    pub icl: f64,
}

/// AIC = ln L - η, BIC = ln L - η ln(n)/2, ICL = ln L_c - η ln(n)/2.
pub fn criteria(loglik: f64, complete_loglik: f64, eta: usize, n: usize) -> Criteria {
    let penalty = eta as f64 * (n as f64).ln() / 2.0;
    Criteria {
        aic: loglik - eta as f64,
        bic: loglik - penalty,
        icl: complete_loglik - penalty,
    }
}

/// Classification log-likelihood Σ_i ln[π_ẑi f_ẑi(y_i)] at the MAP labels.
pub fn complete_loglik(log_joint: &DMatrix<f64>, labels: &[usize]) -> f64 {
    labels.iter().enumerate().map(|(i, &k)| log_joint[(i, k)]).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Aic,
    Bic,
    Icl,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionRow {
    pub k: usize,
    pub loglik: f64,
    pub complete_loglik: f64,
    pub n_free_params: usize,
    pub bic: f64,
    pub aic: f64,
    pub icl: f64,
    pub converged: bool,
    /// Set when the fit for this K failed; the numeric fields are then NaN.
    pub error: Option<String>,
}

impl SelectionRow {
    pub fn from_fit(res: &FitResult) -> Self {
        Self {
            k: res.params.k(),
            loglik: res.loglik,
            complete_loglik: res.complete_loglik,
            n_free_params: res.n_free_params,
            bic: res.criteria.bic,
            aic: res.criteria.aic,
            icl: res.criteria.icl,
            converged: res.converged,
            error: None,
        }
    }

    pub fn failed(k: usize, n_free_params: usize, error: String) -> Self {
        Self {
            k,
            loglik: f64::NAN,
            complete_loglik: f64::NAN,
            n_free_params,
            bic: f64::NAN,
            aic: f64::NAN,
            icl: f64::NAN,
            converged: false,
            error: Some(error),
        }
    }

    fn value(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
            Criterion::Icl => self.icl,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SelectionTable {
    pub rows: Vec<SelectionRow>,
}

impl SelectionTable {
    /// K maximising the criterion among rows that fitted; ties go to the smaller K.
    pub fn best(&self, c: Criterion) -> Option<usize> {
        self.rows
            .iter()
            .filter(|row| row.error.is_none() && row.value(c).is_finite())
            .fold(None::<&SelectionRow>, |best, row| match best {
                Some(b) if b.value(c) >= row.value(c) => Some(b),
                _ => Some(row),
            })
            .map(|row| row.k)
    }

    pub fn row(&self, k: usize) -> Option<&SelectionRow> {
        self.rows.iter().find(|row| row.k == k)
    }
}

/// Fits every K in `ks` and tabulates the criteria. A failed fit is recorded
/// in its row rather than aborting the sweep.
pub fn select(data: &Dataset, family: Family, ks: RangeInclusive<usize>, cfg: &FitConfig) -> Result<SelectionTable> {
    if ks.is_empty() || *ks.start() == 0 {
        return Err(Error::Config(format!("invalid K range {}..={}", ks.start(), ks.end())));
    }
    let mut rows = Vec::new();
    for k in ks {
        let eta = free_params(family, k, data.p(), data.q())?;
        rows.push(match fit(data, family, k, cfg) {
            Ok(res) => SelectionRow::from_fit(&res),
            Err(e @ (Error::Config(_) | Error::UnsupportedFamily(_))) => return Err(e),
            Err(e) => SelectionRow::failed(k, eta, e.to_string()),
        });
    }
    Ok(SelectionTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_parameter_counts() {
        // (K-1) q + K p + K [+ K]
        assert_eq!(free_params(Family::Normal, 2, 2, 2).unwrap(), 8);
        assert_eq!(free_params(Family::StudentT, 2, 2, 2).unwrap(), 10);
        assert_eq!(free_params(Family::StudentT, 1, 2, 2).unwrap(), 4);
        assert_eq!(free_params(Family::Normal, 1, 2, 2).unwrap(), 3);
        assert!(free_params(Family::Normal, 0, 2, 2).is_err());
    }

    #[test]
    fn counts_agree_with_reported_criteria_gaps() {
        // AIC - BIC = η (ln n / 2 - 1) on the published selection tables
        let gap = |aic: f64, bic: f64, n: f64| (aic - bic) / (n.ln() / 2.0 - 1.0);
        let tone_t2 = gap(219.8773, 204.8241, 150.0);
        assert!((tone_t2 - free_params(Family::StudentT, 2, 2, 2).unwrap() as f64).abs() < 1e-3);
        let tone_n2 = gap(134.8476, 122.8050, 150.0);
        assert!((tone_n2 - free_params(Family::Normal, 2, 2, 2).unwrap() as f64).abs() < 1e-3);
        let temp_t3 = gap(87.2131, 63.9709, 135.0);
        assert!((temp_t3 - free_params(Family::StudentT, 3, 2, 2).unwrap() as f64).abs() < 1e-3);
    }

    #[test]
    fn free_parameter_difference_is_k() {
        for k in 1..6 {
            for p in 1..5 {
                for q in 1..5 {
                    let t = free_params(Family::StudentT, k, p, q).unwrap();
                    let n = free_params(Family::Normal, k, p, q).unwrap();
                    assert_eq!(t - n, k);
                }
            }
        }
    }

    #[test]
    fn criteria_formulas() {
        let c = criteria(0.0, 0.0, 2, 1);
        assert_eq!((c.aic, c.bic, c.icl), (-2.0, 0.0, 0.0));

        let c = criteria(-10.0, -12.0, 4, 100);
        assert_eq!(c.aic, -14.0);
        assert!((c.bic - (-10.0 - 2.0 * 100f64.ln())).abs() < 1e-12);
        assert!((c.icl - (-12.0 - 2.0 * 100f64.ln())).abs() < 1e-12);
        let hard = criteria(-10.0, -10.0, 4, 100);
        assert_eq!(hard.icl, hard.bic);
    }

    #[test]
    fn best_skips_failed_rows() {
        let mk = |k, bic| SelectionRow {
            k,
            loglik: 0.0,
            complete_loglik: 0.0,
            n_free_params: 1,
            bic,
            aic: 0.0,
            icl: 0.0,
            converged: true,
            error: None,
        };
        let table = SelectionTable {
            rows: vec![mk(1, 3.0), mk(2, 5.0), SelectionRow::failed(3, 1, "boom".into()), mk(4, 5.0)],
        };
        assert_eq!(table.best(Criterion::Bic), Some(2));
        assert_eq!(table.best(Criterion::Aic), Some(1));
    }
}
