//! Maximum-likelihood fitting by EM and ECM.
//!
//! One iteration runs the E-step, then the gating update (IRLS), the expert
//! regressions and, for t experts, the degrees-of-freedom solve. ECM inserts a
//! refreshed E-step before the degrees-of-freedom solve.

mod dof;
mod estep;
mod init;
mod irls;
mod mstep;

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;

pub use dof::{dof_constant, dof_equation, solve_dof, DofSolution, DofStatus, DOF_RESIDUAL_TOL};
pub use estep::{estep, estep_nmoe, estep_tmoe, EStepQuantities};
pub use init::initial_params;
pub use irls::{gating_gradient, gating_objective, irls_gating, IrlsOutcome};
pub use mstep::{mstep_experts_nmoe, mstep_experts_tmoe, ExpertUpdate};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::map_cluster;
use crate::params::{canonical_order, ExpertParams, Family, MoEParams};
use crate::selection::{complete_loglik, criteria, free_params, Criteria};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Em,
    Ecm,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(Algorithm::Em),
            "ecm" => Ok(Algorithm::Ecm),
            other => Err(Error::Config(format!("unknown algorithm '{other}' (expected em or ecm)"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Em => "em",
            Algorithm::Ecm => "ecm",
        })
    }
}

/// Divisor of the t-expert scale update: Σ τ (standard) or Σ τ w.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaUpdate {
    Standard,
    ModifiedDivisor,
}

impl FromStr for SigmaUpdate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "standard" => Ok(SigmaUpdate::Standard),
            "modified" | "modified_divisor" => Ok(SigmaUpdate::ModifiedDivisor),
            other => Err(Error::Config(format!(
                "unknown sigma update '{other}' (expected standard or modified-divisor)"
            ))),
        }
    }
}

impl fmt::Display for SigmaUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigmaUpdate::Standard => "standard",
            SigmaUpdate::ModifiedDivisor => "modified-divisor",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitConfig {
    pub max_em_iters: usize,
    /// Threshold on the relative change of the log-likelihood.
    pub tol: f64,
    pub n_restarts: usize,
    pub algorithm: Algorithm,
    pub sigma_update: SigmaUpdate,
    pub irls_max_iters: usize,
    pub irls_tol: f64,
    pub nu_bracket: (f64, f64),
    pub nu_init_range: (f64, f64),
    pub min_sigma2: f64,
    pub rng_seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_em_iters: 1500,
            tol: 1e-6,
            n_restarts: 10,
            algorithm: Algorithm::Em,
            sigma_update: SigmaUpdate::Standard,
            irls_max_iters: 50,
            irls_tol: 1e-8,
            nu_bracket: (0.1, 200.0),
            nu_init_range: (1.0, 200.0),
            min_sigma2: 1e-10,
            rng_seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.n_restarts == 0 {
            return bad("n_restarts must be at least 1".into());
        }
        if self.max_em_iters == 0 {
            return bad("max_em_iters must be at least 1".into());
        }
        if !(self.irls_tol > 0.0) {
            return bad(format!("irls_tol must be positive, got {}", self.irls_tol));
        }
        let (lo, hi) = self.nu_bracket;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("nu bracket [{lo}, {hi}] must satisfy 0 < lo <= hi < inf"));
        }
        let (lo, hi) = self.nu_init_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("nu init range [{lo}, {hi}] must satisfy 0 < lo <= hi < inf"));
        }
        if !(self.min_sigma2 > 0.0) {
            return bad(format!("min_sigma2 must be positive, got {}", self.min_sigma2));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub loglik: Option<f64>,
    pub n_iters: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Estimates in canonical component order.
    pub params: MoEParams,
    pub loglik_trace: Vec<f64>,
    pub n_iters: usize,
    pub converged: bool,
    /// E-step at `params`.
    pub estep_final: EStepQuantities,
    pub loglik: f64,
    pub complete_loglik: f64,
    pub n_free_params: usize,
    pub criteria: Criteria,
    /// MAP labels (0-based) at `params`.
    pub labels: Vec<usize>,
    /// Per expert: ν ended on an end of `nu_bracket`.
    pub nu_saturated: Vec<bool>,
    /// Gating updates that hit a singular Hessian.
    pub irls_warnings: usize,
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary>,
}

struct Run {
    params: MoEParams,
    trace: Vec<f64>,
    n_iters: usize,
    converged: bool,
    irls_warnings: usize,
}

fn check_masses(es: &EStepQuantities) -> Result<()> {
    let (n, k) = es.tau.shape();
    let threshold = k as f64 * 1e-6 * n as f64;
    for (component, mass) in es.masses().into_iter().enumerate() {
        if !(mass >= threshold) {
            return Err(Error::DegenerateComponent { component, mass });
        }
    }
    Ok(())
}

fn has_converged(prev: f64, current: f64, tol: f64) -> bool {
    let change = (current - prev).abs();
    if prev.abs() < 1e-12 {
        change < 1e-12
    } else {
        change / prev.abs() < tol
    }
}

fn run_em(data: &Dataset, init: MoEParams, cfg: &FitConfig) -> Result<Run> {
    let family = init.family;
    let mut params = init;
    let mut es = estep(data, &params)?;
    check_masses(&es)?;
    let mut trace = vec![es.loglik];
    let mut converged = false;
    let mut irls_warnings = 0;
    let mut n_iters = 0;

    while n_iters < cfg.max_em_iters {
        n_iters += 1;

        let gate = irls_gating(&es.tau, data, &params.gating, cfg)?;
        if gate.hessian_failure {
            irls_warnings += 1;
        }
        let updates = match family {
            Family::Normal => mstep_experts_nmoe(data, &es.tau, cfg)?,
            Family::StudentT => mstep_experts_tmoe(data, &es.tau, es.w.as_ref().expect("t E-step"), cfg)?,
            Family::Laplace => return Err(Error::UnsupportedFamily(family)),
        };
        let experts = updates
            .into_iter()
            .zip(&params.experts)
            .map(|(u, old)| ExpertParams {
                beta: u.beta,
                sigma2: u.sigma2,
                nu: old.nu,
                lambda: None,
            })
            .collect();
        let mut next = MoEParams::new(family, gate.gating, experts)?;

        if family == Family::StudentT {
            let refreshed;
            let source = match cfg.algorithm {
                Algorithm::Em => &es,
                Algorithm::Ecm => {
                    refreshed = estep(data, &next)?;
                    &refreshed
                }
            };
            let (w, e1) = (source.w.as_ref().expect("t E-step"), source.e1.as_ref().expect("t E-step"));
            for (k, expert) in next.experts.iter_mut().enumerate() {
                let sol = solve_dof(
                    source.tau.column(k).as_slice(),
                    w.column(k).as_slice(),
                    e1.column(k).as_slice(),
                    cfg.nu_bracket,
                )?;
                expert.nu = Some(sol.nu);
            }
        }

        es = estep(data, &next)?;
        check_masses(&es)?;
        params = next;
        let prev = *trace.last().expect("non-empty trace");
        trace.push(es.loglik);
        if has_converged(prev, es.loglik, cfg.tol) {
            converged = true;
            break;
        }
    }

    Ok(Run {
        params,
        trace,
        n_iters,
        converged,
        irls_warnings,
    })
}

fn finish(data: &Dataset, run: Run, cfg: &FitConfig, best_restart: usize, restarts: Vec<RestartSummary>) -> Result<FitResult> {
    let params = canonical_order(&run.params);
    let es = estep(data, &params)?;
    let labels = map_cluster(&es.tau)?;
    let complete = complete_loglik(&es.log_joint, &labels);
    let eta = free_params(params.family, params.k(), params.p(), params.q())?;
    let (lo, hi) = cfg.nu_bracket;
    let nu_saturated = params
        .experts
        .iter()
        .map(|e| e.nu.is_some_and(|nu| lo < hi && (nu == lo || nu == hi)))
        .collect();
    Ok(FitResult {
        loglik: es.loglik,
        complete_loglik: complete,
        n_free_params: eta,
        criteria: criteria(es.loglik, complete, eta, data.n()),
        labels,
        nu_saturated,
        irls_warnings: run.irls_warnings,
        loglik_trace: run.trace,
        n_iters: run.n_iters,
        converged: run.converged,
        estep_final: es,
        params,
        best_restart,
        restarts,
    })
}

fn check_request(data: &Dataset, family: Family, k: usize, cfg: &FitConfig) -> Result<()> {
    cfg.validate()?;
    if family == Family::Laplace {
        return Err(Error::UnsupportedFamily(family));
    }
    let eta = free_params(family, k, data.p(), data.q())?;
    if data.n() <= eta {
        warn!("n = {} does not exceed the {eta} free parameters of a {family} model with K = {k}", data.n());
    }
    Ok(())
}

/// Fits a `k`-expert model of `family` with `cfg.n_restarts` random
/// initialisations and keeps the run with the highest final log-likelihood
/// (ties go to the earliest restart).
pub fn fit(data: &Dataset, family: Family, k: usize, cfg: &FitConfig) -> Result<FitResult> {
    check_request(data, family, k, cfg)?;
    let runs: Vec<Result<Run>> = (0..cfg.n_restarts)
        .into_par_iter()
        .map(|r| initial_params(data, family, k, cfg, r).and_then(|init| run_em(data, init, cfg)))
        .collect();

    let mut summaries = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, f64)> = None;
    for (r, run) in runs.iter().enumerate() {
        let summary = match run {
            Ok(run) => {
                let ll = *run.trace.last().expect("non-empty trace");
                if ll.is_finite() && best.is_none_or(|(_, b)| ll > b) {
                    best = Some((r, ll));
                }
                RestartSummary {
                    restart: r,
                    loglik: Some(ll),
                    n_iters: run.n_iters,
                    converged: run.converged,
                    error: None,
                }
            }
            Err(e) => {
                debug!("restart {r} abandoned: {e}");
                RestartSummary {
                    restart: r,
                    loglik: None,
                    n_iters: 0,
                    converged: false,
                    error: Some(e.to_string()),
                }
            }
        };
        summaries.push(summary);
    }

    let Some((best_restart, _)) = best else {
        return Err(Error::FitFailed {
            restarts: cfg.n_restarts,
            diagnostics: summaries
                .iter()
                .map(|s| format!("restart {}: {}", s.restart, s.error.as_deref().unwrap_or("non-finite log-likelihood")))
                .collect(),
        });
    };
    let run = runs.into_iter().nth(best_restart).expect("index in range")?;
    finish(data, run, cfg, best_restart, summaries)
}

/// A single EM/ECM run from the given starting parameters.
pub fn fit_from(data: &Dataset, init: &MoEParams, cfg: &FitConfig) -> Result<FitResult> {
    check_request(data, init.family, init.k(), cfg)?;
    let run = run_em(data, init.clone(), cfg)?;
    let summary = RestartSummary {
        restart: 0,
        loglik: run.trace.last().copied(),
        n_iters: run.n_iters,
        converged: run.converged,
        error: None,
    };
    finish(data, run, cfg, 0, vec![summary])
}
