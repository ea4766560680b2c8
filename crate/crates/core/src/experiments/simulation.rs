//! Consistency (experiment 1) and robustness (experiment 2) studies on
//! simulated data.

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{meanfn_mse, param_mse, ParamErrors};
use super::derive_seed;
use crate::em::{fit, FitConfig};
use crate::error::Result;
use crate::params::{reference_params, Family};
use crate::simulate::{simulate, SimSpec};

pub const NOT_IMPLEMENTED: &str = "not implemented";

#[derive(Debug, Clone, Serialize)]
pub struct Experiment1Config {
    pub sizes: Vec<usize>,
    pub trials: usize,
    /// Generating families; each is fitted with the same family.
    pub families: Vec<Family>,
    pub fit: FitConfig,
    pub seed: u64,
}

impl Default for Experiment1Config {
    fn default() -> Self {
        Self {
            sizes: vec![50, 100, 200, 500, 1000],
            trials: 20,
            families: vec![Family::Normal, Family::Laplace, Family::StudentT],
            fit: FitConfig::default(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Experiment1Trial {
    pub family: Family,
    pub n: usize,
    pub trial: usize,
    pub sim_seed: u64,
    pub fit_seed: u64,
    pub loglik: Option<f64>,
    pub converged: bool,
    pub nu_saturated: bool,
    pub errors: Option<ParamErrors>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Experiment1Cell {
    pub family: Family,
    pub n: usize,
    pub status: String,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub names: Vec<String>,
    /// Squared errors averaged over successful trials.
    pub mse: Vec<f64>,
    /// Mean over the β entries of `mse`.
    pub beta_mse: f64,
    /// Mean over the σ entries of `mse`.
    pub sigma_mse: f64,
    pub nu_saturated_trials: usize,
}

impl Experiment1Cell {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.mse[i])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Experiment1Report {
    pub config: Experiment1Config,
    pub cells: Vec<Experiment1Cell>,
    pub trials: Vec<Experiment1Trial>,
}

impl Experiment1Report {
    pub fn cell(&self, family: Family, n: usize) -> Option<&Experiment1Cell> {
        self.cells.iter().find(|c| c.family == family && c.n == n)
    }
}

fn family_tag(f: Family) -> u64 {
    match f {
        Family::Normal => 0,
        Family::StudentT => 1,
        Family::Laplace => 2,
    }
}

fn experiment1_trial(cfg: &Experiment1Config, family: Family, n: usize, trial: usize) -> Experiment1Trial {
    let sim_seed = derive_seed(cfg.seed, &[1, family_tag(family), n as u64, trial as u64, 0]);
    let fit_seed = derive_seed(cfg.seed, &[1, family_tag(family), n as u64, trial as u64, 1]);
    let mut out = Experiment1Trial {
        family,
        n,
        trial,
        sim_seed,
        fit_seed,
        loglik: None,
        converged: false,
        nu_saturated: false,
        errors: None,
        error: None,
    };
    if family == Family::Laplace {
        out.error = Some(NOT_IMPLEMENTED.into());
        return out;
    }
    let truth = reference_params(family);
    let run = || -> Result<_> {
        let sim = simulate(&SimSpec::new(truth.clone(), n, sim_seed))?;
        let fit_cfg = FitConfig {
            rng_seed: fit_seed,
            ..cfg.fit.clone()
        };
        let res = fit(&sim.data, family, truth.k(), &fit_cfg)?;
        let errs = param_mse(&truth, &res.params)?;
        Ok((res, errs))
    };
    match run() {
        Ok((res, errs)) => {
            out.loglik = Some(res.loglik);
            out.converged = res.converged;
            out.nu_saturated = res.nu_saturated.iter().any(|&s| s);
            out.errors = Some(errs);
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Simulates from the reference parameters at each sample size, fits the
/// generating family and averages the squared parameter errors.
pub fn run_experiment1(cfg: &Experiment1Config) -> Result<Experiment1Report> {
    cfg.fit.validate()?;
    let tasks: Vec<(Family, usize, usize)> = cfg
        .families
        .iter()
        .flat_map(|&f| cfg.sizes.iter().flat_map(move |&n| (0..cfg.trials).map(move |t| (f, n, t))))
        .collect();
    let trials: Vec<Experiment1Trial> = tasks
        .par_iter()
        .map(|&(f, n, t)| experiment1_trial(cfg, f, n, t))
        .collect();

    let mut cells = Vec::new();
    for &family in &cfg.families {
        for &n in &cfg.sizes {
            let group: Vec<&Experiment1Trial> = trials.iter().filter(|t| t.family == family && t.n == n).collect();
            let ok: Vec<&ParamErrors> = group.iter().filter_map(|t| t.errors.as_ref()).collect();
            let names = ok.first().map(|e| e.names.clone()).unwrap_or_default();
            let mse: Vec<f64> = (0..names.len())
                .map(|j| mean(&ok.iter().map(|e| e.values[j]).collect::<Vec<_>>()))
                .collect();
            let pick = |prefix: &str| {
                mean(
                    &names
                        .iter()
                        .zip(&mse)
                        .filter(|(n, _)| n.starts_with(prefix))
                        .map(|(_, v)| *v)
                        .collect::<Vec<_>>(),
                )
            };
            cells.push(Experiment1Cell {
                family,
                n,
                status: if family == Family::Laplace { NOT_IMPLEMENTED.into() } else { "ok".into() },
                trials_ok: ok.len(),
                trials_failed: group.len() - ok.len(),
                beta_mse: pick("beta"),
                sigma_mse: pick("sigma"),
                names,
                mse,
                nu_saturated_trials: group.iter().filter(|t| t.nu_saturated).count(),
            });
        }
    }
    Ok(Experiment1Report {
        config: cfg.clone(),
        cells,
        trials,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Experiment2Config {
    pub n: usize,
    pub outlier_probs: Vec<f64>,
    pub trials: usize,
    pub generators: Vec<Family>,
    pub outlier_y: f64,
    pub fit: FitConfig,
    pub seed: u64,
}

impl Default for Experiment2Config {
    fn default() -> Self {
        Self {
            n: 500,
            outlier_probs: vec![0.0, 0.01, 0.02, 0.03, 0.04, 0.05],
            trials: 20,
            generators: vec![Family::Normal, Family::Laplace, Family::StudentT],
            outlier_y: -2.0,
            fit: FitConfig::default(),
            seed: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Experiment2Trial {
    pub generator: Family,
    pub outlier_prob: f64,
    pub trial: usize,
    pub sim_seed: u64,
    pub fit_seed: u64,
    pub n_outliers: usize,
    pub nmoe_mse: Option<f64>,
    pub tmoe_mse: Option<f64>,
    pub nmoe_error: Option<String>,
    pub tmoe_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Experiment2Cell {
    pub generator: Family,
    pub outlier_prob: f64,
    /// Means over trials whose fit succeeded.
    pub nmoe_mean: f64,
    pub tmoe_mean: f64,
    /// Medians with failed fits counted as +∞.
    pub nmoe_median: f64,
    pub tmoe_median: f64,
    pub nmoe_failed: usize,
    pub tmoe_failed: usize,
    /// Share of trials where the t fit's error is at most the normal fit's.
    pub tmoe_not_worse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Experiment2Report {
    pub config: Experiment2Config,
    pub cells: Vec<Experiment2Cell>,
    pub trials: Vec<Experiment2Trial>,
}

impl Experiment2Report {
    pub fn cell(&self, generator: Family, outlier_prob: f64) -> Option<&Experiment2Cell> {
        self.cells
            .iter()
            .find(|c| c.generator == generator && (c.outlier_prob - outlier_prob).abs() < 1e-12)
    }
}

fn experiment2_trial(cfg: &Experiment2Config, generator: Family, ci: usize, trial: usize) -> Experiment2Trial {
    let c = cfg.outlier_probs[ci];
    let tags = [2, family_tag(generator), ci as u64, trial as u64];
    let sim_seed = derive_seed(cfg.seed, &[tags[0], tags[1], tags[2], tags[3], 0]);
    let fit_seed = derive_seed(cfg.seed, &[tags[0], tags[1], tags[2], tags[3], 1]);
    let mut out = Experiment2Trial {
        generator,
        outlier_prob: c,
        trial,
        sim_seed,
        fit_seed,
        n_outliers: 0,
        nmoe_mse: None,
        tmoe_mse: None,
        nmoe_error: None,
        tmoe_error: None,
    };
    let truth = reference_params(generator);
    let mut spec = SimSpec::new(truth.clone(), cfg.n, sim_seed);
    spec.outlier_prob = c;
    spec.outlier_y = cfg.outlier_y;
    let sim = match simulate(&spec) {
        Ok(sim) => sim,
        Err(e) => {
            out.nmoe_error = Some(e.to_string());
            out.tmoe_error = Some(e.to_string());
            return out;
        }
    };
    out.n_outliers = sim.outlier_mask.iter().filter(|&&m| m).count();
    let fit_cfg = FitConfig {
        rng_seed: fit_seed,
        ..cfg.fit.clone()
    };
    for family in [Family::Normal, Family::StudentT] {
        let res = fit(&sim.data, family, truth.k(), &fit_cfg).and_then(|res| meanfn_mse(&truth, &res.params, &sim.data));
        let (value, error) = match res {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        if family == Family::Normal {
            out.nmoe_mse = value;
            out.nmoe_error = error;
        } else {
            out.tmoe_mse = value;
            out.tmoe_error = error;
        }
    }
    out
}

fn median_with_failures(values: &[Option<f64>]) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Simulates with outlier contamination for every generator and rate, fits
/// normal and t mixtures, and compares their mean functions with the truth.
pub fn run_experiment2(cfg: &Experiment2Config) -> Result<Experiment2Report> {
    cfg.fit.validate()?;
    let tasks: Vec<(Family, usize, usize)> = cfg
        .generators
        .iter()
        .flat_map(|&g| (0..cfg.outlier_probs.len()).flat_map(move |ci| (0..cfg.trials).map(move |t| (g, ci, t))))
        .collect();
    let trials: Vec<Experiment2Trial> = tasks
        .par_iter()
        .map(|&(g, ci, t)| experiment2_trial(cfg, g, ci, t))
        .collect();

    let mut cells = Vec::new();
    for &generator in &cfg.generators {
        for &c in &cfg.outlier_probs {
            let group: Vec<&Experiment2Trial> = trials
                .iter()
                .filter(|t| t.generator == generator && t.outlier_prob == c)
                .collect();
            let nm: Vec<Option<f64>> = group.iter().map(|t| t.nmoe_mse).collect();
            let tm: Vec<Option<f64>> = group.iter().map(|t| t.tmoe_mse).collect();
            let not_worse = group
                .iter()
                .filter(|t| match (t.tmoe_mse, t.nmoe_mse) {
                    (Some(a), Some(b)) => a <= b,
                    (Some(_), None) => true,
                    _ => false,
                })
                .count();
            cells.push(Experiment2Cell {
                generator,
                outlier_prob: c,
                nmoe_mean: mean(&nm.iter().flatten().copied().collect::<Vec<_>>()),
                tmoe_mean: mean(&tm.iter().flatten().copied().collect::<Vec<_>>()),
                nmoe_median: median_with_failures(&nm),
                tmoe_median: median_with_failures(&tm),
                nmoe_failed: nm.iter().filter(|v| v.is_none()).count(),
                tmoe_failed: tm.iter().filter(|v| v.is_none()).count(),
                tmoe_not_worse: not_worse as f64 / group.len().max(1) as f64,
            });
        }
    }
    Ok(Experiment2Report {
        config: cfg.clone(),
        cells,
        trials,
    })
}
