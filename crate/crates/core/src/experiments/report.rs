//! Report files: one CSV per table, plot-data CSVs and a JSON summary.

use std::fs;
use std::path::Path;

use serde_json::json;

use super::real::{PlotRow, RealStudyReport};
use super::simulation::{Experiment1Report, Experiment2Report};
use crate::error::Result;
use crate::io::{csv_string, fmt_f64, write_atomic};
use crate::params::MoEParams;
use crate::selection::{Criterion, SelectionTable};

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    write_atomic(&dir.join(name), text.as_bytes())
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}

/// Scalar parameters as (name, value) with σ_k = √σ²_k, in table order.
pub fn param_entries(params: &MoEParams) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let alpha = params.gating.alpha();
    for k in 0..alpha.nrows() {
        for j in 0..alpha.ncols() {
            out.push((format!("alpha{}{}", k + 1, j), alpha[(k, j)]));
        }
    }
    for (k, e) in params.experts.iter().enumerate() {
        for (j, b) in e.beta.iter().enumerate() {
            out.push((format!("beta{}{}", k + 1, j), *b));
        }
    }
    for (k, e) in params.experts.iter().enumerate() {
        out.push((format!("sigma{}", k + 1), e.sigma2.sqrt()));
    }
    for (k, e) in params.experts.iter().enumerate() {
        if let Some(nu) = e.nu {
            out.push((format!("nu{}", k + 1), nu));
        }
    }
    out
}

fn union_names<'a>(lists: impl IntoIterator<Item = &'a [String]>) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for list in lists {
        for n in list {
            if !names.contains(n) {
                names.push(n.clone());
            }
        }
    }
    names
}

fn lookup(names: &[String], values: &[f64], key: &str) -> String {
    names.iter().position(|n| n == key).map(|i| fmt_f64(values[i])).unwrap_or_default()
}

/// Criteria sweep with the best K per criterion marked.
pub fn selection_csv(table: &SelectionTable) -> Result<String> {
    let best = [
        (Criterion::Bic, "bic"),
        (Criterion::Aic, "aic"),
        (Criterion::Icl, "icl"),
    ]
    .map(|(c, name)| (table.best(c), name));
    csv_string(
        &["K", "loglik", "complete_loglik", "n_free_params", "bic", "aic", "icl", "converged", "best", "error"],
        table.rows.iter().map(|r| {
            let marks: Vec<&str> = best.iter().filter(|(k, _)| *k == Some(r.k)).map(|(_, n)| *n).collect();
            vec![
                r.k.to_string(),
                fmt_f64(r.loglik),
                fmt_f64(r.complete_loglik),
                r.n_free_params.to_string(),
                fmt_f64(r.bic),
                fmt_f64(r.aic),
                fmt_f64(r.icl),
                r.converged.to_string(),
                marks.join(";"),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

pub fn plot_csv(rows: &[PlotRow]) -> Result<String> {
    csv_string(
        &["x", "y", "true_mean", "est_mean", "band_lo", "band_hi", "cluster_label"],
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.x),
                fmt_f64(r.y),
                opt(r.true_mean),
                opt(r.est_mean),
                opt(r.band_lo),
                opt(r.band_hi),
                r.cluster_label.to_string(),
            ]
        }),
    )
}

pub fn trace_csv(trace: &[f64]) -> Result<String> {
    csv_string(
        &["iteration", "loglik"],
        trace.iter().enumerate().map(|(i, v)| vec![i.to_string(), fmt_f64(*v)]),
    )
}

/// `table2.csv` (averaged squared errors), `exp1_trials.csv`, `summary.json`.
pub fn write_experiment1(report: &Experiment1Report, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let names = union_names(report.cells.iter().map(|c| c.names.as_slice()));
    let mut header = vec!["family", "n", "status", "trials_ok", "trials_failed", "nu_saturated_trials", "beta_mse", "sigma_mse"];
    header.extend(names.iter().map(String::as_str));
    let table = csv_string(
        &header,
        report.cells.iter().map(|c| {
            let mut row = vec![
                c.family.to_string(),
                c.n.to_string(),
                c.status.clone(),
                c.trials_ok.to_string(),
                c.trials_failed.to_string(),
                c.nu_saturated_trials.to_string(),
                fmt_f64(c.beta_mse),
                fmt_f64(c.sigma_mse),
            ];
            row.extend(names.iter().map(|n| lookup(&c.names, &c.mse, n)));
            row
        }),
    )?;
    write_text(dir, "table2.csv", &table)?;

    let trial_names = union_names(report.trials.iter().filter_map(|t| t.errors.as_ref()).map(|e| e.names.as_slice()));
    let mut header = vec!["family", "n", "trial", "sim_seed", "fit_seed", "loglik", "converged", "nu_saturated", "error"];
    header.extend(trial_names.iter().map(String::as_str));
    let trials = csv_string(
        &header,
        report.trials.iter().map(|t| {
            let mut row = vec![
                t.family.to_string(),
                t.n.to_string(),
                t.trial.to_string(),
                t.sim_seed.to_string(),
                t.fit_seed.to_string(),
                opt(t.loglik),
                t.converged.to_string(),
                t.nu_saturated.to_string(),
                t.error.clone().unwrap_or_default(),
            ];
            row.extend(trial_names.iter().map(|n| {
                t.errors
                    .as_ref()
                    .map(|e| lookup(&e.names, &e.values, n))
                    .unwrap_or_default()
            }));
            row
        }),
    )?;
    write_text(dir, "exp1_trials.csv", &trials)?;
    write_json(dir, "summary.json", report)
}

/// `table3.csv` (mean-function errors), `exp2_trials.csv`, `summary.json`.
pub fn write_experiment2(report: &Experiment2Report, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let table = csv_string(
        &[
            "generator",
            "outlier_prob",
            "nmoe_mean",
            "tmoe_mean",
            "nmoe_median",
            "tmoe_median",
            "nmoe_failed",
            "tmoe_failed",
            "tmoe_not_worse",
        ],
        report.cells.iter().map(|c| {
            vec![
                c.generator.to_string(),
                fmt_f64(c.outlier_prob),
                fmt_f64(c.nmoe_mean),
                fmt_f64(c.tmoe_mean),
                fmt_f64(c.nmoe_median),
                fmt_f64(c.tmoe_median),
                c.nmoe_failed.to_string(),
                c.tmoe_failed.to_string(),
                fmt_f64(c.tmoe_not_worse),
            ]
        }),
    )?;
    write_text(dir, "table3.csv", &table)?;
    let trials = csv_string(
        &[
            "generator",
            "outlier_prob",
            "trial",
            "sim_seed",
            "fit_seed",
            "n_outliers",
            "nmoe_mse",
            "tmoe_mse",
            "nmoe_error",
            "tmoe_error",
        ],
        report.trials.iter().map(|t| {
            vec![
                t.generator.to_string(),
                fmt_f64(t.outlier_prob),
                t.trial.to_string(),
                t.sim_seed.to_string(),
                t.fit_seed.to_string(),
                t.n_outliers.to_string(),
                opt(t.nmoe_mse),
                opt(t.tmoe_mse),
                t.nmoe_error.clone().unwrap_or_default(),
                t.tmoe_error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    write_text(dir, "exp2_trials.csv", &trials)?;
    write_json(dir, "summary.json", report)
}

/// Parameter table, criteria sweeps, plot data, traces and per-fit
/// parameter documents for a real-data study.
pub fn write_real_study(report: &RealStudyReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let entries: Vec<Vec<(String, f64)>> = report.fits.iter().map(|f| param_entries(&f.result.params)).collect();
    let name_lists: Vec<Vec<String>> = entries.iter().map(|e| e.iter().map(|(n, _)| n.clone()).collect()).collect();
    let names = union_names(name_lists.iter().map(Vec::as_slice));
    let mut header = vec!["model", "variant", "loglik", "converged"];
    header.extend(names.iter().map(String::as_str));
    let table = csv_string(
        &header,
        report.fits.iter().zip(&entries).map(|(f, e)| {
            let (ns, vs): (Vec<String>, Vec<f64>) = e.iter().cloned().unzip();
            let mut row = vec![
                f.family.to_string(),
                f.variant.to_string(),
                fmt_f64(f.result.loglik),
                f.result.converged.to_string(),
            ];
            row.extend(names.iter().map(|n| lookup(&ns, &vs, n)));
            row
        }),
    )?;
    write_text(dir, "estimates.csv", &table)?;

    for f in &report.fits {
        let stem = format!("{}_{}", f.family.as_str().to_ascii_lowercase(), f.variant);
        write_text(dir, &format!("params_{stem}.json"), &(f.result.params.to_json()? + "\n"))?;
        write_text(dir, &format!("plot_{stem}.csv"), &plot_csv(&f.plot)?)?;
        write_text(dir, &format!("trace_{stem}.csv"), &trace_csv(&f.result.loglik_trace)?)?;
    }
    for s in &report.selections {
        let name = format!("selection_{}.csv", s.family.as_str().to_ascii_lowercase());
        write_text(dir, &name, &selection_csv(&s.table)?)?;
    }

    let summary = json!({
        "dataset": report.dataset,
        "n": report.n,
        "config": report.config,
        "fits": report.fits.iter().map(|f| json!({
            "family": f.family,
            "variant": f.variant,
            "params": f.result.params.to_json_value(),
            "loglik": f.result.loglik,
            "complete_loglik": f.result.complete_loglik,
            "n_free_params": f.result.n_free_params,
            "criteria": f.result.criteria,
            "n_iters": f.result.n_iters,
            "converged": f.result.converged,
            "nu_saturated": f.result.nu_saturated,
            "best_restart": f.result.best_restart,
            "restarts": f.result.restarts,
        })).collect::<Vec<_>>(),
        "selection": report.selections.iter().map(|s| json!({
            "family": s.family,
            "best_bic": s.table.best(Criterion::Bic),
            "best_aic": s.table.best(Criterion::Aic),
            "best_icl": s.table.best(Criterion::Icl),
            "rows": s.table.rows,
        })).collect::<Vec<_>>(),
    });
    write_json(dir, "summary.json", &summary)
}
