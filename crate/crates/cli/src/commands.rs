use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use moe_robust::em::estep;
use moe_robust::experiments::{
    default_data_dir, report, run_experiment1, run_experiment2, run_real_study, write_experiment1, write_experiment2,
    write_real_study, Experiment1Config, Experiment2Config, RealDataset, RealStudyConfig,
};
use moe_robust::io::{csv_string, fmt_f64, read_columns, read_dataset, write_atomic, DEFAULT_SCHEMA};
use moe_robust::{
    fit, map_cluster, predict_mean, predict_variance, reference_params, select, simulate, Dataset, Error, Family,
    MoEParams, SimSpec,
};
use serde_json::json;

use crate::{ClusterCmd, Command, Exp1Cmd, Exp2Cmd, FitCmd, PredictCmd, Preset, RealCmd, SelectCmd, SimulateCmd, Study};

pub enum Outcome {
    Done,
    NotConverged,
}

pub fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Fit(c) => cmd_fit(c),
        Command::Select(c) => cmd_select(c).map(|_| Outcome::Done),
        Command::Predict(c) => cmd_predict(c).map(|_| Outcome::Done),
        Command::Cluster(c) => cmd_cluster(c).map(|_| Outcome::Done),
        Command::Simulate(c) => cmd_simulate(c).map(|_| Outcome::Done),
        Command::Experiment(c) => match c.study {
            Study::Exp1(c) => cmd_exp1(c),
            Study::Exp2(c) => cmd_exp2(c),
            Study::Tone(c) => cmd_real(RealDataset::Tone, c),
            Study::Temperature(c) => cmd_real(RealDataset::Temperature, c),
        }
        .map(|_| Outcome::Done),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

/// Writes to `out`, or prints to stdout when no path is given.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_params(path: &Path) -> Result<MoEParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    MoEParams::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_data(path: &Path) -> Result<Dataset> {
    read_dataset(path).with_context(|| format!("loading {}", path.display()))
}

fn tau_header(k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("tau_{j}")).collect()
}

fn cmd_fit(c: FitCmd) -> Result<Outcome> {
    let cfg = c.fit.config(0)?;
    let data = load_data(&c.input)?;
    let family = Family::from(c.family);
    let res = fit(&data, family, c.k, &cfg)?;

    let out = &c.out;
    write_file(&out.join("params.json"), &(res.params.to_json()? + "\n"))?;
    write_file(&out.join("trace.csv"), &report::trace_csv(&res.loglik_trace)?)?;

    let tau = &res.estep_final.tau;
    let header = tau_header(c.k);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let resp = csv_string(&header, tau.row_iter().map(|row| row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>()))?;
    write_file(&out.join("responsibilities.csv"), &resp)?;
    let labels = csv_string(
        &["row", "label"],
        res.labels.iter().enumerate().map(|(i, l)| vec![(i + 1).to_string(), (l + 1).to_string()]),
    )?;
    write_file(&out.join("labels.csv"), &labels)?;

    let summary = json!({
        "family": family,
        "k": c.k,
        "n": data.n(),
        "loglik": res.loglik,
        "complete_loglik": res.complete_loglik,
        "n_free_params": res.n_free_params,
        "criteria": res.criteria,
        "n_iters": res.n_iters,
        "converged": res.converged,
        "nu_saturated": res.nu_saturated,
        "irls_warnings": res.irls_warnings,
        "best_restart": res.best_restart,
        "restarts": res.restarts,
        "config": cfg,
    });
    write_file(&out.join("report.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;

    println!(
        "{family} K={} loglik={} BIC={} iterations={} converged={}",
        c.k,
        fmt_f64(res.loglik),
        fmt_f64(res.criteria.bic),
        res.n_iters,
        res.converged
    );
    if res.converged {
        Ok(Outcome::Done)
    } else {
        eprintln!("warning: EM reached the iteration limit without converging; results were written");
        Ok(Outcome::NotConverged)
    }
}

fn cmd_select(c: SelectCmd) -> Result<()> {
    if c.k_min == 0 || c.k_min > c.k_max {
        bail!("need 1 <= k-min <= k-max, got {}..{}", c.k_min, c.k_max);
    }
    let cfg = c.fit.config(0)?;
    let data = load_data(&c.input)?;
    let table = select(&data, Family::from(c.family), c.k_min..=c.k_max, &cfg)?;
    emit(c.out.as_deref(), &report::selection_csv(&table)?)
}

fn cmd_predict(c: PredictCmd) -> Result<()> {
    let params = load_params(&c.params)?;
    let cols = read_columns(&c.input, DEFAULT_SCHEMA, false).with_context(|| format!("loading {}", c.input.display()))?;
    if params.p() != 2 || params.q() != 2 {
        bail!(
            "params expect {} expert and {} gating covariates, but CSV input gives 2 (intercept plus one column)",
            params.p(),
            params.q()
        );
    }
    let mut rows = Vec::with_capacity(cols.len());
    for i in 0..cols.len() {
        let (x, r) = (cols.x_row(i), cols.r_row(i));
        let mut row = vec![fmt_f64(x[1]), fmt_f64(r[1])];
        match predict_mean(&x, &r, &params) {
            Ok(mean) => match predict_variance(&x, &r, &params) {
                Ok(var) => {
                    let sd = var.sqrt();
                    row.extend([mean, var, mean - 2.0 * sd, mean + 2.0 * sd].map(fmt_f64));
                    row.push(String::new());
                }
                Err(Error::UndefinedMoment(_)) => {
                    row.push(fmt_f64(mean));
                    row.extend([String::new(), String::new(), String::new()]);
                    row.push("variance_undefined".into());
                }
                Err(e) => return Err(e.into()),
            },
            Err(Error::UndefinedMoment(_)) => {
                row.extend(std::iter::repeat_n(String::new(), 4));
                row.push("mean_undefined".into());
            }
            Err(e) => return Err(e.into()),
        }
        rows.push(row);
    }
    let text = csv_string(&["x", "r", "mean", "variance", "band_lo", "band_hi", "flag"], rows)?;
    emit(c.out.as_deref(), &text)
}

fn cmd_cluster(c: ClusterCmd) -> Result<()> {
    let params = load_params(&c.params)?;
    let data = load_data(&c.input)?;
    let e = estep(&data, &params)?;
    let labels = map_cluster(&e.tau)?;
    let mut header = vec!["x".to_string(), "y".to_string(), "label".to_string()];
    header.extend(tau_header(params.k()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let text = csv_string(
        &header,
        (0..data.n()).map(|i| {
            let mut row = vec![fmt_f64(data.x()[(i, 1)]), fmt_f64(data.y()[i]), (labels[i] + 1).to_string()];
            row.extend(e.tau.row(i).iter().map(|v| fmt_f64(*v)));
            row
        }),
    )?;
    emit(c.out.as_deref(), &text)
}

fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "simulated".into());
    out.with_file_name(format!("{stem}.params.json"))
}

fn cmd_simulate(c: SimulateCmd) -> Result<()> {
    let params = match (c.preset, &c.params) {
        (Some(Preset::Nmoe), _) => reference_params(Family::Normal),
        (Some(Preset::Tmoe), _) => reference_params(Family::StudentT),
        (Some(Preset::Lmoe), _) => reference_params(Family::Laplace),
        (None, Some(path)) => load_params(path)?,
        (None, None) => bail!("either --preset or --params is required"),
    };
    let spec = SimSpec {
        params,
        n: c.n,
        x_range: (c.x_min, c.x_max),
        outlier_prob: c.outlier_prob,
        outlier_y: c.outlier_y,
        seed: c.seed,
    };
    let sim = simulate(&spec)?;
    let text = csv_string(
        &["x", "y", "label", "outlier"],
        sim.labels().iter().enumerate().map(|(i, label)| {
            vec![
                fmt_f64(sim.data.x()[(i, 1)]),
                fmt_f64(sim.data.y()[i]),
                label.map(|l| (l + 1).to_string()).unwrap_or_default(),
                u8::from(sim.outlier_mask[i]).to_string(),
            ]
        }),
    )?;
    write_file(&c.out, &text)?;
    write_file(&sidecar_path(&c.out), &(spec.params.to_json()? + "\n"))?;
    Ok(())
}

fn parse_families(names: &[String]) -> Result<Vec<Family>> {
    names.iter().map(|s| s.parse::<Family>().map_err(Into::into)).collect()
}

fn cmd_exp1(c: Exp1Cmd) -> Result<()> {
    let defaults = Experiment1Config::default();
    let cfg = Experiment1Config {
        sizes: c.sizes,
        trials: c.trials,
        families: parse_families(&c.families)?,
        fit: c.fit.config(0)?,
        seed: c.fit.seed.unwrap_or(defaults.seed),
    };
    let rep = run_experiment1(&cfg)?;
    write_experiment1(&rep, &c.out)?;
    println!("wrote {}", c.out.display());
    Ok(())
}

fn cmd_exp2(c: Exp2Cmd) -> Result<()> {
    let defaults = Experiment2Config::default();
    let cfg = Experiment2Config {
        n: c.n,
        outlier_probs: c.outlier_probs,
        trials: c.trials,
        generators: parse_families(&c.generators)?,
        outlier_y: c.outlier_y,
        fit: c.fit.config(0)?,
        seed: c.fit.seed.unwrap_or(defaults.seed),
    };
    let rep = run_experiment2(&cfg)?;
    write_experiment2(&rep, &c.out)?;
    println!("wrote {}", c.out.display());
    Ok(())
}

fn cmd_real(kind: RealDataset, c: RealCmd) -> Result<()> {
    let cfg = RealStudyConfig {
        fit: c.fit.config(0)?,
        k: c.k,
        k_min: c.k_min,
        k_max: c.k_max,
    };
    let dir = c.data_dir.unwrap_or_else(default_data_dir);
    let rep = run_real_study(kind, &dir, &cfg)?;
    let out = c.out.unwrap_or_else(|| PathBuf::from(format!("{kind}-out")));
    write_real_study(&rep, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
