//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! By default the run reports and exits 0 so that the workspace test suite
//! stays usable while some criteria cannot be met (for instance when the
//! study datasets are absent). Set `MOE_ROBUST_ACCEPTANCE_STRICT=1` to turn
//! any FAIL into a non-zero exit.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use moe_robust::densities::{digamma, ln_gamma, t_logpdf, TParams};
use moe_robust::em::{dof_constant, dof_equation, estep, gating_gradient, gating_objective, initial_params, solve_dof, DofStatus};
use moe_robust::experiments::{
    align_to, default_data_dir, load_real_dataset, run_experiment1, run_experiment2, with_tone_outliers,
    Experiment1Config, Experiment2Config, RealDataset,
};
use moe_robust::selection::Criterion;
use moe_robust::{
    fit, fit_from, gate_probs, loglik, reference_params, select, simulate, Dataset, ExpertParams, Family, FitConfig,
    GatingParams, MoEParams, SimSpec,
};
use statrs::distribution::{Continuous, Normal, StudentsT};

type Check = Result<(bool, String), String>;

struct Runner {
    failures: Vec<usize>,
}

impl Runner {
    fn run(&mut self, id: usize, title: &str, budget: Duration, check: impl FnOnce() -> Check) {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok((pass, detail)) if elapsed <= budget => (pass, detail),
            Ok((_, detail)) => (false, format!("{detail}; over the {budget:?} budget")),
            Err(e) => (false, e),
        };
        if !pass {
            self.failures.push(id);
        }
        println!(
            "criterion {id:>2} {}: {title}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn as_student(params: &MoEParams, nu: f64) -> MoEParams {
    let experts = params
        .experts
        .iter()
        .map(|e| ExpertParams::student_t(e.beta.as_slice().to_vec(), e.sigma2, nu))
        .collect();
    MoEParams::new(Family::StudentT, params.gating.clone(), experts).unwrap()
}

fn monotone_em() -> Check {
    let mut worst = 0.0f64;
    let mut fits = 0;
    let mut failed = Vec::new();
    for family in [Family::Normal, Family::StudentT] {
        for seed in 0..100u64 {
            let data = simulate(&SimSpec::new(reference_params(family), 60, seed)).map_err(err)?.data;
            let cfg = FitConfig {
                rng_seed: seed,
                ..Default::default()
            };
            match fit(&data, family, 2, &cfg) {
                Ok(res) => {
                    fits += 1;
                    for w in res.loglik_trace.windows(2) {
                        worst = worst.max(w[0] - w[1]);
                    }
                }
                Err(e) => failed.push(format!("{family} seed {seed}: {e}")),
            }
        }
    }
    let pass = worst <= 1e-8 && failed.is_empty();
    Ok((pass, format!("{fits} fits, largest decrease {worst:.2e}, {} failed fits {failed:?}", failed.len())))
}

fn normal_limit() -> Check {
    let data = simulate(&SimSpec::new(reference_params(Family::Normal), 300, 17)).map_err(err)?.data;
    let cfg = FitConfig {
        n_restarts: 1,
        ..Default::default()
    };
    let init = initial_params(&data, Family::Normal, 2, &cfg, 0).map_err(err)?;
    let a = fit_from(&data, &init, &cfg).map_err(err)?;
    let pinned = FitConfig {
        nu_bracket: (1e8, 1e8),
        nu_init_range: (1e8, 1e8),
        ..cfg
    };
    let b = fit_from(&data, &as_student(&init, 1e8), &pinned).map_err(err)?;
    let mut gap = (a.params.gating.alpha() - b.params.gating.alpha()).amax();
    for (ea, eb) in a.params.experts.iter().zip(&b.params.experts) {
        gap = gap.max((&ea.beta - &eb.beta).amax()).max((ea.sigma2 - eb.sigma2).abs());
    }
    let ll_gap = (a.loglik - b.loglik).abs();
    Ok((gap <= 1e-4 && ll_gap <= 1e-6, format!("parameter gap {gap:.2e}, loglik gap {ll_gap:.2e}")))
}

fn consistency_trend() -> Check {
    let cfg = Experiment1Config {
        sizes: vec![50, 500, 1000],
        families: vec![Family::StudentT],
        ..Default::default()
    };
    let report = run_experiment1(&cfg).map_err(err)?;
    let cell = |n| report.cell(Family::StudentT, n).ok_or(format!("no cell for n={n}"));
    let (small, mid, large) = (cell(50)?, cell(500)?, cell(1000)?);
    let beta_ratio = small.beta_mse / large.beta_mse;
    let sigma_ratio = small.sigma_mse / large.sigma_mse;
    let b10 = mid.get("beta10").ok_or("no beta10 entry")?;
    let pass = beta_ratio >= 5.0 && sigma_ratio >= 5.0 && b10 <= 1e-3;
    Ok((
        pass,
        format!(
            "beta MSE {:.3e} -> {:.3e} (x{beta_ratio:.1}), sigma MSE {:.3e} -> {:.3e} (x{sigma_ratio:.1}), beta10 MSE at n=500 {b10:.3e}, failed trials {}",
            small.beta_mse,
            large.beta_mse,
            small.sigma_mse,
            large.sigma_mse,
            small.trials_failed + mid.trials_failed + large.trials_failed
        ),
    ))
}

fn robustness() -> Check {
    let cfg = Experiment2Config {
        outlier_probs: vec![0.05],
        generators: vec![Family::Normal],
        ..Default::default()
    };
    let report = run_experiment2(&cfg).map_err(err)?;
    let c = report.cell(Family::Normal, 0.05).ok_or("missing cell")?;
    let ratio = c.nmoe_median / c.tmoe_median;
    let pass = c.tmoe_median <= 1e-3 && c.nmoe_median >= 5e-3 && ratio >= 5.0;
    Ok((
        pass,
        format!(
            "median meanfn MSE TMoE {:.3e}, NMoE {:.3e}, ratio {ratio:.1}; failed fits TMoE {} NMoE {} (counted as +inf)",
            c.tmoe_median, c.nmoe_median, c.tmoe_failed, c.nmoe_failed
        ),
    ))
}

fn study_data(kind: RealDataset) -> Result<Dataset, String> {
    load_real_dataset(kind, &default_data_dir()).map_err(|e| format!("{e} (set MOE_ROBUST_DATA_DIR)"))
}

fn closest_expert(params: &MoEParams, target: [f64; 2]) -> &ExpertParams {
    params
        .experts
        .iter()
        .min_by(|a, b| {
            let d = |e: &ExpertParams| (e.beta[0] - target[0]).powi(2) + (e.beta[1] - target[1]).powi(2);
            d(a).total_cmp(&d(b))
        })
        .expect("K >= 1")
}

fn tone_golden() -> Check {
    let data = study_data(RealDataset::Tone)?;
    let res = fit(&data, Family::StudentT, 2, &FitConfig::default()).map_err(err)?;
    let e = closest_expert(&res.params, [1.956, 0.027]);
    let nu = e.nu.unwrap_or(f64::INFINITY);
    let pass = (e.beta[0] - 1.956).abs() <= 0.05 && (e.beta[1] - 0.027).abs() <= 0.05 && nu < 5.0;
    Ok((pass, format!("beta = ({:.4}, {:.4}), nu = {nu:.3}, loglik {:.4}", e.beta[0], e.beta[1], res.loglik)))
}

fn max_line_shift(clean: &MoEParams, noisy: &MoEParams) -> Result<f64, String> {
    let aligned = align_to(clean, noisy).map_err(err)?;
    Ok(clean
        .experts
        .iter()
        .zip(&aligned.experts)
        .map(|(a, b)| (&a.beta - &b.beta).amax())
        .fold(0.0, f64::max))
}

fn tone_outliers() -> Check {
    let data = study_data(RealDataset::Tone)?;
    let noisy = with_tone_outliers(&data).map_err(err)?;
    let cfg = FitConfig::default();
    let shift = |family| -> Result<f64, String> {
        let a = fit(&data, family, 2, &cfg).map_err(err)?;
        let b = fit(&noisy, family, 2, &cfg).map_err(err)?;
        max_line_shift(&a.params, &b.params)
    };
    let (t, n) = (shift(Family::StudentT)?, shift(Family::Normal)?);
    Ok((t <= 0.05 && n >= 0.2, format!("largest coefficient change TMoE {t:.4}, NMoE {n:.4}")))
}

fn temperature() -> Check {
    let data = study_data(RealDataset::Temperature)?;
    let res = fit(&data, Family::StudentT, 2, &FitConfig::default()).map_err(err)?;
    let mut slopes: Vec<f64> = res.params.experts.iter().map(|e| e.beta[1]).collect();
    slopes.sort_by(f64::total_cmp);
    let nus: Vec<f64> = res.params.experts.iter().filter_map(|e| e.nu).collect();
    let pass = (slopes[0] - 0.006).abs() <= 0.002 && (slopes[1] - 0.020).abs() <= 0.002 && nus.iter().all(|&v| v > 20.0);
    Ok((pass, format!("slopes {slopes:?}, nu {nus:?}")))
}

fn model_selection() -> Check {
    let mut notes = Vec::new();
    let mut pass = true;
    for (kind, target) in [(RealDataset::Tone, 204.8241), (RealDataset::Temperature, 74.7960)] {
        let data = study_data(kind)?;
        let table = select(&data, Family::StudentT, 1..=5, &FitConfig::default()).map_err(err)?;
        let best = table.best(Criterion::Bic);
        let bic2 = table.row(2).map(|r| r.bic).unwrap_or(f64::NAN);
        pass &= best == Some(2) && (bic2 - target).abs() <= 2.0;
        notes.push(format!("{kind}: best K {best:?}, BIC(2) {bic2:.4} vs {target}"));
    }
    Ok((pass, notes.join("; ")))
}

fn brute_force_loglik(data: &Dataset, params: &MoEParams) -> f64 {
    (0..data.n())
        .map(|i| {
            let x = data.x_row(i);
            let pi = gate_probs(&data.r_row(i), &params.gating).unwrap();
            let y = data.y()[i];
            params
                .experts
                .iter()
                .zip(&pi)
                .map(|(e, p)| {
                    let mu = e.beta[0] * x[0] + e.beta[1] * x[1];
                    let sd = e.sigma2.sqrt();
                    p * match e.nu {
                        Some(nu) => StudentsT::new(mu, sd, nu).unwrap().pdf(y),
                        None => Normal::new(mu, sd).unwrap().pdf(y),
                    }
                })
                .sum::<f64>()
                .ln()
        })
        .sum()
}

fn numerical_kernels() -> Check {
    let mut notes = Vec::new();
    let mut pass = true;

    let mut worst = 0.0f64;
    for x in [0.05, 0.1, 0.5, 1.0, 2.5, 7.0, 20.0, 100.0, 1e4] {
        let h = 1e-5 * f64::max(1.0, x);
        let fd = (ln_gamma(x + h).map_err(err)? - ln_gamma(x - h).map_err(err)?) / (2.0 * h);
        let psi = digamma(x).map_err(err)?;
        worst = worst.max((psi - fd).abs() / psi.abs().max(1.0));
    }
    pass &= worst <= 1e-6;
    notes.push(format!("digamma {worst:.1e}"));

    // y = μ + σ tan θ maps the real line onto (-π/2, π/2); midpoint rule
    let mut worst = 0.0f64;
    for nu in [1.0, 1.5, 3.0, 5.0, 30.0, 200.0] {
        let p = TParams::new(0.3, 2.0, nu).map_err(err)?;
        let m = 400_000;
        let h = std::f64::consts::PI / m as f64;
        let mut total = 0.0;
        for j in 0..m {
            let theta = -std::f64::consts::FRAC_PI_2 + (j as f64 + 0.5) * h;
            let y = 0.3 + 2f64.sqrt() * theta.tan();
            total += t_logpdf(y, &p).map_err(err)?.exp() * 2f64.sqrt() / theta.cos().powi(2);
        }
        worst = worst.max((total * h - 1.0).abs());
    }
    pass &= worst <= 1e-6;
    notes.push(format!("t normalisation {worst:.1e}"));

    let truth = reference_params(Family::StudentT);
    let data = simulate(&SimSpec::new(truth.clone(), 200, 3)).map_err(err)?.data;
    let tau = estep(&data, &truth).map_err(err)?.tau;
    let mut worst = 0.0f64;
    for alpha in [[0.0, 0.0], [0.7, -2.0], [-1.5, 12.0]] {
        let g = GatingParams::from_rows(&[alpha.to_vec()], 2).map_err(err)?;
        let grad = gating_gradient(&tau, data.r(), &g).map_err(err)?;
        for j in 0..2 {
            let h = 1e-6;
            let shifted = |d: f64| {
                let mut a = alpha;
                a[j] += d;
                gating_objective(&tau, data.r(), &GatingParams::from_rows(&[a.to_vec()], 2).unwrap()).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            worst = worst.max((grad[(0, j)] - fd).abs() / grad[(0, j)].abs().max(1.0));
        }
    }
    pass &= worst <= 1e-5;
    notes.push(format!("Q1 gradient {worst:.1e}"));

    let mut worst = 0.0f64;
    let mut roots = 0;
    for seed in 0..20u64 {
        let data = simulate(&SimSpec::new(truth.clone(), 150, seed)).map_err(err)?.data;
        let probe = as_student(&truth, 2.0 + seed as f64);
        let e = estep(&data, &probe).map_err(err)?;
        let (w, e1) = (e.w.unwrap(), e.e1.unwrap());
        for k in 0..2 {
            let (t, w, e1) = (e.tau.column(k), w.column(k), e1.column(k));
            let sol = solve_dof(t.as_slice(), w.as_slice(), e1.as_slice(), (0.1, 200.0)).map_err(err)?;
            if sol.status == DofStatus::Root {
                roots += 1;
                let c = dof_constant(t.as_slice(), w.as_slice(), e1.as_slice()).map_err(err)?;
                worst = worst.max(dof_equation(sol.nu, c).map_err(err)?.abs());
            }
        }
    }
    pass &= worst <= 1e-8 && roots > 0;
    notes.push(format!("dof residual {worst:.1e} over {roots} roots"));

    let mut worst = 0.0f64;
    for (seed, family) in (0..40u64).zip([Family::Normal, Family::StudentT].into_iter().cycle()) {
        let params = reference_params(family);
        let data = simulate(&SimSpec::new(params.clone(), 1 + (seed as usize % 20), seed)).map_err(err)?.data;
        worst = worst.max((loglik(&data, &params).map_err(err)? - brute_force_loglik(&data, &params)).abs());
    }
    pass &= worst <= 1e-10;
    notes.push(format!("loglik vs brute force {worst:.1e}"));

    Ok((pass, notes.join(", ")))
}

fn cli(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_moe-robust"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(err)?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Check {
    let commands: [&[&str]; 8] = [
        &["simulate", "--preset", "table1-tmoe", "-n", "300", "--seed", "5", "--outlier-prob", "0.03", "-o", "sim.csv"],
        &["fit", "sim.csv", "--family", "tmoe", "-k", "2", "--seed", "9", "-o", "fit"],
        &["fit", "sim.csv", "--family", "nmoe", "-k", "2", "--algorithm", "ecm", "--seed", "9", "-o", "fit_n"],
        &["predict", "--params", "fit/params.json", "sim.csv", "-o", "pred.csv"],
        &["cluster", "--params", "fit/params.json", "sim.csv", "-o", "clusters.csv"],
        &["select", "sim.csv", "--family", "tmoe", "--k-max", "3", "--restarts", "3", "-o", "sel.csv"],
        &["experiment", "exp1", "--sizes", "60,120", "--trials", "2", "--restarts", "2", "-o", "exp1"],
        &["experiment", "exp2", "-n", "120", "--outlier-probs", "0,0.05", "--trials", "2", "--restarts", "2", "-o", "exp2"],
    ];
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        fs::create_dir(&dir).map_err(err)?;
        let mut stdout = Vec::new();
        for args in commands {
            stdout.push(cli(&dir, args)?);
        }
        runs.push((tree_bytes(&dir), stdout));
    }
    let files = runs[0].0.len();
    let differing: Vec<&str> = runs[0]
        .0
        .iter()
        .zip(&runs[1].0)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    let same = runs[0] == runs[1];
    Ok((same, format!("{} commands, {files} output files compared, differing: {differing:?}", commands.len())))
}

fn main() {
    // `cargo test` passes harness flags; a name filter that does not match
    // "acceptance" skips the run.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }
    let strict = std::env::var("MOE_ROBUST_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let minute = Duration::from_secs(60);
    let mut r = Runner { failures: Vec::new() };
    r.run(1, "monotone EM on 200 small fits", minute, monotone_em);
    r.run(2, "pinned-nu TMoE equals NMoE", minute, normal_limit);
    r.run(3, "consistency trend, TMoE data, 20 trials", 10 * minute, consistency_trend);
    r.run(4, "robustness at 5% outliers, 20 trials", 10 * minute, robustness);
    r.run(5, "tone data TMoE K=2 reference fit", minute, tone_golden);
    r.run(6, "tone data stability under ten outliers", minute, tone_outliers);
    r.run(7, "temperature data TMoE K=2 fit", minute, temperature);
    r.run(8, "BIC selects K=2 on both datasets", 5 * minute, model_selection);
    r.run(9, "numerical kernels", minute, numerical_kernels);
    r.run(10, "byte-identical reruns of CLI commands", 5 * minute, determinism);
    println!("acceptance: {}/10 criteria pass; failing: {:?}", 10 - r.failures.len(), r.failures);
    if strict && !r.failures.is_empty() {
        std::process::exit(1);
    }
}
