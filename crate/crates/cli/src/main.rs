use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use moe_robust::{Algorithm, Family, FitConfig, SigmaUpdate};

mod commands;

/// Robust mixture-of-experts regression with normal and Student-t experts.
#[derive(Debug, Parser)]
#[command(name = "moe-robust", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a CSV dataset with columns x, y and optional r.
    Fit(FitCmd),
    /// Fit a range of K and tabulate log-likelihood, AIC, BIC and ICL.
    Select(SelectCmd),
    /// Conditional mean, variance and ±2 sd bands from a params file.
    Predict(PredictCmd),
    /// MAP cluster labels for a dataset under a params file.
    Cluster(ClusterCmd),
    /// Draw a dataset from a parameter preset or params file.
    Simulate(SimulateCmd),
    /// Reproduce one of the studies into a report directory.
    Experiment(ExperimentCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FitFamily {
    Nmoe,
    Tmoe,
}

impl From<FitFamily> for Family {
    fn from(f: FitFamily) -> Family {
        match f {
            FitFamily::Nmoe => Family::Normal,
            FitFamily::Tmoe => Family::StudentT,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Em,
    Ecm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SigmaArg {
    Standard,
    Modified,
}

/// Estimation settings shared by every command that fits.
#[derive(Debug, Clone, Args)]
struct FitFlags {
    #[arg(long, default_value_t = 1500)]
    max_em_iters: usize,
    /// Relative log-likelihood change that stops EM.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Em)]
    algorithm: AlgorithmArg,
    /// σ² divisor for Student-t experts: Σ τ (standard) or Σ τ·w (modified).
    #[arg(long, value_enum, default_value_t = SigmaArg::Standard)]
    sigma_update: SigmaArg,
    #[arg(long, default_value_t = 50)]
    irls_max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    irls_tol: f64,
    #[arg(long, default_value_t = 0.1)]
    nu_min: f64,
    #[arg(long, default_value_t = 200.0)]
    nu_max: f64,
    #[arg(long, default_value_t = 1.0)]
    nu_init_min: f64,
    #[arg(long, default_value_t = 200.0)]
    nu_init_max: f64,
    #[arg(long, default_value_t = 1e-10)]
    min_sigma2: f64,
    /// Seed for all randomness (restarts, simulation, trials).
    #[arg(long)]
    seed: Option<u64>,
}

impl FitFlags {
    fn config(&self, default_seed: u64) -> anyhow::Result<FitConfig> {
        let cfg = FitConfig {
            max_em_iters: self.max_em_iters,
            tol: self.tol,
            n_restarts: self.restarts,
            algorithm: match self.algorithm {
                AlgorithmArg::Em => Algorithm::Em,
                AlgorithmArg::Ecm => Algorithm::Ecm,
            },
            sigma_update: match self.sigma_update {
                SigmaArg::Standard => SigmaUpdate::Standard,
                SigmaArg::Modified => SigmaUpdate::ModifiedDivisor,
            },
            irls_max_iters: self.irls_max_iters,
            irls_tol: self.irls_tol,
            nu_bracket: (self.nu_min, self.nu_max),
            nu_init_range: (self.nu_init_min, self.nu_init_max),
            min_sigma2: self.min_sigma2,
            rng_seed: self.seed.unwrap_or(default_seed),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct FitCmd {
    /// Input CSV.
    input: PathBuf,
    #[arg(long, value_enum)]
    family: FitFamily,
    #[arg(long, short)]
    k: usize,
    /// Output directory.
    #[arg(long, short, default_value = "fit-out")]
    out: PathBuf,
    #[command(flatten)]
    fit: FitFlags,
}

#[derive(Debug, Args)]
struct SelectCmd {
    input: PathBuf,
    #[arg(long, value_enum)]
    family: FitFamily,
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long, default_value_t = 5)]
    k_max: usize,
    /// Output CSV; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    fit: FitFlags,
}

#[derive(Debug, Args)]
struct PredictCmd {
    /// Params JSON written by `fit` or `simulate`.
    #[arg(long)]
    params: PathBuf,
    /// CSV with an x column and optional r column.
    input: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClusterCmd {
    #[arg(long)]
    params: PathBuf,
    /// CSV with x, y and optional r.
    input: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    #[value(name = "table1-nmoe")]
    Nmoe,
    #[value(name = "table1-tmoe")]
    Tmoe,
    #[value(name = "table1-lmoe")]
    Lmoe,
}

#[derive(Debug, Args)]
struct SimulateCmd {
    /// Built-in reference parameters.
    #[arg(long, value_enum, conflicts_with = "params", required_unless_present = "params")]
    preset: Option<Preset>,
    /// Generating parameters as a params JSON.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, short)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    outlier_prob: f64,
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    outlier_y: f64,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    x_min: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    x_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; the generating parameters go to `<stem>.params.json` beside it.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentCmd {
    #[command(subcommand)]
    study: Study,
}

#[derive(Debug, Subcommand)]
enum Study {
    /// Consistency study: parameter MSE against sample size.
    Exp1(Exp1Cmd),
    /// Robustness study: mean-function MSE against outlier rate.
    Exp2(Exp2Cmd),
    /// Tone-perception data: fits, outlier variant, K sweep.
    Tone(RealCmd),
    /// Temperature-anomaly data: fits and K sweep.
    Temperature(RealCmd),
}

#[derive(Debug, Args)]
struct Exp1Cmd {
    #[arg(long, value_delimiter = ',', default_values_t = [50usize, 100, 200, 500, 1000])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Generating families (each fitted with itself): nmoe, lmoe, tmoe.
    #[arg(long, value_delimiter = ',', default_values_t = ["nmoe".to_string(), "lmoe".to_string(), "tmoe".to_string()])]
    families: Vec<String>,
    #[arg(long, short, default_value = "exp1-out")]
    out: PathBuf,
    #[command(flatten)]
    fit: FitFlags,
}

#[derive(Debug, Args)]
struct Exp2Cmd {
    #[arg(long, short, default_value_t = 500)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05])]
    outlier_probs: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_values_t = ["nmoe".to_string(), "lmoe".to_string(), "tmoe".to_string()])]
    generators: Vec<String>,
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    outlier_y: f64,
    #[arg(long, short, default_value = "exp2-out")]
    out: PathBuf,
    #[command(flatten)]
    fit: FitFlags,
}

#[derive(Debug, Args)]
struct RealCmd {
    /// Directory holding the bundled CSVs; defaults to $MOE_ROBUST_DATA_DIR, then the repository data/ directory.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, short, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long, default_value_t = 5)]
    k_max: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    fit: FitFlags,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Ok(commands::Outcome::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
