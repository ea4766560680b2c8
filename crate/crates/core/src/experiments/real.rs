//! Tone-perception and temperature-anomaly studies.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::em::{fit, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::io::{parse_columns, Schema};
use crate::model::{predict_mean, predict_variance};
use crate::params::{Family, MoEParams};
use crate::selection::{select, Criterion, SelectionTable};

/// Environment variable overriding the bundled data directory.
pub const DATA_DIR_ENV: &str = "MOE_ROBUST_DATA_DIR";
/// Manifest of `<sha256>  <file name>` lines inside the data directory.
pub const CHECKSUM_FILE: &str = "SHA256SUMS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RealDataset {
    Tone,
    Temperature,
}

impl RealDataset {
    pub fn file_name(self) -> &'static str {
        match self {
            RealDataset::Tone => "tone.csv",
            RealDataset::Temperature => "temperature.csv",
        }
    }

    pub fn expected_rows(self) -> usize {
        match self {
            RealDataset::Tone => 150,
            RealDataset::Temperature => 135,
        }
    }

    /// Accepted header names: the generic `x, y` schema or the source names.
    pub fn schema(self) -> Schema<'static> {
        match self {
            RealDataset::Tone => Schema {
                x: &["x", "stretchratio"],
                y: &["y", "tuned"],
                r: &["r"],
            },
            RealDataset::Temperature => Schema {
                x: &["x", "year"],
                y: &["y", "anomaly", "temperature"],
                r: &["r"],
            },
        }
    }
}

impl fmt::Display for RealDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RealDataset::Tone => "tone",
            RealDataset::Temperature => "temperature",
        })
    }
}

impl FromStr for RealDataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tone" => Ok(RealDataset::Tone),
            "temperature" => Ok(RealDataset::Temperature),
            other => Err(Error::Config(format!("unknown dataset '{other}' (expected tone or temperature)"))),
        }
    }
}

/// `$MOE_ROBUST_DATA_DIR` if set, otherwise the repository's `data/` directory.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
            manifest.ancestors().nth(2).unwrap_or(manifest).join("data")
        })
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn expected_checksum(dir: &Path, file: &str) -> Result<Option<String>> {
    let manifest = dir.join(CHECKSUM_FILE);
    let text = match fs::read_to_string(&manifest) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once(char::is_whitespace))
        .find(|(_, name)| name.trim().trim_start_matches('*') == file)
        .map(|(hash, _)| hash.to_ascii_lowercase()))
}

/// Loads a study dataset from `dir`, verifying its checksum against the
/// manifest (when listed) and its row count.
pub fn load_real_dataset(kind: RealDataset, dir: &Path) -> Result<Dataset> {
    let path = dir.join(kind.file_name());
    let bytes = fs::read(&path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingData(path.clone())
        } else {
            Error::Io(e)
        }
    })?;
    if let Some(expected) = expected_checksum(dir, kind.file_name())? {
        let found = sha256_hex(&bytes);
        if found != expected {
            return Err(Error::Checksum { path, expected, found });
        }
    }
    let text = String::from_utf8(bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let cols = parse_columns(&text, kind.schema(), true).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    if cols.len() != kind.expected_rows() {
        return Err(Error::Data(format!(
            "{}: expected {} rows, found {}",
            path.display(),
            kind.expected_rows(),
            cols.len()
        )));
    }
    cols.into_dataset()
}

/// The tone data with ten extra observations at (x, y) = (0, 4).
pub fn with_tone_outliers(data: &Dataset) -> Result<Dataset> {
    data.append(&Dataset::from_scalar(&[0.0; 10], &[4.0; 10], None)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct RealStudyConfig {
    pub fit: FitConfig,
    /// Number of experts for the parameter tables and plots.
    pub k: usize,
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for RealStudyConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            k: 2,
            k_min: 1,
            k_max: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PlotRow {
    pub x: f64,
    pub y: f64,
    pub true_mean: Option<f64>,
    pub est_mean: Option<f64>,
    pub band_lo: Option<f64>,
    pub band_hi: Option<f64>,
    /// 1-based MAP component.
    pub cluster_label: usize,
}

#[derive(Debug, Clone)]
pub struct StudyFit {
    pub family: Family,
    /// `clean` or `outliers`.
    pub variant: &'static str,
    pub result: FitResult,
    pub plot: Vec<PlotRow>,
}

#[derive(Debug, Clone)]
pub struct StudySelection {
    pub family: Family,
    pub table: SelectionTable,
}

impl StudySelection {
    pub fn best(&self, c: Criterion) -> Option<usize> {
        self.table.best(c)
    }
}

#[derive(Debug, Clone)]
pub struct RealStudyReport {
    pub dataset: RealDataset,
    pub n: usize,
    pub config: RealStudyConfig,
    pub fits: Vec<StudyFit>,
    pub selections: Vec<StudySelection>,
}

impl RealStudyReport {
    pub fn fit(&self, family: Family, variant: &str) -> Option<&StudyFit> {
        self.fits.iter().find(|f| f.family == family && f.variant == variant)
    }

    pub fn selection(&self, family: Family) -> Option<&StudySelection> {
        self.selections.iter().find(|s| s.family == family)
    }
}

/// Fitted mean, ±2 standard deviation band (absent when the variance is
/// undefined) and MAP label per observation, sorted by x.
pub fn plot_rows(data: &Dataset, res: &FitResult, truth: Option<&MoEParams>) -> Vec<PlotRow> {
    let mut rows: Vec<PlotRow> = (0..data.n())
        .map(|i| {
            let (x, r) = (data.x_row(i), data.r_row(i));
            let est_mean = predict_mean(&x, &r, &res.params).ok();
            let sd = predict_variance(&x, &r, &res.params).ok().map(f64::sqrt);
            let band = est_mean.zip(sd).map(|(m, s)| (m - 2.0 * s, m + 2.0 * s));
            PlotRow {
                x: x[1],
                y: data.y()[i],
                true_mean: truth.and_then(|t| predict_mean(&x, &r, t).ok()),
                est_mean,
                band_lo: band.map(|b| b.0),
                band_hi: band.map(|b| b.1),
                cluster_label: res.labels[i] + 1,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.x.total_cmp(&b.x));
    rows
}

fn study_fit(data: &Dataset, family: Family, variant: &'static str, cfg: &RealStudyConfig) -> Result<StudyFit> {
    let result = fit(data, family, cfg.k, &cfg.fit)?;
    let plot = plot_rows(data, &result, None);
    Ok(StudyFit {
        family,
        variant,
        result,
        plot,
    })
}

/// Fits normal and t mixtures with `cfg.k` experts, sweeps K over
/// `k_min..=k_max` for both, and for the tone data refits after appending
/// the ten (0, 4) outliers.
pub fn run_real_study(kind: RealDataset, data_dir: &Path, cfg: &RealStudyConfig) -> Result<RealStudyReport> {
    cfg.fit.validate()?;
    let data = load_real_dataset(kind, data_dir)?;
    let families = [Family::Normal, Family::StudentT];
    let mut fits = Vec::new();
    for family in families {
        fits.push(study_fit(&data, family, "clean", cfg)?);
    }
    if kind == RealDataset::Tone {
        let noisy = with_tone_outliers(&data)?;
        for family in families {
            fits.push(study_fit(&noisy, family, "outliers", cfg)?);
        }
    }
    let selections = families
        .into_iter()
        .map(|family| {
            Ok(StudySelection {
                family,
                table: select(&data, family, cfg.k_min..=cfg.k_max, &cfg.fit)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RealStudyReport {
        dataset: kind,
        n: data.n(),
        config: cfg.clone(),
        fits,
        selections,
    })
}
