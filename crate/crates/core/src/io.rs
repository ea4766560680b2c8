//! CSV input for scalar-covariate datasets and atomic file output.
//!
//! The input schema is a header row with columns `x`, `y` and an optional
//! gating covariate `r` (defaulting to `x`). The intercept columns are added
//! here, so files hold raw covariates only.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Raw scalar columns read from a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Columns {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub r: Option<Vec<f64>>,
}

impl Columns {
    /// Dataset with rows `(1, x)` and `(1, r)`; needs a `y` column.
    pub fn into_dataset(self) -> Result<Dataset> {
        let y = self.y.ok_or_else(|| Error::Data("the file has no 'y' column".into()))?;
        Dataset::from_scalar(&self.x, &y, self.r.as_deref())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Expert covariate vector `(1, x_i)`.
    pub fn x_row(&self, i: usize) -> [f64; 2] {
        [1.0, self.x[i]]
    }

    /// Gating covariate vector `(1, r_i)`, with r = x when absent.
    pub fn r_row(&self, i: usize) -> [f64; 2] {
        [1.0, self.r.as_ref().map_or(self.x[i], |r| r[i])]
    }
}

/// Column names accepted for each role, first match wins.
#[derive(Debug, Clone, Copy)]
pub struct Schema<'a> {
    pub x: &'a [&'a str],
    pub y: &'a [&'a str],
    pub r: &'a [&'a str],
}

pub const DEFAULT_SCHEMA: Schema<'static> = Schema {
    x: &["x"],
    y: &["y"],
    r: &["r"],
};

fn find(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    names
        .iter()
        .find_map(|name| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name)))
}

/// Parses CSV text. Parse errors name the 1-based line and column.
pub fn parse_columns(text: &str, schema: Schema<'_>, require_y: bool) -> Result<Columns> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let xi = find(&headers, schema.x)
        .ok_or_else(|| Error::Data(format!("line 1: missing covariate column (expected one of {:?})", schema.x)))?;
    let yi = find(&headers, schema.y);
    if require_y && yi.is_none() {
        return Err(Error::Data(format!("line 1: missing response column (expected one of {:?})", schema.y)));
    }
    let ri = find(&headers, schema.r);

    let mut x = Vec::new();
    let mut y = yi.map(|_| Vec::new());
    let mut r = ri.map(|_| Vec::new());
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize| -> Result<f64> {
            let raw = record.get(col).ok_or_else(|| {
                Error::Data(format!("line {line}, column {}: missing field '{}'", col + 1, &headers[col]))
            })?;
            let v: f64 = raw.parse().map_err(|_| {
                Error::Data(format!(
                    "line {line}, column {} ('{}'): cannot parse '{raw}' as a number",
                    col + 1,
                    &headers[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("line {line}, column {}: value '{raw}' is not finite", col + 1)));
            }
            Ok(v)
        };
        x.push(field(xi)?);
        if let (Some(col), Some(ys)) = (yi, y.as_mut()) {
            ys.push(field(col)?);
        }
        if let (Some(col), Some(rs)) = (ri, r.as_mut()) {
            rs.push(field(col)?);
        }
    }
    if x.is_empty() {
        return Err(Error::Data("the file contains no data rows".into()));
    }
    Ok(Columns { x, y, r })
}

pub fn read_columns(path: &Path, schema: Schema<'_>, require_y: bool) -> Result<Columns> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingData(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })?;
    parse_columns(&text, schema, require_y).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads a dataset in the default `x, y[, r]` schema.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    read_columns(path, DEFAULT_SCHEMA, true)?.into_dataset()
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp: PathBuf = path.with_file_name(tmp_name);
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Renders rows of display-formatted cells as CSV text.
pub fn csv_string<S: AsRef<str>>(header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row.iter().map(AsRef::as_ref))?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

/// Shortest round-trip decimal form, with NaN rendered as an empty cell.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Dataset as `x,y,r` text with raw (intercept-free) covariates.
pub fn dataset_csv(data: &Dataset) -> Result<String> {
    if data.p() != 2 || data.q() != 2 {
        return Err(Error::Dimension("only scalar-covariate datasets can be written as CSV".into()));
    }
    csv_string(
        &["x", "y", "r"],
        (0..data.n()).map(|i| vec![fmt_f64(data.x()[(i, 1)]), fmt_f64(data.y()[i]), fmt_f64(data.r()[(i, 1)])]),
    )
}
