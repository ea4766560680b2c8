use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Responses with their expert (`x`) and gating (`r`) design rows.
///
/// Both design matrices carry a leading intercept column of ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl Dataset {
    pub fn from_matrices(y: DVector<f64>, x: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Data("dataset must contain at least one observation".into()));
        }
        if x.nrows() != n || r.nrows() != n {
            return Err(Error::Dimension(format!(
                "{} responses but {} expert rows and {} gating rows",
                n,
                x.nrows(),
                r.nrows()
            )));
        }
        if x.ncols() == 0 || r.ncols() == 0 {
            return Err(Error::Dimension("design matrices need at least the intercept column".into()));
        }
        for (name, m) in [("x", &x), ("r", &r)] {
            for i in 0..n {
                if m[(i, 0)] != 1.0 {
                    return Err(Error::Data(format!("row {i} of {name} does not start with the intercept 1")));
                }
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("{name} contains non-finite values")));
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("y contains non-finite values".into()));
        }
        Ok(Self { y, x, r })
    }

    /// Builds a dataset from row vectors that already include the intercept.
    pub fn new(y: Vec<f64>, x_rows: &[Vec<f64>], r_rows: &[Vec<f64>]) -> Result<Self> {
        let n = y.len();
        let to_matrix = |name: &str, rows: &[Vec<f64>]| -> Result<DMatrix<f64>> {
            if rows.len() != n {
                return Err(Error::Dimension(format!("{name} has {} rows, expected {n}", rows.len())));
            }
            let width = rows.first().map_or(0, Vec::len);
            if let Some(i) = rows.iter().position(|row| row.len() != width) {
                return Err(Error::Dimension(format!("{name} row {i} has a different length than row 0")));
            }
            Ok(DMatrix::from_fn(n, width, |i, j| rows[i][j]))
        };
        let x = to_matrix("x", x_rows)?;
        let r = to_matrix("r", r_rows)?;
        Self::from_matrices(DVector::from_vec(y), x, r)
    }

    /// Linear experts and gates on scalar covariates: rows `(1, x_i)` and
    /// `(1, r_i)`, with `r` defaulting to `x`.
    pub fn from_scalar(xs: &[f64], ys: &[f64], rs: Option<&[f64]>) -> Result<Self> {
        let n = ys.len();
        let rs = rs.unwrap_or(xs);
        if xs.len() != n || rs.len() != n {
            return Err(Error::Dimension(format!(
                "{} responses, {} x values, {} r values",
                n,
                xs.len(),
                rs.len()
            )));
        }
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        let r = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { rs[i] });
        Self::from_matrices(DVector::from_column_slice(ys), x, r)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Length of the expert covariate vector (intercept included).
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Length of the gating covariate vector (intercept included).
    pub fn q(&self) -> usize {
        self.r.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn x_row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn r_row(&self, i: usize) -> Vec<f64> {
        self.r.row(i).iter().copied().collect()
    }

    /// Concatenates the rows of `other` after those of `self`.
    pub fn append(&self, other: &Dataset) -> Result<Dataset> {
        if other.p() != self.p() || other.q() != self.q() {
            return Err(Error::Dimension("appended dataset has different covariate widths".into()));
        }
        let n = self.n() + other.n();
        let pick = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            DMatrix::from_fn(n, a.ncols(), |i, j| if i < a.nrows() { a[(i, j)] } else { b[(i - a.nrows(), j)] })
        };
        let y = DVector::from_iterator(n, self.y.iter().chain(other.y.iter()).copied());
        Self::from_matrices(y, pick(&self.x, &other.x), pick(&self.r, &other.r))
    }

    /// Keeps the rows whose index satisfies `keep`.
    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> Result<Dataset> {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| keep(i)).collect();
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i]));
        let x = DMatrix::from_fn(idx.len(), self.p(), |i, j| self.x[(idx[i], j)]);
        let r = DMatrix::from_fn(idx.len(), self.q(), |i, j| self.r[(idx[i], j)]);
        Self::from_matrices(y, x, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_constructor_prepends_intercept() {
        let d = Dataset::from_scalar(&[0.5, -0.25], &[1.0, 2.0], None).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!((d.p(), d.q()), (2, 2));
        assert_eq!(d.x_row(0), vec![1.0, 0.5]);
        assert_eq!(d.r_row(1), vec![1.0, -0.25]);
    }

    #[test]
    fn rejects_missing_intercept_and_ragged_rows() {
        let bad = Dataset::new(vec![1.0], &[vec![2.0, 1.0]], &[vec![1.0]]);
        assert!(matches!(bad, Err(Error::Data(_))));
        let ragged = Dataset::new(vec![1.0, 2.0], &[vec![1.0, 1.0], vec![1.0]], &[vec![1.0], vec![1.0]]);
        assert!(matches!(ragged, Err(Error::Dimension(_))));
        assert!(Dataset::from_scalar(&[], &[], None).is_err());
        assert!(Dataset::from_scalar(&[f64::NAN], &[1.0], None).is_err());
    }

    #[test]
    fn append_and_filter() {
        let a = Dataset::from_scalar(&[1.0, 2.0], &[3.0, 4.0], None).unwrap();
        let b = Dataset::from_scalar(&[0.0], &[4.0], None).unwrap();
        let c = a.append(&b).unwrap();
        assert_eq!(c.n(), 3);
        assert_eq!(c.y()[2], 4.0);
        assert_eq!(c.x_row(2), vec![1.0, 0.0]);
        let d = c.filter(|i| i != 1).unwrap();
        assert_eq!(d.y().as_slice(), &[3.0, 4.0]);
    }
}
