//! Parameter containers and their JSON document form.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Expert distribution family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "NMoE")]
    Normal,
    #[serde(rename = "TMoE")]
    StudentT,
    /// Laplace experts; only usable as a data generator.
    #[serde(rename = "LMoE")]
    Laplace,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Normal => "NMoE",
            Family::StudentT => "TMoE",
            Family::Laplace => "LMoE",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nmoe" | "normal" => Ok(Family::Normal),
            "tmoe" | "t" | "student-t" => Ok(Family::StudentT),
            "lmoe" | "lmoe-sim" | "laplace" => Ok(Family::Laplace),
            other => Err(Error::InvalidParams(format!("unknown family `{other}`"))),
        }
    }
}

/// Multinomial-logistic gate coefficients for components `1..K-1`.
///
/// Row `k` holds α_k; the last component's coefficients are the null vector
/// and are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingParams {
    alpha: DMatrix<f64>,
}

impl GatingParams {
    pub fn new(alpha: DMatrix<f64>) -> Result<Self> {
        if alpha.ncols() == 0 {
            return Err(Error::Dimension("gating coefficients need q >= 1 columns".into()));
        }
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite gating coefficient".into()));
        }
        Ok(Self { alpha })
    }

    pub fn from_rows(rows: &[Vec<f64>], q: usize) -> Result<Self> {
        if let Some(row) = rows.iter().find(|row| row.len() != q) {
            return Err(Error::Dimension(format!("gating row of length {} but q = {q}", row.len())));
        }
        Self::new(DMatrix::from_fn(rows.len(), q, |i, j| rows[i][j]))
    }

    /// All-zero coefficients, i.e. equal mixing proportions.
    pub fn null(k: usize, q: usize) -> Self {
        Self {
            alpha: DMatrix::zeros(k.saturating_sub(1), q),
        }
    }

    pub fn k(&self) -> usize {
        self.alpha.nrows() + 1
    }

    pub fn q(&self) -> usize {
        self.alpha.ncols()
    }

    /// The stored `(K-1) × q` coefficient matrix.
    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.alpha.row_iter().map(|row| row.iter().copied().collect()).collect()
    }

    /// Coefficients for all K components, the last row being zero.
    pub fn full(&self) -> DMatrix<f64> {
        let mut full = DMatrix::zeros(self.k(), self.q());
        full.rows_mut(0, self.k() - 1).copy_from(&self.alpha);
        full
    }

    /// Inverse of [`GatingParams::full`] after re-referencing every row to the
    /// last one.
    pub fn from_full(full: &DMatrix<f64>) -> Result<Self> {
        let k = full.nrows();
        if k == 0 {
            return Err(Error::Dimension("no gating rows".into()));
        }
        let reference = full.row(k - 1).clone_owned();
        let alpha = DMatrix::from_fn(k - 1, full.ncols(), |i, j| full[(i, j)] - reference[j]);
        Self::new(alpha)
    }
}

/// Parameters of a single expert. `nu` is set only for t experts and
/// `lambda` only for Laplace experts.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertParams {
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub nu: Option<f64>,
    pub lambda: Option<f64>,
}

impl ExpertParams {
    pub fn normal(beta: Vec<f64>, sigma2: f64) -> Self {
        Self {
            beta: DVector::from_vec(beta),
            sigma2,
            nu: None,
            lambda: None,
        }
    }

    pub fn student_t(beta: Vec<f64>, sigma2: f64, nu: f64) -> Self {
        Self {
            nu: Some(nu),
            ..Self::normal(beta, sigma2)
        }
    }

    /// A Laplace expert with scale λ; `sigma2` records its variance 2λ².
    pub fn laplace(beta: Vec<f64>, lambda: f64) -> Self {
        Self {
            lambda: Some(lambda),
            ..Self::normal(beta, 2.0 * lambda * lambda)
        }
    }

    /// β_kᵀx
    pub fn mean(&self, x: &[f64]) -> f64 {
        self.beta.iter().zip(x).map(|(b, v)| b * v).sum()
    }

    fn ordering_key(&self) -> Vec<f64> {
        let mut key: Vec<f64> = self.beta.iter().copied().collect();
        key.push(self.sigma2);
        key.extend(self.nu);
        key.extend(self.lambda);
        key
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Full parameter vector of a K-component mixture of linear experts.
#[derive(Debug, Clone, PartialEq)]
pub struct MoEParams {
    pub family: Family,
    pub gating: GatingParams,
    pub experts: Vec<ExpertParams>,
}

impl MoEParams {
    pub fn new(family: Family, gating: GatingParams, experts: Vec<ExpertParams>) -> Result<Self> {
        let params = Self {
            family,
            gating,
            experts,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.experts.len();
        if k == 0 {
            return Err(Error::InvalidParams("at least one expert is required".into()));
        }
        if self.gating.k() != k {
            return Err(Error::Dimension(format!(
                "{} gating rows for {k} experts (expected {})",
                self.gating.k() - 1,
                k - 1
            )));
        }
        let p = self.experts[0].beta.len();
        if p == 0 {
            return Err(Error::Dimension("expert coefficients are empty".into()));
        }
        for (idx, e) in self.experts.iter().enumerate() {
            if e.beta.len() != p {
                return Err(Error::Dimension(format!("expert {idx} has {} coefficients, expected {p}", e.beta.len())));
            }
            if e.beta.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParams(format!("expert {idx} has a non-finite coefficient")));
            }
            if !(e.sigma2.is_finite() && e.sigma2 > 0.0) {
                return Err(Error::InvalidParams(format!("expert {idx}: sigma2 must be > 0, got {}", e.sigma2)));
            }
            let positive = |v: Option<f64>| v.is_some_and(|v| v.is_finite() && v > 0.0);
            let consistent = match self.family {
                Family::Normal => e.nu.is_none() && e.lambda.is_none(),
                Family::StudentT => positive(e.nu) && e.lambda.is_none(),
                Family::Laplace => positive(e.lambda) && e.nu.is_none(),
            };
            if !consistent {
                return Err(Error::InvalidParams(format!(
                    "expert {idx} fields do not match family {} (nu = {:?}, lambda = {:?})",
                    self.family, e.nu, e.lambda
                )));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.experts.len()
    }

    pub fn p(&self) -> usize {
        self.experts[0].beta.len()
    }

    pub fn q(&self) -> usize {
        self.gating.q()
    }

    /// Relabels components so that new component `j` is old component `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<MoEParams> {
        let k = self.k();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&j| j >= k || std::mem::replace(&mut seen[j], true)) {
            return Err(Error::InvalidParams(format!("{perm:?} is not a permutation of 0..{k}")));
        }
        let full = self.gating.full();
        let permuted = DMatrix::from_fn(k, self.q(), |i, j| full[(perm[i], j)]);
        Ok(MoEParams {
            family: self.family,
            gating: GatingParams::from_full(&permuted)?,
            experts: perm.iter().map(|&j| self.experts[j].clone()).collect(),
        })
    }

    /// Serialises to the flat JSON parameter document.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ParamsDocument::from(self))?)
    }

    /// The JSON parameter document as a value, for embedding in reports.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(ParamsDocument::from(self)).expect("plain numeric document")
    }

    pub fn from_json(text: &str) -> Result<MoEParams> {
        let doc: ParamsDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// Sorts experts into lexicographic order of `(β, σ², ν)` and re-expresses the
/// gate so that the new last component carries the null vector.
pub fn canonical_order(params: &MoEParams) -> MoEParams {
    let keys: Vec<Vec<f64>> = params.experts.iter().map(ExpertParams::ordering_key).collect();
    let mut perm: Vec<usize> = (0..params.k()).collect();
    perm.sort_by(|&a, &b| lexicographic(&keys[a], &keys[b]).then(a.cmp(&b)));
    params.permuted(&perm).expect("sorted indices form a permutation")
}

#[derive(Debug, Serialize, Deserialize)]
struct ExpertDocument {
    beta: Vec<f64>,
    sigma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamsDocument {
    family: Family,
    #[serde(rename = "K")]
    k: usize,
    p: usize,
    q: usize,
    alpha: Vec<Vec<f64>>,
    experts: Vec<ExpertDocument>,
}

impl From<&MoEParams> for ParamsDocument {
    fn from(params: &MoEParams) -> Self {
        Self {
            family: params.family,
            k: params.k(),
            p: params.p(),
            q: params.q(),
            alpha: params.gating.rows(),
            experts: params
                .experts
                .iter()
                .map(|e| ExpertDocument {
                    beta: e.beta.iter().copied().collect(),
                    sigma2: e.sigma2,
                    nu: e.nu,
                    lambda: e.lambda,
                })
                .collect(),
        }
    }
}

impl TryFrom<ParamsDocument> for MoEParams {
    type Error = Error;

    fn try_from(doc: ParamsDocument) -> Result<Self> {
        if doc.experts.len() != doc.k || doc.alpha.len() + 1 != doc.k.max(1) {
            return Err(Error::Dimension(format!(
                "document declares K = {} but has {} experts and {} gating rows",
                doc.k,
                doc.experts.len(),
                doc.alpha.len()
            )));
        }
        let gating = GatingParams::from_rows(&doc.alpha, doc.q)?;
        let experts = doc
            .experts
            .into_iter()
            .map(|e| {
                if e.beta.len() != doc.p {
                    return Err(Error::Dimension(format!("beta of length {} but p = {}", e.beta.len(), doc.p)));
                }
                Ok(ExpertParams {
                    beta: DVector::from_vec(e.beta),
                    sigma2: e.sigma2,
                    nu: e.nu,
                    lambda: e.lambda,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MoEParams::new(doc.family, gating, experts)
    }
}

/// Parameter values used for the simulation studies: two linear experts on
/// `x = r = (1, x)`, gate α₁ = (0, 10), slopes ±1, σ = 0.1, ν = (5, 7),
/// λ = 0.1.
pub fn reference_params(family: Family) -> MoEParams {
    let gating = GatingParams::from_rows(&[vec![0.0, 10.0]], 2).expect("static shape");
    let sigma2 = 0.1 * 0.1;
    let experts = match family {
        Family::Normal => vec![
            ExpertParams::normal(vec![0.0, 1.0], sigma2),
            ExpertParams::normal(vec![0.0, -1.0], sigma2),
        ],
        Family::StudentT => vec![
            ExpertParams::student_t(vec![0.0, 1.0], sigma2, 5.0),
            ExpertParams::student_t(vec![0.0, -1.0], sigma2, 7.0),
        ],
        Family::Laplace => vec![
            ExpertParams::laplace(vec![0.0, 1.0], 0.1),
            ExpertParams::laplace(vec![0.0, -1.0], 0.1),
        ],
    };
    MoEParams::new(family, gating, experts).expect("reference parameters are valid")
}
