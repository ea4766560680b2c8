//! Sampling from normal, t and Laplace mixtures of linear experts with a
//! scalar covariate, plus outlier injection.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::gate_probs;
use crate::params::{Family, MoEParams};

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    /// Generating parameters; the family decides the noise law.
    pub params: MoEParams,
    pub n: usize,
    pub x_range: (f64, f64),
    /// Probability c of replacing a response by `outlier_y`.
    pub outlier_prob: f64,
    pub outlier_y: f64,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(params: MoEParams, n: usize, seed: u64) -> Self {
        Self {
            params,
            n,
            x_range: (-1.0, 1.0),
            outlier_prob: 0.0,
            outlier_y: -2.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.params.p() != 2 || self.params.q() != 2 {
            return Err(Error::Dimension(format!(
                "the simulator draws a scalar covariate; parameters have p = {}, q = {} (expected 2, 2)",
                self.params.p(),
                self.params.q()
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidParams("n must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_prob) {
            return Err(Error::InvalidParams(format!("outlier probability {} is outside [0, 1]", self.outlier_prob)));
        }
        let (a, b) = self.x_range;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidParams(format!("x range ({a}, {b}) is not a finite interval")));
        }
        if !self.outlier_y.is_finite() {
            return Err(Error::InvalidParams("outlier response must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: Dataset,
    /// Component that generated each observation (0-based), before outlier replacement.
    pub components: Vec<usize>,
    pub outlier_mask: Vec<bool>,
}

impl Simulated {
    /// True cluster labels with outliers marked `None`.
    pub fn labels(&self) -> Vec<Option<usize>> {
        self.components
            .iter()
            .zip(&self.outlier_mask)
            .map(|(&z, &out)| (!out).then_some(z))
            .collect()
    }
}

/// A draw from the shape-rate gamma law with density ∝ u^(shape-1) e^(-rate u).
pub fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
        return Err(Error::Domain(format!("gamma needs shape, rate > 0, got {shape}, {rate}")));
    }
    let dist = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// A draw from the Laplace law with location 0 and scale λ, by inversion.
pub fn laplace_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -lambda * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

fn draw_component<R: Rng + ?Sized>(pi: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in pi.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    pi.len() - 1
}

/// Draws `spec.n` observations. For each one, in order: x uniform on the
/// range, the component from the gate at r = (1, x), the expert noise, and the
/// outlier indicator.
pub fn simulate(spec: &SimSpec) -> Result<Simulated> {
    spec.validate()?;
    let params = &spec.params;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (a, b) = spec.x_range;
    let mut xs = Vec::with_capacity(spec.n);
    let mut ys = Vec::with_capacity(spec.n);
    let mut components = Vec::with_capacity(spec.n);
    let mut outlier_mask = Vec::with_capacity(spec.n);

    for _ in 0..spec.n {
        let x = rng.random_range(a..b);
        let cov = [1.0, x];
        let z = draw_component(&gate_probs(&cov, &params.gating)?, &mut rng);
        let expert = &params.experts[z];
        let mean = expert.mean(&cov);
        let y = match params.family {
            Family::Normal => {
                let eps: f64 = StandardNormal.sample(&mut rng);
                mean + expert.sigma2.sqrt() * eps
            }
            Family::StudentT => {
                let nu = expert.nu.expect("validated");
                let w = gamma_draw(0.5 * nu, 0.5 * nu, &mut rng)?;
                let eps: f64 = StandardNormal.sample(&mut rng);
                mean + expert.sigma2.sqrt() * eps / w.sqrt()
            }
            Family::Laplace => mean + laplace_draw(expert.lambda.expect("validated"), &mut rng),
        };
        let outlier = rng.random::<f64>() < spec.outlier_prob;
        xs.push(x);
        ys.push(if outlier { spec.outlier_y } else { y });
        components.push(z);
        outlier_mask.push(outlier);
    }

    Ok(Simulated {
        data: Dataset::from_scalar(&xs, &ys, None)?,
        components,
        outlier_mask,
    })
}
