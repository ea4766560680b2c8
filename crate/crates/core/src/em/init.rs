//! Random starting points for the EM restarts.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mstep::mstep_experts_nmoe;
use super::FitConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::params::{ExpertParams, Family, GatingParams, MoEParams};

/// Independent random stream for one restart.
pub(crate) fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Starting parameters for restart `restart`.
///
/// Gating coefficients are uniform on [-1, 1] except for restart 0, which
/// starts from the null vector. Expert coefficients and scales come from the
/// normal-expert updates on a random balanced hard partition, and t degrees
/// of freedom are uniform on `cfg.nu_init_range`.
pub fn initial_params(data: &Dataset, family: Family, k: usize, cfg: &FitConfig, restart: usize) -> Result<MoEParams> {
    if family == Family::Laplace {
        return Err(Error::UnsupportedFamily(family));
    }
    if k == 0 {
        return Err(Error::InvalidParams("K must be at least 1".into()));
    }
    if data.n() < k {
        return Err(Error::Data(format!("{} observations cannot seed {k} components", data.n())));
    }
    let mut rng = restart_rng(cfg.rng_seed, restart);
    let q = data.q();

    let gating = if restart == 0 {
        GatingParams::null(k, q)
    } else {
        GatingParams::new(DMatrix::from_fn(k - 1, q, |_, _| rng.random_range(-1.0..=1.0)))?
    };

    let mut order: Vec<usize> = (0..data.n()).collect();
    order.shuffle(&mut rng);
    let mut hard = DMatrix::zeros(data.n(), k);
    for (pos, &i) in order.iter().enumerate() {
        hard[(i, pos % k)] = 1.0;
    }
    let updates = mstep_experts_nmoe(data, &hard, cfg)?;

    let (lo, hi) = cfg.nu_init_range;
    let experts = updates
        .into_iter()
        .map(|u| {
            let beta: Vec<f64> = u.beta.iter().copied().collect();
            match family {
                Family::StudentT => {
                    let nu = if lo == hi { lo } else { rng.random_range(lo..=hi) };
                    ExpertParams::student_t(beta, u.sigma2, nu)
                }
                _ => ExpertParams::normal(beta, u.sigma2),
            }
        })
        .collect();
    MoEParams::new(family, gating, experts)
}
