//! Robust mixture-of-experts regression.
//!
//! Mixtures of linear experts with normal (NMoE) or Student-t (TMoE) noise and
//! a multinomial-logistic gating network, fitted by maximum likelihood with
//! EM/ECM. Also provides prediction, MAP clustering, information-criterion
//! model selection, simulation and the reproduction harness for the
//! simulation and real-data studies.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod densities;
pub mod em;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod numeric;
pub mod params;
pub mod selection;
pub mod simulate;

pub use dataset::Dataset;
pub use em::{fit, fit_from, Algorithm, EStepQuantities, FitConfig, FitResult, SigmaUpdate};
pub use error::{Error, Result};
pub use model::{gate_probs, loglik, map_cluster, predict_mean, predict_variance};
pub use params::{canonical_order, reference_params, ExpertParams, Family, GatingParams, MoEParams};
pub use selection::{criteria, free_params, select, Criteria, Criterion, SelectionRow, SelectionTable};
pub use simulate::{simulate, SimSpec, Simulated};
