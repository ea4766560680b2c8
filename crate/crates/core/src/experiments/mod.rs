//! Reproduction harness: the consistency and robustness simulation studies
//! and the two real-data studies, with their metrics and report files.

pub mod metrics;
pub mod real;
pub mod report;
pub mod simulation;

pub use metrics::{align_to, meanfn_mse, param_mse, ParamErrors};
pub use real::{
    default_data_dir, load_real_dataset, run_real_study, with_tone_outliers, RealDataset, RealStudyConfig,
    RealStudyReport, DATA_DIR_ENV,
};
pub use report::{write_experiment1, write_experiment2, write_real_study};
pub use simulation::{run_experiment1, run_experiment2, Experiment1Config, Experiment1Report, Experiment2Config, Experiment2Report};

/// Seed for one task of a study, mixed from the study seed and task tags
/// with the splitmix64 finaliser.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    tags.iter().fold(mix(base), |acc, &t| mix(acc ^ mix(t)))
}
