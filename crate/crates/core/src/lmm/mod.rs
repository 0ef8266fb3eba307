//! Longitudinal linear mixed model with crossed subject effects and AR(1)
//! temporal dependence, plus the one-parameter crossed toy model.

mod data;
mod likelihood;
mod params;
mod subcollection;
pub mod toy;

pub use data::{simulate_lmm, LmmDataset};
pub use likelihood::{lmm_loglik, lmm_loglik_dense, lmm_loglik_ratio, lmm_score};
pub use params::LmmParams;
pub use subcollection::{
    block_covariance, block_mean, extract_subcollection, subcollection_expected_ratio,
    subcollection_loglik, subcollection_loglik_ratio, BlockDensity, BlockStats, LmmSubcollection,
};
