//! Logit-normal mixed model with one continuous and one binary response per
//! cell of an `N x N` crossed design.

mod data;
mod importance;
mod params;
mod subcollection;

pub use data::{simulate_mglmm, MglmmDataset, MglmmDesign, DEFAULT_GRAM_FLOOR};
pub use importance::{
    conditional_loglik, full_loglik_mglmm, full_loglik_ratio_mglmm, mglmm_loglik_and_score, mglmm_score,
    ApproxConfig, IsEstimate,
};
pub use params::MglmmParams;
pub use subcollection::{
    bernoulli_ratio_with_probs, diagonal_binary, diagonal_continuous, expected_ratio, expected_ratio_bernoulli,
    expected_ratio_bernoulli_with_probs, expected_ratio_normal, marginal_normal_var, subcoll_ratio,
    subcoll_ratio_bernoulli, subcoll_ratio_normal, success_probs,
};
