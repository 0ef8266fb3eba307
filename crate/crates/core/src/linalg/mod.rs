//! Structured covariance construction and Gaussian kernel evaluation.

mod ar1;
mod cholesky;
mod covariance;
mod crossed;

pub use ar1::{ar1_matrix, Ar1Matrix};
pub use cholesky::Cholesky;
pub use covariance::{build_lmm_covariance, gaussian_kernel, kernel_dense, GaussianKernel, LmmCovariance, DEFAULT_DENSE_CAP};
pub use crossed::{CrossedCovariance, CrossedStats, Subspace};
pub(crate) use crossed::trace_product as crossed_trace_product;
