//! Crossed random-effects mixed models, their likelihoods and maximum
//! likelihood fits, and Monte Carlo checks of subcollection-based
//! consistency conditions.
//!
//! * [`linalg`]: AR(1) and crossed covariance algebra, Gaussian kernels.
//! * [`lmm`]: longitudinal linear mixed model and the crossed toy model.
//! * [`quadrature`]: Gauss-Hermite rules, logistic-normal expectations.
//! * [`kl`]: closed-form divergences.

pub mod error;
pub mod estimation;
pub mod io;
pub mod kl;
pub mod linalg;
pub mod lmm;
pub mod mglmm;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use model::{Dataset, ModelKind, ParamVector, Which};
pub use scalar::Scalar;

pub type LmmParams64 = lmm::LmmParams<f64>;
pub type LmmParams32 = lmm::LmmParams<f32>;
pub type Ar1Matrix64 = linalg::Ar1Matrix<f64>;
pub type Ar1Matrix32 = linalg::Ar1Matrix<f32>;
pub type LmmCovariance64 = linalg::LmmCovariance<f64>;
pub type LmmCovariance32 = linalg::LmmCovariance<f32>;
pub type GaussHermite64 = quadrature::GaussHermite<f64>;
