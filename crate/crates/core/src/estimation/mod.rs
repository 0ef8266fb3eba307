//! Maximum likelihood by multistart BFGS over unconstrained coordinates
//! (log for variances, atanh for the autocorrelation).

mod bfgs;
mod fit;
mod reparam;

pub use bfgs::{minimize, Minimum, TracePoint};
pub use fit::{
    check_gradient, fit_mle, initial_estimate, loglik, loglik_and_score, FitConfig, FitResult, StartRecord,
};
pub use reparam::{coords, reparameterize, Coord, Direction};
