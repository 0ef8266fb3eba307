//! Monte Carlo checks of the subcollection argument for consistency.

pub mod checks;
pub mod report;
pub mod sphere;
pub mod stats;
pub mod subset;
pub mod surface;

pub use checks::{
    consistency_experiment, dense_equivalence_check, gradient_check, identification_rate, kl_sup_check, lipschitz_order, random_thetas, rate_condition_check, sphere_grid_check,
    standard_specs, subset_inequality_check, ulln_check, unit_mean_check, ConsistencyOptions, DenseOptions, GradientOptions, InequalityOptions,
    KlOptions, LipschitzOptions, RateConditionOptions, RateOptions, UllnOptions, UnitMeanOptions,
};
pub use report::{CheckReport, Row, VerificationReport};
pub use sphere::{ball_sample, check_interior, covering_growth, sphere_grid, sphere_grid_with, SphereGrid};
pub use stats::{Axes, RateFit};
pub use subset::{subsets_cover, SubsetId, SubsetSpec};
pub use surface::{experiment_design, Surface};
