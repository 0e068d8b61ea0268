//! Mean estimation on mixed-norm unit balls: exact norms, counted query
//! access, non-adaptive and adaptive Monte Carlo estimators, the hard input
//! families that separate them, a multi-level composite estimator and a
//! seeded experiment harness.

pub mod direct_sum;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod instances;
pub mod mixed_norm;
pub mod oracle;
pub mod rng;

pub use direct_sum::{
    ds_estimate, ds_estimate_with_budgets, ds_integral, ds_norm, level_allocation,
    DirectSumElement, DirectSumSpec, DsParams, LevelAllocation,
};
pub use error::{Error, Result};
pub use estimators::{
    adaptive_mean_a3, allocate_samples, default_m, mc_mean_a2, mc_mean_a2_nonadaptive, median,
    norm_est_a1, proof_m, EstimateReport,
};
pub use harness::{
    gap_experiment, rate_experiment, rate_fit, rms_error, ErrorStats, Estimator, RateFit, Regime,
};
pub use instances::{check_regime, HardFamily, Variant};
pub use mixed_norm::{mixed_norm, row_means, scalar_mean, Extended, MixedMatrix, ProblemSpec};
pub use oracle::{Budget, Mode, QueryTape};
pub use rng::RngStream;
