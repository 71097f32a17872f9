//! Ensemble statistics: accumulation, estimators, chaos projections, reports.

pub mod accumulator;
pub mod chaos;
pub mod ensemble;
pub mod estimators;
pub mod observables;
pub mod report;

pub use accumulator::{EnsembleAccumulator, Estimate, Moments, Record};
pub use chaos::{chaos_project, first_chaos_kernel, pi3_lower_bound, pi3_refined, ChaosProjection, FirstChaosBasis, WickPlan};
pub use ensemble::{ensemble_run, run_chunked, run_replicas, EnsembleSpec};
pub use estimators::{
    coming_down_check, cross_correlation, cross_covariance, decorrelation_test, free_pairing_variance,
    free_point_covariance, gaussianity_report, lambda_monotonicity, pointwise_cross_moment, sigma_lambda_estimate,
    variance_two_sided, DecorrelationProfile, MonotonicityVerdict,
};
pub use observables::{Observable, Probe, Registry};
pub use report::{Check, MomentReport, Rule};
