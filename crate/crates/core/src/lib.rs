//! Rao-Blackwellised particle filtering for dynamic Bayesian networks.
//!
//! Particles sample a "root" chain (robot locations, switching regimes)
//! while an exact conditional filter marginalizes the remaining hidden
//! state per particle: a Kalman filter for conditionally linear Gaussian
//! models, or factored per-cell color posteriors for the grid world. The
//! crate also ships exact-inference oracles (joint enumeration, the
//! fully-factorised Boyen-Koller baseline) and diagnostic harnesses that
//! put the estimator's statistical claims to the test at desk scale.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod filter;
pub mod grid;
pub mod jmls;
pub mod kalman;
pub mod mapbelief;
pub mod mcmc;
pub mod model;
pub mod oracle;
pub mod particle;
pub mod resample;
pub mod rngs;
pub mod stats;
pub mod weights;

pub use error::{
    ConfigError, DiagnosticsError, FilterError, KalmanError, OracleError, SelectionError,
    WeightError,
};
pub use filter::{
    init_particles, optimal_proposal, run_filter, run_filter_with, sis_step, FilterConfig,
    FilterTrace, McmcConfig, Proposal, ResamplePolicy, StepRecord,
};
pub use mcmc::mcmc_rejuvenate;
pub use model::{JointDraw, RbpfModel, TargetFn};
pub use particle::WeightedParticleSet;
pub use resample::{apply_selection, multinomial, residual, stratified, OffspringCounts, ResamplerKind};
pub use weights::{effective_sample_size, log_sum_exp, normalize, LogWeights};
