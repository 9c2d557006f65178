//! Error types shared across the filtering engine and its oracles.

use thiserror::Error;

/// Errors raised by weight bookkeeping.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightError {
    /// Every log-weight is negative infinity: the particle set has zero
    /// posterior mass and no normalization exists.
    #[error("all particle weights are zero (total impoverishment)")]
    AllWeightsZero,
    /// An operation requiring normalized weights received weights whose
    /// exponentials do not sum to one.
    #[error("weights are not normalized (exp-sum = {sum})")]
    NotNormalized { sum: f64 },
}

/// Errors raised by the particle-filter engine.
#[derive(Debug, Error)]
pub enum FilterError {
    #[error(transparent)]
    Weights(#[from] WeightError),
    /// The optimal proposal requires an enumerable root space.
    #[error("proposal requires a model with enumerable roots")]
    ProposalUnsupported,
    /// Every candidate successor assigns zero probability to the observation.
    #[error("predictive probability is zero under all root successors")]
    ZeroPredictive,
    /// MCMC rejuvenation requires an enumerable root space.
    #[error("MCMC rejuvenation requires a model with enumerable roots")]
    McmcUnsupported,
    /// The rejuvenation window extends past the start of the chain.
    #[error("MCMC window {window} exceeds chain length {chain_len}")]
    WindowTooLarge { window: usize, chain_len: usize },
    /// The particle set carries no root history, so windowed moves cannot
    /// be replayed.
    #[error("particle set carries no root-history window (was MCMC enabled at construction?)")]
    HistoryUnavailable,
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    /// An inner error tagged with the time step at which it occurred.
    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<FilterError>,
    },
}

impl FilterError {
    pub(crate) fn at_step(self, step: usize) -> FilterError {
        FilterError::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

/// Errors raised by selection (resampling).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("offspring counts sum to {got}, expected {expected}")]
    CountMismatch { expected: usize, got: usize },
}

/// Errors raised by the conditional Kalman filter.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KalmanError {
    /// The innovation covariance stayed non-invertible after jitter
    /// escalation.
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Errors raised by the exact-inference oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    /// The joint state space exceeds the enumeration guard.
    #[error("joint state space has {states:.3e} entries, limit is {limit:.3e}")]
    StateSpaceTooLarge { states: f64, limit: f64 },
}

/// Errors raised by diagnostic harnesses.
#[derive(Debug, Error)]
pub enum DiagnosticsError {
    /// The model cannot evaluate the conditional expectation of the
    /// requested function.
    #[error("model does not support the conditional expectation of the requested function")]
    UnsupportedFunction,
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Errors raised while loading model configuration files.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to parse model file: {0}")]
    Parse(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}
