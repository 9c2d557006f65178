//! The model interface the particle-filter engine runs against.
//!
//! A model splits its hidden state into a sampled "root" chain and a
//! conditionally tractable remainder. The engine only ever sees the root
//! chain and an opaque sufficient statistic; the statistic carries the
//! exact conditional posterior of the marginalized variables and yields
//! the predictive log-likelihood that drives the particle weights.

use rand::Rng;

/// State-space model with a sampled root chain and an exactly filtered
/// conditional remainder.
///
/// Time indexing: observations are 1-based (`y_1 ... y_T`); the `step`
/// argument names the observation a transition leads into. Transition
/// kernels may be time-varying (the grid model reads an action script).
pub trait RbpfModel {
    /// Root-chain state (a grid cell, a regime index, ...).
    type Root: Clone + PartialEq + Send + Sync;
    /// Conditional sufficient statistic for the marginalized variables.
    type Stats: Clone + Send + Sync;
    /// Observation type.
    type Obs: Clone + Send + Sync;

    fn sample_init_root<R: Rng>(&self, rng: &mut R) -> Self::Root;

    /// Log-probability of `root` under the initial distribution.
    fn init_root_log_prob(&self, root: &Self::Root) -> f64;

    /// Sufficient statistic of the conditional prior, before any
    /// observation. Shared by all particles regardless of their root.
    fn init_stats(&self) -> Self::Stats;

    fn sample_transition<R: Rng>(&self, prev: &Self::Root, step: usize, rng: &mut R)
        -> Self::Root;

    /// Pointwise log of `p(next | prev)` at `step`.
    fn transition_log_prob(&self, prev: &Self::Root, next: &Self::Root, step: usize) -> f64;

    /// Advance the conditional filter through observation `step` along the
    /// root move `prev -> next`. Returns the updated statistic and the
    /// conditional predictive log-likelihood
    /// `log p(y_step | y_{1:step-1}, r_{0:step})`, which must be finite or
    /// `-inf`, never NaN.
    fn cond_step(
        &self,
        stats: &Self::Stats,
        prev: &Self::Root,
        next: &Self::Root,
        obs: &Self::Obs,
        step: usize,
    ) -> (Self::Stats, f64);

    /// All root values, when the root space is finite and small enough to
    /// enumerate. Required by the optimal proposal, MCMC rejuvenation and
    /// the enumeration oracles.
    fn enumerate_roots(&self) -> Option<Vec<Self::Root>> {
        None
    }

    /// Successors of `prev` with nonzero transition probability. The
    /// default scans the enumerated root space; models with sparse kernels
    /// can override.
    fn transition_support(&self, prev: &Self::Root, step: usize) -> Option<Vec<Self::Root>> {
        self.enumerate_roots().map(|roots| {
            roots
                .into_iter()
                .filter(|r| self.transition_log_prob(prev, r, step) > f64::NEG_INFINITY)
                .collect()
        })
    }
}

/// Models that can additionally sample the marginalized variables jointly
/// with the root chain, as a plain (non-Rao-Blackwellised) particle filter
/// would. Used by the estimator-comparison diagnostics.
pub trait JointDraw: RbpfModel {
    /// The marginalized state (a map configuration, a continuous state).
    type Marg: Clone + Send + Sync;

    fn sample_init_marg<R: Rng>(&self, rng: &mut R) -> Self::Marg;

    fn sample_marg_transition<R: Rng>(
        &self,
        prev: &Self::Marg,
        prev_root: &Self::Root,
        next_root: &Self::Root,
        step: usize,
        rng: &mut R,
    ) -> Self::Marg;

    /// Log of `p(y_step | root, marg)`, the full-state observation density.
    fn joint_obs_log_lik(
        &self,
        root: &Self::Root,
        marg: &Self::Marg,
        obs: &Self::Obs,
        step: usize,
    ) -> f64;
}

/// A function of the hidden state with both a pointwise evaluation on full
/// joint samples and a closed-form conditional expectation given the root
/// chain and its sufficient statistic.
pub trait TargetFn<M: JointDraw> {
    /// `f(r_t, x_t)` on a jointly sampled particle.
    fn joint(&self, root: &M::Root, marg: &M::Marg) -> f64;

    /// `E[f(r_t, x_t) | r_{0:t}, y_{1:t}]` from the sufficient statistic,
    /// or `None` when the model cannot evaluate it.
    fn conditional(&self, root: &M::Root, stats: &M::Stats) -> Option<f64>;
}
