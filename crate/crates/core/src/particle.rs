//! The weighted particle set and its root-history bookkeeping.

use crate::model::RbpfModel;
use crate::weights::LogWeights;

/// Rolling root history used by MCMC rejuvenation: the roots
/// `r_{start..=t}` of one particle together with the sufficient statistic
/// checkpointed at time `start`.
#[derive(Debug, Clone)]
pub struct ParticleWindow<R, S> {
    /// Time index of `roots[0]` and of `checkpoint`.
    pub start: usize,
    /// Roots `r_start, ..., r_t` in time order.
    pub roots: Vec<R>,
    /// Sufficient statistic at time `start`, i.e. after observation
    /// `y_start` (the initial statistic when `start == 0`).
    pub checkpoint: S,
}

/// N root-chain states with their conditional sufficient statistics and
/// log-weights.
///
/// Weights are stored in the "mean one" convention between steps: a freshly
/// resampled set has all log-weights zero, and an un-resampled set carries
/// `log(N * w_i)` so that the next evidence increment is
/// `log((1/N) * sum exp(values))`.
#[derive(Debug, Clone)]
pub struct WeightedParticleSet<R, S> {
    pub roots: Vec<R>,
    pub stats: Vec<S>,
    pub weights: LogWeights,
    /// Number of observations absorbed so far.
    pub step: usize,
    /// Root-history windows, present when rejuvenation bookkeeping is
    /// enabled.
    pub windows: Option<Vec<ParticleWindow<R, S>>>,
}

impl<R, S> WeightedParticleSet<R, S> {
    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }
}

impl<R: Clone + PartialEq, S: Clone> WeightedParticleSet<R, S> {

    /// Normalized linear-space weights. Assumes the mean-one convention.
    pub fn normalized_probabilities(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.weights.values.iter().map(|v| v.exp() / n).collect()
    }

    /// Weighted average of a per-particle scalar.
    pub fn weighted_mean(&self, f: impl Fn(&R, &S) -> f64) -> f64 {
        let probs = self.normalized_probabilities();
        self.roots
            .iter()
            .zip(self.stats.iter())
            .zip(probs.iter())
            .map(|((r, s), w)| w * f(r, s))
            .sum()
    }

    /// Build a set from explicit root trajectories by replaying the
    /// conditional filter along each one. Weights are uniform; a history
    /// window of coverage `window` is attached so the set can feed MCMC
    /// rejuvenation directly.
    ///
    /// Each trajectory must hold `observations.len() + 1` roots
    /// (`r_0 ..= r_T`).
    pub fn from_trajectories<M>(
        model: &M,
        trajectories: &[Vec<R>],
        observations: &[M::Obs],
        window: Option<usize>,
    ) -> Self
    where
        M: RbpfModel<Root = R, Stats = S>,
    {
        let t_len = observations.len();
        let n = trajectories.len();
        let mut roots = Vec::with_capacity(n);
        let mut stats = Vec::with_capacity(n);
        let mut windows = window.map(|_| Vec::with_capacity(n));
        for traj in trajectories {
            assert_eq!(
                traj.len(),
                t_len + 1,
                "trajectory must cover r_0..=r_T for T observations"
            );
            let mut s = model.init_stats();
            let mut checkpoint = (0usize, s.clone());
            let hold_from = window.map(|k| t_len.saturating_sub(k)).unwrap_or(t_len);
            for (idx, y) in observations.iter().enumerate() {
                let step = idx + 1;
                let (next, _ll) = model.cond_step(&s, &traj[step - 1], &traj[step], y, step);
                s = next;
                if step <= hold_from {
                    checkpoint = (step, s.clone());
                }
            }
            if let Some(ws) = windows.as_mut() {
                let (start, cp) = checkpoint;
                ws.push(ParticleWindow {
                    start,
                    roots: traj[start..].to_vec(),
                    checkpoint: cp,
                });
            }
            roots.push(traj[t_len].clone());
            stats.push(s);
        }
        WeightedParticleSet {
            roots,
            stats,
            weights: LogWeights::uniform(n),
            step: t_len,
            windows,
        }
    }
}
