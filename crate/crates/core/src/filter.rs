//! The generic Rao-Blackwellised particle filter: sequential importance
//! sampling, selection, optional rejuvenation, and the trace bookkeeping
//! around them.
//!
//! Every random draw comes from a stream keyed by `(seed, phase, step,
//! particle)`, so runs are bit-reproducible for a given `(seed, model,
//! observations)` regardless of how the per-particle work is scheduled.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::FilterError;
use crate::mcmc::mcmc_rejuvenate;
use crate::model::RbpfModel;
use crate::particle::{ParticleWindow, WeightedParticleSet};
use crate::resample::{apply_selection, ResamplerKind};
use crate::rngs::{stream, Phase};
use crate::weights::{effective_sample_size, log_sum_exp, normalize, LogWeights};

/// How new roots are proposed in the SIS step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proposal {
    /// Sample from the root transition prior; the incremental weight is
    /// the conditional predictive likelihood.
    Prior,
    /// Sample proportional to likelihood times prior over the enumerated
    /// successors; the incremental weight is the one-step predictive and
    /// has zero variance given the particle's history.
    Optimal,
}

/// When the selection step runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ResamplePolicy {
    EveryStep,
    /// Resample when ESS drops below `tau * N`, `tau` in (0, 1].
    EssThreshold(f64),
}

/// MCMC rejuvenation applied after each selection step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum McmcConfig {
    Off,
    On { window: usize, moves: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub n_particles: usize,
    pub proposal: Proposal,
    pub resampler: ResamplerKind,
    pub resample_policy: ResamplePolicy,
    pub mcmc: McmcConfig,
    pub seed: u64,
}

impl FilterConfig {
    /// Prior proposal, multinomial selection every step, no rejuvenation.
    pub fn new(n_particles: usize, seed: u64) -> Self {
        FilterConfig {
            n_particles,
            proposal: Proposal::Prior,
            resampler: ResamplerKind::Multinomial,
            resample_policy: ResamplePolicy::EveryStep,
            mcmc: McmcConfig::Off,
            seed,
        }
    }

    pub fn validate<M: RbpfModel>(&self, model: &M) -> Result<(), FilterError> {
        if self.n_particles == 0 {
            return Err(FilterError::InvalidConfig("need at least one particle".into()));
        }
        if let ResamplePolicy::EssThreshold(tau) = self.resample_policy {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(FilterError::InvalidConfig(format!(
                    "ESS threshold {tau} not in (0,1]"
                )));
            }
        }
        if self.proposal == Proposal::Optimal && model.enumerate_roots().is_none() {
            return Err(FilterError::ProposalUnsupported);
        }
        if let McmcConfig::On { window, moves } = self.mcmc {
            if window == 0 || moves == 0 {
                return Err(FilterError::InvalidConfig(
                    "MCMC window and move count must be at least one".into(),
                ));
            }
            if model.enumerate_roots().is_none() {
                return Err(FilterError::McmcUnsupported);
            }
        }
        Ok(())
    }
}

/// Per-step diagnostics recorded by [`run_filter`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Normalized weights (linear space) after the SIS step.
    pub weights: Vec<f64>,
    pub ess: f64,
    /// `log p(y_t | y_{1:t-1})` estimate for this step.
    pub log_increment: f64,
    pub resampled: bool,
    /// Whatever the caller's estimate hook returned at this step.
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterTrace {
    pub steps: Vec<StepRecord>,
    /// Cumulative log-evidence, the sum of the per-step increments.
    pub log_evidence: f64,
}

/// Sample the initial particle set: roots from the model's initial
/// distribution, shared prior statistic, uniform weights.
pub fn init_particles<M: RbpfModel>(
    model: &M,
    cfg: &FilterConfig,
) -> WeightedParticleSet<M::Root, M::Stats> {
    let n = cfg.n_particles;
    let stats0 = model.init_stats();
    let roots: Vec<M::Root> = (0..n)
        .map(|i| model.sample_init_root(&mut stream(cfg.seed, Phase::InitRoot, 0, i)))
        .collect();
    let windows = match cfg.mcmc {
        McmcConfig::Off => None,
        McmcConfig::On { .. } => Some(
            roots
                .iter()
                .map(|r| ParticleWindow {
                    start: 0,
                    roots: vec![r.clone()],
                    checkpoint: stats0.clone(),
                })
                .collect(),
        ),
    };
    WeightedParticleSet {
        stats: vec![stats0; n],
        roots,
        weights: LogWeights::uniform(n),
        step: 0,
        windows,
    }
}

/// The optimal proposal for one particle: successors weighted by
/// likelihood times prior.
#[derive(Debug, Clone)]
pub struct OptimalProposal<R, S> {
    pub candidates: Vec<OptimalCandidate<R, S>>,
    /// `log p(y_t | y_{1:t-1}, r_{0:t-1})`, the normalizing sum; also the
    /// incremental weight of every draw.
    pub log_predictive: f64,
}

#[derive(Debug, Clone)]
pub struct OptimalCandidate<R, S> {
    pub root: R,
    pub stats: S,
    /// Conditional predictive log-likelihood of this successor.
    pub log_lik: f64,
    /// Normalized proposal probability.
    pub prob: f64,
}

impl<R, S> OptimalProposal<R, S> {
    pub fn sample<G: Rng>(&self, rng: &mut G) -> &OptimalCandidate<R, S> {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for cand in &self.candidates {
            cum += cand.prob;
            if u < cum {
                return cand;
            }
        }
        self.candidates.last().expect("non-empty by construction")
    }
}

/// Build the optimal proposal `q(r_t) ∝ p(y_t | ..., r_t) p(r_t | r_{t-1})`
/// over the enumerated successors of one particle.
pub fn optimal_proposal<M: RbpfModel>(
    model: &M,
    prev: &M::Root,
    stats: &M::Stats,
    obs: &M::Obs,
    step: usize,
) -> Result<OptimalProposal<M::Root, M::Stats>, FilterError> {
    let support = model
        .transition_support(prev, step)
        .ok_or(FilterError::ProposalUnsupported)?;
    let mut candidates = Vec::with_capacity(support.len());
    let mut log_joint = Vec::with_capacity(support.len());
    for root in support {
        let log_prior = model.transition_log_prob(prev, &root, step);
        if log_prior == f64::NEG_INFINITY {
            continue;
        }
        let (new_stats, log_lik) = model.cond_step(stats, prev, &root, obs, step);
        log_joint.push(log_lik + log_prior);
        candidates.push(OptimalCandidate {
            root,
            stats: new_stats,
            log_lik,
            prob: 0.0,
        });
    }
    let log_predictive = log_sum_exp(&log_joint);
    if log_predictive == f64::NEG_INFINITY {
        return Err(FilterError::ZeroPredictive);
    }
    for (cand, lj) in candidates.iter_mut().zip(&log_joint) {
        cand.prob = (lj - log_predictive).exp();
    }
    // Dead candidates contribute nothing; drop them so sampling never
    // returns a zero-probability root.
    candidates.retain(|c| c.prob > 0.0);
    Ok(OptimalProposal {
        candidates,
        log_predictive,
    })
}

/// Advance each particle one observation: draw a new root from the
/// configured proposal, advance the conditional statistic, and add the
/// incremental log-weight. Weights are left unnormalized.
///
/// Under the optimal proposal, a particle whose successors all have zero
/// predictive probability falls back to a prior draw and a `-inf` weight;
/// if that happens to every particle the subsequent normalization reports
/// total impoverishment.
pub fn sis_step<M: RbpfModel>(
    model: &M,
    ps: &mut WeightedParticleSet<M::Root, M::Stats>,
    obs: &M::Obs,
    cfg: &FilterConfig,
) -> Result<(), FilterError> {
    let t = ps.step + 1;
    if cfg.proposal == Proposal::Optimal && model.enumerate_roots().is_none() {
        return Err(FilterError::ProposalUnsupported);
    }
    for i in 0..ps.len() {
        let mut rng = stream(cfg.seed, Phase::Propose, t, i);
        let (root, stats, increment) = match cfg.proposal {
            Proposal::Prior => {
                let root = model.sample_transition(&ps.roots[i], t, &mut rng);
                let (stats, log_lik) = model.cond_step(&ps.stats[i], &ps.roots[i], &root, obs, t);
                (root, stats, log_lik)
            }
            Proposal::Optimal => {
                match optimal_proposal(model, &ps.roots[i], &ps.stats[i], obs, t) {
                    Ok(proposal) => {
                        let cand = proposal.sample(&mut rng);
                        (cand.root.clone(), cand.stats.clone(), proposal.log_predictive)
                    }
                    Err(FilterError::ZeroPredictive) => {
                        let root = model.sample_transition(&ps.roots[i], t, &mut rng);
                        let (stats, _) = model.cond_step(&ps.stats[i], &ps.roots[i], &root, obs, t);
                        (root, stats, f64::NEG_INFINITY)
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        ps.weights.values[i] += increment;
        if let Some(windows) = ps.windows.as_mut() {
            windows[i].roots.push(root.clone());
        }
        ps.roots[i] = root;
        ps.stats[i] = stats;
    }
    ps.step = t;
    Ok(())
}

/// Shrink each particle's history window to cover the last `window` roots
/// (plus their predecessor), replaying the conditional filter to move the
/// checkpoint forward. `observations` is the full prefix `y_1..y_t`.
pub fn advance_windows<M: RbpfModel>(
    model: &M,
    ps: &mut WeightedParticleSet<M::Root, M::Stats>,
    observations: &[M::Obs],
    window: usize,
) {
    let t = ps.step;
    let target = t.saturating_sub(window);
    let Some(windows) = ps.windows.as_mut() else {
        return;
    };
    for w in windows.iter_mut() {
        while w.start < target {
            let step = w.start + 1;
            let (next, _) = model.cond_step(&w.checkpoint, &w.roots[0], &w.roots[1], &observations[step - 1], step);
            w.checkpoint = next;
            w.roots.remove(0);
            w.start = step;
        }
    }
}

/// Run the full filter over an observation sequence.
///
/// Per step: SIS, normalization (recording the evidence increment and
/// ESS), selection per policy, then rejuvenation when configured and a
/// selection just ran. The estimate hook sees the set with normalized
/// weights before selection.
pub fn run_filter_with<M, F>(
    model: &M,
    observations: &[M::Obs],
    cfg: &FilterConfig,
    mut estimate: F,
) -> Result<(WeightedParticleSet<M::Root, M::Stats>, FilterTrace), FilterError>
where
    M: RbpfModel,
    F: FnMut(&WeightedParticleSet<M::Root, M::Stats>) -> Vec<f64>,
{
    cfg.validate(model)?;
    if observations.is_empty() {
        return Err(FilterError::InvalidConfig(
            "observation sequence is empty".into(),
        ));
    }
    let n = cfg.n_particles;
    let mut ps = init_particles(model, cfg);
    let mut trace = FilterTrace::default();
    for (idx, obs) in observations.iter().enumerate() {
        let t = idx + 1;
        sis_step(model, &mut ps, obs, cfg).map_err(|e| e.at_step(t))?;
        if let McmcConfig::On { window, .. } = cfg.mcmc {
            advance_windows(model, &mut ps, observations, window);
        }
        let (normalized, log_increment) =
            normalize(&ps.weights).map_err(|e| FilterError::from(e).at_step(t))?;
        let ess =
            effective_sample_size(&normalized).map_err(|e| FilterError::from(e).at_step(t))?;
        let probs: Vec<f64> = normalized.probabilities();
        // Carry normalized weights scaled to mean one so the next
        // increment stays log((1/N) sum exp(values)).
        ps.weights = LogWeights::new(
            normalized
                .values
                .iter()
                .map(|v| v + (n as f64).ln())
                .collect(),
        );
        let estimates = estimate(&ps);
        let resampled = match cfg.resample_policy {
            ResamplePolicy::EveryStep => true,
            ResamplePolicy::EssThreshold(tau) => ess < tau * n as f64,
        };
        if resampled {
            let counts = cfg
                .resampler
                .draw(&probs, n, &mut stream(cfg.seed, Phase::Select, t, 0));
            ps = apply_selection(&ps, &counts).map_err(|e| FilterError::from(e).at_step(t))?;
            if let McmcConfig::On { window, moves } = cfg.mcmc {
                let effective = window.min(t + 1);
                mcmc_rejuvenate(model, &mut ps, &observations[..t], effective, moves, cfg.seed)
                    .map_err(|e| e.at_step(t))?;
            }
        }
        trace.log_evidence += log_increment;
        trace.steps.push(StepRecord {
            step: t,
            weights: probs,
            ess,
            log_increment,
            resampled,
            estimates,
        });
    }
    Ok((ps, trace))
}

/// [`run_filter_with`] without an estimate hook.
pub fn run_filter<M: RbpfModel>(
    model: &M,
    observations: &[M::Obs],
    cfg: &FilterConfig,
) -> Result<(WeightedParticleSet<M::Root, M::Stats>, FilterTrace), FilterError> {
    run_filter_with(model, observations, cfg, |_| Vec::new())
}
