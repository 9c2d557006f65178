//! Empirical verification harnesses for the statistical claims the filter
//! rests on: Rao-Blackwellised versus plain estimator comparison, weight
//! degeneracy growth under pure SIS, and mean-square-error scaling in the
//! particle count.
//!
//! Trials are independent jobs fanned across workers with per-trial seeds;
//! results are collected in trial order so reports do not depend on the
//! worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::DiagnosticsError;
use crate::filter::{run_filter_with, FilterConfig};
use crate::model::{JointDraw, RbpfModel, TargetFn};
use crate::particle::WeightedParticleSet;
use crate::rngs::{derive_seed, stream, Phase};
use crate::stats::{mann_kendall_z, mean, ols_slope, variance, variance_excess_z, Thresholds};
use crate::weights::{log_sum_exp, normalize, LogWeights};

/// Total variation distance between two distributions on the same support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions on different supports");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub mean: f64,
    pub variance: f64,
    pub mse: f64,
}

fn estimator_stats(samples: &[f64], truth: f64) -> EstimatorStats {
    EstimatorStats {
        mean: mean(samples),
        variance: variance(samples),
        mse: samples.iter().map(|x| (x - truth).powi(2)).sum::<f64>() / samples.len() as f64,
    }
}

/// Side-by-side comparison of the plain and Rao-Blackwellised importance
/// sampling estimators over repeated trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub trials: usize,
    pub n_particles: usize,
    pub truth: f64,
    pub plain: EstimatorStats,
    pub rao_blackwellised: EstimatorStats,
    /// z-statistic for `var(plain) > var(rb)`; large positive values mean
    /// the variance reduction is significant.
    pub variance_reduction_z: f64,
    pub variance_reduction_significant: bool,
    /// Paired-seed batches in which the RB batch MSE was no worse.
    pub mse_batches: usize,
    pub mse_rb_no_worse: usize,
    pub mse_rb_no_worse_frac: f64,
    /// |mean(rb) - mean(plain)| in combined standard errors.
    pub means_diff_z: f64,
}

/// One importance-sampling pass (prior proposal, no selection) with both
/// estimators coupled on the same root-chain draws. Returns
/// `(plain estimate, rb estimate)`.
fn paired_is_estimates<M, F>(
    model: &M,
    observations: &[M::Obs],
    n_particles: usize,
    trial_seed: u64,
    f: &F,
) -> (f64, f64)
where
    M: JointDraw,
    F: TargetFn<M>,
{
    let mut roots: Vec<M::Root> = (0..n_particles)
        .map(|i| model.sample_init_root(&mut stream(trial_seed, Phase::InitRoot, 0, i)))
        .collect();
    let mut margs: Vec<M::Marg> = (0..n_particles)
        .map(|i| model.sample_init_marg(&mut stream(trial_seed, Phase::Trial, 0, i)))
        .collect();
    let mut stats: Vec<M::Stats> = vec![model.init_stats(); n_particles];
    let mut logw_rb = vec![0.0f64; n_particles];
    let mut logw_plain = vec![0.0f64; n_particles];

    for (idx, obs) in observations.iter().enumerate() {
        let step = idx + 1;
        for i in 0..n_particles {
            // Both estimators reuse this root draw: paired seeding.
            let next = model.sample_transition(&roots[i], step, &mut stream(trial_seed, Phase::Propose, step, i));
            let (new_stats, ll) = model.cond_step(&stats[i], &roots[i], &next, obs, step);
            logw_rb[i] += ll;
            let marg = model.sample_marg_transition(
                &margs[i],
                &roots[i],
                &next,
                step,
                &mut stream(trial_seed, Phase::Trial, step, i),
            );
            logw_plain[i] += model.joint_obs_log_lik(&next, &marg, obs, step);
            roots[i] = next;
            stats[i] = new_stats;
            margs[i] = marg;
        }
    }

    let weighted_avg = |logw: &[f64], values: &[f64]| -> f64 {
        let lse = log_sum_exp(logw);
        if lse == f64::NEG_INFINITY {
            return f64::NAN;
        }
        logw.iter()
            .zip(values)
            .map(|(lw, v)| (lw - lse).exp() * v)
            .sum()
    };

    let rb_values: Vec<f64> = roots
        .iter()
        .zip(&stats)
        .map(|(r, s)| f.conditional(r, s).expect("probed before trials"))
        .collect();
    let plain_values: Vec<f64> = roots
        .iter()
        .zip(&margs)
        .map(|(r, m)| f.joint(r, m))
        .collect();
    (
        weighted_avg(&logw_plain, &plain_values),
        weighted_avg(&logw_rb, &rb_values),
    )
}

/// Run `trials` paired one-pass importance-sampling estimates of
/// `E[f | y_{1:T}]` with both the plain and the Rao-Blackwellised
/// estimator, and test the variance reduction.
///
/// `truth` is the oracle value of the expectation (from exact enumeration
/// or an exact conditional filter).
#[allow(clippy::too_many_arguments)]
pub fn compare_estimators<M, F>(
    model: &M,
    f: &F,
    observations: &[M::Obs],
    n_particles: usize,
    trials: usize,
    truth: f64,
    seed: u64,
    thresholds: &Thresholds,
) -> Result<EstimatorReport, DiagnosticsError>
where
    M: JointDraw + Sync,
    M::Obs: Sync,
    F: TargetFn<M> + Sync,
{
    // Probe conditional-expectation support once up front.
    let probe_root = model.sample_init_root(&mut stream(seed, Phase::InitRoot, 0, 0));
    if f.conditional(&probe_root, &model.init_stats()).is_none() {
        return Err(DiagnosticsError::UnsupportedFunction);
    }

    let estimates: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|k| paired_is_estimates(model, observations, n_particles, derive_seed(seed, k as u64), f))
        .collect();
    let plain: Vec<f64> = estimates.iter().map(|e| e.0).collect();
    let rb: Vec<f64> = estimates.iter().map(|e| e.1).collect();

    let z = variance_excess_z(&plain, &rb);
    // Paired-seed MSE comparison in batches: each batch is a replicate
    // experiment; count how often the RB batch MSE is no worse.
    let batch = (trials / 20).max(10).min(trials);
    let mut batches = 0usize;
    let mut rb_no_worse = 0usize;
    let mut start = 0usize;
    while start + batch <= trials {
        let mse = |xs: &[f64]| xs.iter().map(|x| (x - truth).powi(2)).sum::<f64>() / batch as f64;
        if mse(&rb[start..start + batch]) <= mse(&plain[start..start + batch]) {
            rb_no_worse += 1;
        }
        batches += 1;
        start += batch;
    }

    let plain_stats = estimator_stats(&plain, truth);
    let rb_stats = estimator_stats(&rb, truth);
    let combined_se = ((plain_stats.variance + rb_stats.variance) / trials as f64).sqrt();
    let means_diff_z = if combined_se == 0.0 {
        0.0
    } else {
        (rb_stats.mean - plain_stats.mean).abs() / combined_se
    };

    Ok(EstimatorReport {
        trials,
        n_particles,
        truth,
        plain: plain_stats,
        rao_blackwellised: rb_stats,
        variance_reduction_z: z,
        variance_reduction_significant: z > thresholds.variance_z_crit(),
        mse_batches: batches,
        mse_rb_no_worse: rb_no_worse,
        mse_rb_no_worse_frac: rb_no_worse as f64 / batches.max(1) as f64,
        means_diff_z,
    })
}

/// Per-step weight degeneracy of pure SIS (prior proposal, no selection),
/// measured over freshly simulated observation sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyTrace {
    /// Across replicates and particles: variance of the importance ratio
    /// `w(r_{0:t}) / p(y_{1:t})`, whose mean is one at every step.
    pub weight_variance: Vec<f64>,
    /// Mean over replicates of the largest normalized weight.
    pub mean_max_weight: Vec<f64>,
    pub mann_kendall_z: f64,
    pub increasing_trend_significant: bool,
}

/// Measure Prop-4-style degeneracy: for each replicate, simulate a fresh
/// observation sequence, run SIS without selection, and track the
/// evidence-normalized weight variance per step.
///
/// `simulate` draws the observations for a replicate seed;
/// `log_evidence_prefix` returns the exact `log p(y_{1:t})` for every
/// prefix (an enumeration-oracle closure).
pub fn weight_variance_trace<M, SimF, EvF>(
    model: &M,
    simulate: SimF,
    log_evidence_prefix: EvF,
    n_particles: usize,
    horizon: usize,
    replicates: usize,
    seed: u64,
    thresholds: &Thresholds,
) -> DegeneracyTrace
where
    M: RbpfModel + Sync,
    M::Obs: Sync + Send,
    SimF: Fn(u64) -> Vec<M::Obs> + Sync,
    EvF: Fn(&[M::Obs]) -> Vec<f64> + Sync,
{
    struct ReplicateSummary {
        sum_w: Vec<f64>,
        sum_w2: Vec<f64>,
        max_norm: Vec<f64>,
    }

    let summaries: Vec<ReplicateSummary> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(seed, r as u64);
            let observations = simulate(rep_seed);
            assert!(observations.len() >= horizon, "simulator returned too few observations");
            let observations = &observations[..horizon];
            let evidence = log_evidence_prefix(observations);
            assert_eq!(evidence.len(), horizon);

            let mut roots: Vec<M::Root> = (0..n_particles)
                .map(|i| model.sample_init_root(&mut stream(rep_seed, Phase::InitRoot, 0, i)))
                .collect();
            let mut stats: Vec<M::Stats> = vec![model.init_stats(); n_particles];
            let mut logw = vec![0.0f64; n_particles];
            let mut sum_w = Vec::with_capacity(horizon);
            let mut sum_w2 = Vec::with_capacity(horizon);
            let mut max_norm = Vec::with_capacity(horizon);
            for (idx, obs) in observations.iter().enumerate() {
                let step = idx + 1;
                for i in 0..n_particles {
                    let next = model.sample_transition(
                        &roots[i],
                        step,
                        &mut stream(rep_seed, Phase::Propose, step, i),
                    );
                    let (new_stats, ll) = model.cond_step(&stats[i], &roots[i], &next, obs, step);
                    logw[i] += ll;
                    roots[i] = next;
                    stats[i] = new_stats;
                }
                let ratios: Vec<f64> = logw.iter().map(|lw| (lw - evidence[idx]).exp()).collect();
                sum_w.push(ratios.iter().sum::<f64>());
                sum_w2.push(ratios.iter().map(|w| w * w).sum::<f64>());
                let lse = log_sum_exp(&logw);
                let max_lw = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                max_norm.push(if lse == f64::NEG_INFINITY {
                    f64::NAN
                } else {
                    (max_lw - lse).exp()
                });
            }
            ReplicateSummary {
                sum_w,
                sum_w2,
                max_norm,
            }
        })
        .collect();

    let draws = (replicates * n_particles) as f64;
    let mut weight_variance = Vec::with_capacity(horizon);
    let mut mean_max_weight = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let sw: f64 = summaries.iter().map(|s| s.sum_w[t]).sum();
        let sw2: f64 = summaries.iter().map(|s| s.sum_w2[t]).sum();
        let m = sw / draws;
        weight_variance.push((sw2 / draws - m * m).max(0.0));
        mean_max_weight
            .push(summaries.iter().map(|s| s.max_norm[t]).sum::<f64>() / replicates as f64);
    }
    let z = mann_kendall_z(&weight_variance);
    DegeneracyTrace {
        weight_variance,
        mean_max_weight,
        mann_kendall_z: z,
        increasing_trend_significant: z > thresholds.trend_z_crit(),
    }
}

/// Empirical MSE of a filter estimate at a fixed horizon, for each
/// particle count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseTable {
    pub rows: Vec<MseRow>,
    /// Log-log regression slope of MSE on N.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub n_particles: usize,
    pub mse: f64,
}

/// Run `trials` full filter passes per particle count and tabulate the
/// MSE of `estimate` (evaluated on the final particle set) against the
/// oracle `truth`.
pub fn mse_vs_n<M, EstF>(
    model: &M,
    observations: &[M::Obs],
    base: &FilterConfig,
    ns: &[usize],
    trials: usize,
    truth: f64,
    estimate: EstF,
    seed: u64,
) -> Result<MseTable, DiagnosticsError>
where
    M: RbpfModel + Sync,
    M::Obs: Sync,
    M::Root: Send,
    M::Stats: Send,
    EstF: Fn(&WeightedParticleSet<M::Root, M::Stats>) -> f64 + Sync,
{
    let mut rows = Vec::with_capacity(ns.len());
    for (ni, &n) in ns.iter().enumerate() {
        let errors: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|k| {
                let mut cfg = base.clone();
                cfg.n_particles = n;
                cfg.seed = derive_seed(seed, (ni * trials + k) as u64);
                let mut value = f64::NAN;
                let result = run_filter_with(model, observations, &cfg, |ps| {
                    value = estimate(ps);
                    Vec::new()
                });
                result.map(|_| (value - truth).powi(2))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(MseRow {
            n_particles: n,
            mse: mean(&errors),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n_particles as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mse.max(1e-300).ln()).collect();
    Ok(MseTable {
        slope: ols_slope(&xs, &ys),
        rows,
    })
}

/// Final normalized weights of a pure-SIS pass (prior proposal, no
/// selection); used by the perfect-proposal uniformity check.
pub fn sis_final_weights<M: RbpfModel>(
    model: &M,
    observations: &[M::Obs],
    n_particles: usize,
    seed: u64,
) -> Vec<f64> {
    let mut roots: Vec<M::Root> = (0..n_particles)
        .map(|i| model.sample_init_root(&mut stream(seed, Phase::InitRoot, 0, i)))
        .collect();
    let mut stats: Vec<M::Stats> = vec![model.init_stats(); n_particles];
    let mut logw = LogWeights::uniform(n_particles);
    for (idx, obs) in observations.iter().enumerate() {
        let step = idx + 1;
        for i in 0..n_particles {
            let next =
                model.sample_transition(&roots[i], step, &mut stream(seed, Phase::Propose, step, i));
            let (new_stats, ll) = model.cond_step(&stats[i], &roots[i], &next, obs, step);
            logw.values[i] += ll;
            roots[i] = next;
            stats[i] = new_stats;
        }
    }
    normalize(&logw).expect("weights alive").0.probabilities()
}
