//! MCMC rejuvenation: single-site Metropolis-Hastings over the recent root
//! history of each particle, leaving the root-chain posterior invariant.
//!
//! The proposal redraws a site from its prior transition, so the prior
//! terms cancel and the acceptance ratio reduces to the successor
//! transition probability and the conditional likelihoods replayed from
//! the pre-window checkpoint. Weights are untouched: the kernel is applied
//! right after selection, on uniform weights.

use rand::Rng;

use crate::error::FilterError;
use crate::model::RbpfModel;
use crate::particle::{ParticleWindow, WeightedParticleSet};
use crate::rngs::{stream, Phase};

/// Apply `moves` sweeps of single-site MH over the last `window` root
/// values of each particle. `observations` must be the full prefix
/// `y_1..y_t` absorbed so far.
pub fn mcmc_rejuvenate<M: RbpfModel>(
    model: &M,
    ps: &mut WeightedParticleSet<M::Root, M::Stats>,
    observations: &[M::Obs],
    window: usize,
    moves: usize,
    seed: u64,
) -> Result<(), FilterError> {
    let t = ps.step;
    assert_eq!(
        observations.len(),
        t,
        "need exactly the observations absorbed so far"
    );
    if window > t + 1 {
        return Err(FilterError::WindowTooLarge {
            window,
            chain_len: t + 1,
        });
    }
    if moves == 0 || window == 0 {
        return Ok(());
    }
    if model.enumerate_roots().is_none() {
        return Err(FilterError::McmcUnsupported);
    }
    if ps.windows.is_none() {
        return Err(FilterError::HistoryUnavailable);
    }

    // First site that may move; its predecessor (if any) must be held.
    let site_min = t + 1 - window;
    let needed_start = site_min.saturating_sub(1);

    let n = ps.len();
    for i in 0..n {
        let w = &ps.windows.as_ref().expect("checked")[i];
        if w.start > needed_start {
            return Err(FilterError::HistoryUnavailable);
        }
        let mut rng = stream(seed, Phase::Mcmc, t, i);
        let (new_window, new_stats) =
            rejuvenate_particle(model, w, observations, site_min, moves, &mut rng);
        ps.windows.as_mut().expect("checked")[i] = new_window;
        ps.roots[i] = ps.windows.as_ref().expect("checked")[i]
            .roots
            .last()
            .expect("window non-empty")
            .clone();
        ps.stats[i] = new_stats;
    }
    Ok(())
}

fn rejuvenate_particle<M: RbpfModel, G: Rng>(
    model: &M,
    window: &ParticleWindow<M::Root, M::Stats>,
    observations: &[M::Obs],
    site_min: usize,
    moves: usize,
    rng: &mut G,
) -> (ParticleWindow<M::Root, M::Stats>, M::Stats) {
    let t = observations.len();
    let start = window.start;
    let span = t - start; // number of observation steps replayed
    let mut roots = window.roots.clone();
    debug_assert_eq!(roots.len(), span + 1);

    // chain[j] = statistic at time start + j under the current roots;
    // lls[j-1] = conditional log-likelihood of observation start + j.
    let mut chain: Vec<M::Stats> = Vec::with_capacity(span + 1);
    let mut lls: Vec<f64> = Vec::with_capacity(span);
    chain.push(window.checkpoint.clone());
    for j in 1..=span {
        let step = start + j;
        let (stats, ll) = model.cond_step(
            &chain[j - 1],
            &roots[j - 1],
            &roots[j],
            &observations[step - 1],
            step,
        );
        chain.push(stats);
        lls.push(ll);
    }

    for _ in 0..moves {
        for site in site_min..=t {
            let idx = site - start;
            let proposed = if site == 0 {
                model.sample_init_root(rng)
            } else {
                model.sample_transition(&roots[idx - 1], site, rng)
            };
            if proposed == roots[idx] {
                continue;
            }

            let mut log_ratio = 0.0;
            if idx < span {
                log_ratio += model.transition_log_prob(&proposed, &roots[idx + 1], site + 1);
                log_ratio -= model.transition_log_prob(&roots[idx], &roots[idx + 1], site + 1);
            }

            // Replay the conditional filter from the site onward with the
            // proposed root substituted.
            let replay_from = idx.max(1);
            let mut new_chain_tail: Vec<M::Stats> = Vec::with_capacity(span - replay_from + 1);
            let mut new_lls_tail: Vec<f64> = Vec::with_capacity(span - replay_from + 1);
            let mut prev_stats = chain[replay_from - 1].clone();
            for j in replay_from..=span {
                let step = start + j;
                let prev_root = if j - 1 == idx { &proposed } else { &roots[j - 1] };
                let next_root = if j == idx { &proposed } else { &roots[j] };
                let (stats, ll) = model.cond_step(
                    &prev_stats,
                    prev_root,
                    next_root,
                    &observations[step - 1],
                    step,
                );
                log_ratio += ll - lls[j - 1];
                prev_stats = stats.clone();
                new_chain_tail.push(stats);
                new_lls_tail.push(ll);
            }

            let u: f64 = 1.0 - rng.random::<f64>();
            if u.ln() < log_ratio {
                roots[idx] = proposed;
                for (offset, stats) in new_chain_tail.into_iter().enumerate() {
                    chain[replay_from + offset] = stats;
                }
                for (offset, ll) in new_lls_tail.into_iter().enumerate() {
                    lls[replay_from + offset - 1] = ll;
                }
            }
        }
    }

    let final_stats = chain.last().expect("non-empty").clone();
    (
        ParticleWindow {
            start,
            roots,
            checkpoint: window.checkpoint.clone(),
        },
        final_stats,
    )
}
