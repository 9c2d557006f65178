//! Ground-truth inference for desk-scale verification: exact joint
//! filtering of the grid world by enumeration, the fully-factorised
//! Boyen-Koller baseline, brute-force conditional map posteriors for
//! clamped trajectories, and exhaustive root-trajectory posteriors for any
//! enumerable model.

use crate::error::OracleError;
use crate::grid::{GridObservation, GridWorldModel, MapPrior};
use crate::mapbelief::sensor_likelihood;
use crate::model::RbpfModel;
use crate::weights::log_sum_exp;

/// Enumeration guard: joint tables above this many entries are refused.
pub const ORACLE_STATE_LIMIT: f64 = 1e6;

/// Number of entries in the joint (location, map) table.
pub fn joint_size(model: &GridWorldModel) -> f64 {
    let nl = model.n_cells() as f64;
    nl * (model.n_colors as f64).powf(model.n_cells() as f64)
}

/// Exact joint belief over `(L_t, M_t(0..N_L-1))`.
///
/// States are indexed location-major: `index = loc * n_colors^n_cells +
/// code`, with `code = sum_i map[i] * n_colors^i` (cell 0 least
/// significant).
#[derive(Debug, Clone, PartialEq)]
pub struct JointBelief {
    pub probs: Vec<f64>,
    pub n_cells: usize,
    pub n_colors: usize,
}

impl JointBelief {
    pub fn n_maps(&self) -> usize {
        self.n_colors.pow(self.n_cells as u32)
    }

    pub fn decode_map(&self, mut code: usize) -> Vec<usize> {
        let mut map = Vec::with_capacity(self.n_cells);
        for _ in 0..self.n_cells {
            map.push(code % self.n_colors);
            code /= self.n_colors;
        }
        map
    }

    pub fn encode_map(&self, map: &[usize]) -> usize {
        map.iter()
            .rev()
            .fold(0usize, |acc, &c| acc * self.n_colors + c)
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Initial joint belief: the location prior times the per-cell map prior.
pub fn exact_init(model: &GridWorldModel) -> Result<JointBelief, OracleError> {
    let size = joint_size(model);
    if !(size <= ORACLE_STATE_LIMIT) {
        return Err(OracleError::StateSpaceTooLarge {
            states: size,
            limit: ORACLE_STATE_LIMIT,
        });
    }
    let n_cells = model.n_cells();
    let n_maps = model.n_colors.pow(n_cells as u32);
    let mut belief = JointBelief {
        probs: vec![0.0; n_cells * n_maps],
        n_cells,
        n_colors: model.n_colors,
    };
    match model.map_prior {
        MapPrior::Uniform => {
            let p_map = 1.0 / n_maps as f64;
            for (loc, &pl) in model.init_location.iter().enumerate() {
                for code in 0..n_maps {
                    belief.probs[loc * n_maps + code] = pl * p_map;
                }
            }
        }
        MapPrior::Known => {
            let code = belief.encode_map(model.true_map.as_ref().expect("validated"));
            for (loc, &pl) in model.init_location.iter().enumerate() {
                belief.probs[loc * n_maps + code] = pl;
            }
        }
    }
    Ok(belief)
}

fn apply_location_kernel(belief: &JointBelief, model: &GridWorldModel, step: usize) -> JointBelief {
    let n_maps = belief.n_maps();
    let mut out = JointBelief {
        probs: vec![0.0; belief.probs.len()],
        ..belief.clone()
    };
    let action = model.action_at(step);
    for loc in 0..belief.n_cells {
        for (next, p) in model.transition_distribution(loc, action) {
            for code in 0..n_maps {
                out.probs[next * n_maps + code] += p * belief.probs[loc * n_maps + code];
            }
        }
    }
    out
}

fn apply_map_change_kernel(belief: &JointBelief, model: &GridWorldModel) -> JointBelief {
    if model.p_change == 0.0 {
        return belief.clone();
    }
    let nc = belief.n_colors;
    let keep = 1.0 - model.p_change;
    let flip = model.p_change / (nc as f64 - 1.0);
    let mut probs = belief.probs.clone();
    // Contract one cell dimension at a time.
    let mut stride = 1usize;
    for _cell in 0..belief.n_cells {
        let mut next = vec![0.0; probs.len()];
        let block = stride * nc;
        for base in (0..probs.len()).step_by(block) {
            for rem in 0..stride {
                for c_new in 0..nc {
                    let mut acc = 0.0;
                    for c_old in 0..nc {
                        let k = if c_new == c_old { keep } else { flip };
                        acc += k * probs[base + rem + c_old * stride];
                    }
                    next[base + rem + c_new * stride] = acc;
                }
            }
        }
        probs = next;
        stride *= nc;
    }
    JointBelief {
        probs,
        ..belief.clone()
    }
}

/// One exact HMM forward step over the joint chain: propagate the location
/// and map-change kernels, weight by the sensor likelihood, normalize.
/// Returns the new belief and `log p(y_t | y_{1:t-1})`.
pub fn exact_filter_step(
    belief: &JointBelief,
    model: &GridWorldModel,
    step: usize,
    obs: &GridObservation,
) -> (JointBelief, f64) {
    let moved = apply_location_kernel(belief, model, step);
    let mut diffused = apply_map_change_kernel(&moved, model);
    let n_maps = diffused.n_maps();
    for loc in 0..diffused.n_cells {
        for code in 0..n_maps {
            let idx = loc * n_maps + code;
            if diffused.probs[idx] == 0.0 {
                continue;
            }
            let map = diffused.decode_map(code);
            let ll = model.obs_log_lik_given_map(loc, &map, obs);
            diffused.probs[idx] *= if ll == f64::NEG_INFINITY { 0.0 } else { ll.exp() };
        }
    }
    let mass = diffused.total_mass();
    let log_pred = mass.ln();
    if mass > 0.0 {
        for p in &mut diffused.probs {
            *p /= mass;
        }
    }
    (diffused, log_pred)
}

/// Exact marginalization of the joint table: the location marginal and the
/// per-cell color marginals (`n_cells x n_colors`, row-major).
pub fn exact_marginals(belief: &JointBelief) -> (Vec<f64>, Vec<f64>) {
    let n_maps = belief.n_maps();
    let nc = belief.n_colors;
    let mut loc = vec![0.0; belief.n_cells];
    let mut cells = vec![0.0; belief.n_cells * nc];
    for l in 0..belief.n_cells {
        for code in 0..n_maps {
            let p = belief.probs[l * n_maps + code];
            if p == 0.0 {
                continue;
            }
            loc[l] += p;
            let map = belief.decode_map(code);
            for (cell, &color) in map.iter().enumerate() {
                cells[cell * nc + color] += p;
            }
        }
    }
    (loc, cells)
}

/// Full exact filtering pass over an observation sequence.
#[derive(Debug, Clone)]
pub struct ExactTrace {
    pub loc_marginals: Vec<Vec<f64>>,
    pub map_marginals: Vec<Vec<f64>>,
    pub log_increments: Vec<f64>,
    pub log_evidence: f64,
}

pub fn exact_run(
    model: &GridWorldModel,
    observations: &[GridObservation],
) -> Result<ExactTrace, OracleError> {
    let mut belief = exact_init(model)?;
    let mut trace = ExactTrace {
        loc_marginals: Vec::with_capacity(observations.len()),
        map_marginals: Vec::with_capacity(observations.len()),
        log_increments: Vec::with_capacity(observations.len()),
        log_evidence: 0.0,
    };
    for (idx, obs) in observations.iter().enumerate() {
        let (next, log_pred) = exact_filter_step(&belief, model, idx + 1, obs);
        belief = next;
        let (loc, cells) = exact_marginals(&belief);
        trace.loc_marginals.push(loc);
        trace.map_marginals.push(cells);
        trace.log_increments.push(log_pred);
        trace.log_evidence += log_pred;
    }
    Ok(trace)
}

/// Fully-factorised belief: a location marginal and independent per-cell
/// color marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct BkBelief {
    pub loc: Vec<f64>,
    /// `n_cells x n_colors`, row-major.
    pub cells: Vec<f64>,
}

pub fn bk_init(model: &GridWorldModel) -> BkBelief {
    let nc = model.n_colors;
    let cells = match model.map_prior {
        MapPrior::Uniform => vec![1.0 / nc as f64; model.n_cells() * nc],
        MapPrior::Known => {
            let mut cells = vec![0.0; model.n_cells() * nc];
            for (cell, &color) in model.true_map.as_ref().expect("validated").iter().enumerate() {
                cells[cell * nc + color] = 1.0;
            }
            cells
        }
    };
    BkBelief {
        loc: model.init_location.clone(),
        cells,
    }
}

/// One Boyen-Koller step: the exact joint step applied to the product-form
/// belief, projected back onto the product of marginals.
pub fn bk_filter_step(
    belief: &BkBelief,
    model: &GridWorldModel,
    step: usize,
    obs: &GridObservation,
) -> BkBelief {
    let nc = model.n_colors;
    let n_cells = model.n_cells();

    // Location kernel.
    let mut loc_pred = vec![0.0; n_cells];
    let action = model.action_at(step);
    for from in 0..n_cells {
        for (to, p) in model.transition_distribution(from, action) {
            loc_pred[to] += p * belief.loc[from];
        }
    }

    // Per-cell change kernel.
    let mut cells_pred = belief.cells.clone();
    if model.p_change > 0.0 {
        let keep = 1.0 - model.p_change;
        let flip = model.p_change / (nc as f64 - 1.0);
        for cell in 0..n_cells {
            let row = &belief.cells[cell * nc..(cell + 1) * nc];
            let total: f64 = row.iter().sum();
            for c in 0..nc {
                cells_pred[cell * nc + c] = keep * row[c] + flip * (total - row[c]);
            }
        }
    }

    // Per-location observation weight under the product belief, together
    // with the Bayes-updated rows of the cells each location observes.
    let mut loc_post = vec![0.0; n_cells];
    let mut total = 0.0;
    let mut updated_rows: Vec<Vec<(usize, Vec<f64>)>> = vec![Vec::new(); n_cells];
    for l in 0..n_cells {
        if loc_pred[l] == 0.0 {
            continue;
        }
        let expected = model.clipped_offsets(l);
        if expected.len() != obs.readings.len()
            || !expected
                .iter()
                .zip(obs.readings.iter())
                .all(|(&(er, ec), &(or, oc, _))| er == or && ec == oc)
        {
            continue; // footprint mismatch: zero likelihood at l
        }
        let (r0, c0) = model.row_col(l);
        let mut weight = 1.0;
        let mut rows = Vec::with_capacity(obs.readings.len());
        for &(dr, dc, color) in &obs.readings {
            let cell = model.cell((r0 as i64 + dr as i64) as usize, (c0 as i64 + dc as i64) as usize);
            let prior = &cells_pred[cell * nc..(cell + 1) * nc];
            let mut predictive = 0.0;
            let mut row = vec![0.0; nc];
            for c in 0..nc {
                let lik = sensor_likelihood(color, c, model.epsilon, nc);
                row[c] = lik * prior[c];
                predictive += row[c];
            }
            if predictive == 0.0 {
                weight = 0.0;
                break;
            }
            for v in &mut row {
                *v /= predictive;
            }
            weight *= predictive;
            rows.push((cell, row));
        }
        if weight > 0.0 {
            loc_post[l] = loc_pred[l] * weight;
            total += loc_post[l];
            updated_rows[l] = rows;
        }
    }

    if total == 0.0 {
        // Observation impossible under the factored belief; fall back to
        // the predicted belief.
        return BkBelief {
            loc: loc_pred,
            cells: cells_pred,
        };
    }
    for p in &mut loc_post {
        *p /= total;
    }

    // Project the one-step joint onto per-cell marginals: cells observed
    // from location l contribute their Bayes row, unobserved cells the
    // predicted prior.
    let mut cells_post = vec![0.0; n_cells * nc];
    for l in 0..n_cells {
        if loc_post[l] == 0.0 {
            continue;
        }
        let mut covered = vec![false; n_cells];
        for (cell, row) in &updated_rows[l] {
            covered[*cell] = true;
            for c in 0..nc {
                cells_post[cell * nc + c] += loc_post[l] * row[c];
            }
        }
        for cell in 0..n_cells {
            if !covered[cell] {
                for c in 0..nc {
                    cells_post[cell * nc + c] += loc_post[l] * cells_pred[cell * nc + c];
                }
            }
        }
    }

    BkBelief {
        loc: loc_post,
        cells: cells_post,
    }
}

/// Full BK pass over an observation sequence.
pub fn bk_run(model: &GridWorldModel, observations: &[GridObservation]) -> Vec<BkBelief> {
    let mut belief = bk_init(model);
    observations
        .iter()
        .enumerate()
        .map(|(idx, obs)| {
            belief = bk_filter_step(&belief, model, idx + 1, obs);
            belief.clone()
        })
        .collect()
}

/// Exhaustive posterior over root trajectories `r_0..=r_T` of an
/// enumerable model, with the final conditional statistic of each.
#[derive(Debug, Clone)]
pub struct TrajectoryPosterior<R, S> {
    pub trajectories: Vec<Vec<R>>,
    /// Normalized posterior log-probabilities, aligned with `trajectories`.
    pub log_probs: Vec<f64>,
    pub final_stats: Vec<S>,
    pub log_evidence: f64,
}

impl<R, S> TrajectoryPosterior<R, S> {
    /// Posterior expectation of a function of `(r_T, stats_T)`.
    pub fn expectation(&self, f: impl Fn(&R, &S) -> f64) -> f64 {
        self.trajectories
            .iter()
            .zip(&self.log_probs)
            .zip(&self.final_stats)
            .map(|((traj, lp), stats)| lp.exp() * f(traj.last().expect("non-empty"), stats))
            .sum()
    }

    /// Posterior marginal of `r_T` over the given root enumeration.
    pub fn final_root_marginal(&self, roots: &[R]) -> Vec<f64>
    where
        R: PartialEq,
    {
        roots
            .iter()
            .map(|r| {
                self.trajectories
                    .iter()
                    .zip(&self.log_probs)
                    .filter(|(traj, _)| traj.last() == Some(r))
                    .map(|(_, lp)| lp.exp())
                    .sum()
            })
            .collect()
    }
}

/// Enumerate every root trajectory and score it exactly. The model must
/// expose an enumerable root space and the trajectory count
/// `|roots|^(T+1)` must stay under the oracle guard.
pub fn enumerate_trajectories<M: RbpfModel>(
    model: &M,
    observations: &[M::Obs],
) -> Result<TrajectoryPosterior<M::Root, M::Stats>, OracleError> {
    let roots = model.enumerate_roots().expect("enumerable root space");
    let t_len = observations.len();
    let count = (roots.len() as f64).powi(t_len as i32 + 1);
    if !(count <= ORACLE_STATE_LIMIT) {
        return Err(OracleError::StateSpaceTooLarge {
            states: count,
            limit: ORACLE_STATE_LIMIT,
        });
    }

    struct Node<R, S> {
        traj: Vec<R>,
        stats: S,
        log_joint: f64,
    }

    let mut frontier: Vec<Node<M::Root, M::Stats>> = roots
        .iter()
        .map(|r| Node {
            traj: vec![r.clone()],
            stats: model.init_stats(),
            log_joint: model.init_root_log_prob(r),
        })
        .collect();
    for (idx, obs) in observations.iter().enumerate() {
        let step = idx + 1;
        let mut next = Vec::with_capacity(frontier.len() * roots.len());
        for node in &frontier {
            let prev = node.traj.last().expect("non-empty");
            for r in &roots {
                let log_trans = model.transition_log_prob(prev, r, step);
                if node.log_joint + log_trans == f64::NEG_INFINITY {
                    continue;
                }
                let (stats, ll) = model.cond_step(&node.stats, prev, r, obs, step);
                let mut traj = node.traj.clone();
                traj.push(r.clone());
                next.push(Node {
                    traj,
                    stats,
                    log_joint: node.log_joint + log_trans + ll,
                });
            }
        }
        frontier = next;
    }

    let log_joints: Vec<f64> = frontier.iter().map(|n| n.log_joint).collect();
    let log_evidence = log_sum_exp(&log_joints);
    let mut trajectories = Vec::with_capacity(frontier.len());
    let mut log_probs = Vec::with_capacity(frontier.len());
    let mut final_stats = Vec::with_capacity(frontier.len());
    for node in frontier {
        trajectories.push(node.traj);
        log_probs.push(node.log_joint - log_evidence);
        final_stats.push(node.stats);
    }
    Ok(TrajectoryPosterior {
        trajectories,
        log_probs,
        final_stats,
        log_evidence,
    })
}

/// Brute-force conditional map posterior for a clamped location
/// trajectory: forward filtering over the full joint map space (all
/// `n_colors^n_cells` maps), returning per-cell marginals. Independent of
/// the factored recursion it validates.
///
/// `locations[k]` is the location at observation `k + 1`.
pub fn clamped_map_posterior(
    model: &GridWorldModel,
    locations: &[usize],
    observations: &[GridObservation],
) -> Result<Vec<f64>, OracleError> {
    assert_eq!(locations.len(), observations.len());
    let n_cells = model.n_cells();
    let nc = model.n_colors;
    let n_maps = (nc as f64).powf(n_cells as f64);
    if !(n_maps <= ORACLE_STATE_LIMIT) {
        return Err(OracleError::StateSpaceTooLarge {
            states: n_maps,
            limit: ORACLE_STATE_LIMIT,
        });
    }
    let n_maps = nc.pow(n_cells as u32);
    let helper = JointBelief {
        probs: Vec::new(),
        n_cells,
        n_colors: nc,
    };

    let mut probs: Vec<f64> = match model.map_prior {
        MapPrior::Uniform => vec![1.0 / n_maps as f64; n_maps],
        MapPrior::Known => {
            let mut p = vec![0.0; n_maps];
            p[helper.encode_map(model.true_map.as_ref().expect("validated"))] = 1.0;
            p
        }
    };

    let keep = 1.0 - model.p_change;
    let flip = if nc > 1 {
        model.p_change / (nc as f64 - 1.0)
    } else {
        0.0
    };
    for (loc, obs) in locations.iter().zip(observations) {
        if model.p_change > 0.0 {
            let mut stride = 1usize;
            for _cell in 0..n_cells {
                let mut next = vec![0.0; probs.len()];
                let block = stride * nc;
                for base in (0..probs.len()).step_by(block) {
                    for rem in 0..stride {
                        for c_new in 0..nc {
                            let mut acc = 0.0;
                            for c_old in 0..nc {
                                let k = if c_new == c_old { keep } else { flip };
                                acc += k * probs[base + rem + c_old * stride];
                            }
                            next[base + rem + c_new * stride] = acc;
                        }
                    }
                }
                probs = next;
                stride *= nc;
            }
        }
        for code in 0..n_maps {
            if probs[code] == 0.0 {
                continue;
            }
            let map = helper.decode_map(code);
            let ll = model.obs_log_lik_given_map(*loc, &map, obs);
            probs[code] *= if ll == f64::NEG_INFINITY { 0.0 } else { ll.exp() };
        }
        let mass: f64 = probs.iter().sum();
        if mass > 0.0 {
            for p in &mut probs {
                *p /= mass;
            }
        }
    }

    let mut marginals = vec![0.0; n_cells * nc];
    for code in 0..n_maps {
        let p = probs[code];
        if p == 0.0 {
            continue;
        }
        let map = helper.decode_map(code);
        for (cell, &color) in map.iter().enumerate() {
            marginals[cell * nc + color] += p;
        }
    }
    Ok(marginals)
}
