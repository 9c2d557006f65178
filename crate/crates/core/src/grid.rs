//! The grid-world localization and map-learning model.
//!
//! Hidden state: the robot location `L_t` (the sampled root chain) and the
//! per-cell map colors `M_t(i)` (marginalized exactly by
//! [`FactoredMapBelief`]). Per step the map diffuses by an independent
//! per-cell color flip, the robot executes the scripted action (failing to
//! move with probability `p_slip`), and the sensor reports the colors of
//! the neighborhood cells around the true location, each reading flipped
//! with probability `epsilon`.
//!
//! Observations carry their offset pattern: near a wall the neighborhood
//! clips to the grid, so the set of offsets that produced readings is
//! itself informative. A hypothesized location whose clipped pattern
//! differs from the recorded one assigns the observation zero likelihood.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::mapbelief::{map_predict, map_update, sensor_likelihood, FactoredMapBelief};
use crate::model::{JointDraw, RbpfModel, TargetFn};
use crate::particle::WeightedParticleSet;
use crate::rngs::{stream, Phase};

/// A scripted robot move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridAction {
    North,
    South,
    East,
    West,
    Stay,
}

impl GridAction {
    pub fn from_char(c: char) -> Option<GridAction> {
        match c.to_ascii_uppercase() {
            'N' => Some(GridAction::North),
            'S' => Some(GridAction::South),
            'E' => Some(GridAction::East),
            'W' => Some(GridAction::West),
            'X' => Some(GridAction::Stay),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            GridAction::North => 'N',
            GridAction::South => 'S',
            GridAction::East => 'E',
            GridAction::West => 'W',
            GridAction::Stay => 'X',
        }
    }
}

/// Parse an action script such as `"EEEEEEEXXWWWWWWW"`.
pub fn parse_actions(s: &str) -> Result<Vec<GridAction>, ConfigError> {
    s.chars()
        .map(|c| {
            GridAction::from_char(c)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown action character '{c}'")))
        })
        .collect()
}

/// Parse a color string: digits `0..9`, or `B`/`W` for two-color maps.
pub fn parse_colors(s: &str, n_colors: usize) -> Result<Vec<usize>, ConfigError> {
    s.chars()
        .map(|c| {
            let color = match c {
                'B' | 'b' => 0,
                'W' | 'w' => 1,
                d if d.is_ascii_digit() => d as usize - '0' as usize,
                _ => return Err(ConfigError::Invalid(format!("unknown color character '{c}'"))),
            };
            if color >= n_colors {
                return Err(ConfigError::Invalid(format!(
                    "color {color} out of range for {n_colors} colors"
                )));
            }
            Ok(color)
        })
        .collect()
}

/// Sensor footprint shape, centered on the robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Neighborhood {
    /// Only the current cell.
    Single,
    /// The 3x3 block around the current cell, clipped at walls.
    ThreeByThree,
}

impl Neighborhood {
    pub fn offsets(self) -> &'static [(i32, i32)] {
        match self {
            Neighborhood::Single => &[(0, 0)],
            Neighborhood::ThreeByThree => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 0),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

/// Prior over the map cells before any observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapPrior {
    /// Independent uniform color per cell (the map is unknown).
    Uniform,
    /// The true map is known exactly (pure localization).
    Known,
}

/// One step's sensor output: the clipped neighborhood offsets (in scan
/// order) with the observed color at each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridObservation {
    pub readings: Vec<(i32, i32, usize)>,
}

/// Generative model parameters for the grid world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorldModel {
    pub width: usize,
    pub height: usize,
    pub n_colors: usize,
    pub true_map: Option<Vec<usize>>,
    pub epsilon: f64,
    pub p_slip: f64,
    pub p_change: f64,
    pub actions: Vec<GridAction>,
    pub neighborhood: Neighborhood,
    /// Distribution over initial cells.
    pub init_location: Vec<f64>,
    pub map_prior: MapPrior,
}

impl GridWorldModel {
    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let nl = self.n_cells();
        if nl == 0 {
            return Err(ConfigError::Invalid("grid has no cells".into()));
        }
        if self.n_colors < 2 {
            return Err(ConfigError::Invalid("need at least two colors".into()));
        }
        if self.actions.is_empty() {
            return Err(ConfigError::Invalid("action script is empty".into()));
        }
        for (name, p) in [
            ("epsilon", self.epsilon),
            ("p_slip", self.p_slip),
            ("p_change", self.p_change),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::Invalid(format!("{name} = {p} not in [0,1]")));
            }
        }
        if let Some(map) = &self.true_map {
            if map.len() != nl {
                return Err(ConfigError::Invalid(format!(
                    "true map has {} cells, grid has {nl}",
                    map.len()
                )));
            }
            if map.iter().any(|&c| c >= self.n_colors) {
                return Err(ConfigError::Invalid("true map color out of range".into()));
            }
        }
        if self.map_prior == MapPrior::Known && self.true_map.is_none() {
            return Err(ConfigError::Invalid(
                "known map prior requires a true map".into(),
            ));
        }
        if self.init_location.len() != nl {
            return Err(ConfigError::Invalid(format!(
                "init location distribution has {} entries, grid has {nl}",
                self.init_location.len()
            )));
        }
        if self.init_location.iter().any(|&p| p < 0.0)
            || (self.init_location.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(ConfigError::Invalid(
                "init location distribution must be normalized".into(),
            ));
        }
        Ok(())
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn row_col(&self, cell: usize) -> (usize, usize) {
        (cell / self.width, cell % self.width)
    }

    /// Action applying to the transition into observation `step`
    /// (1-based). Scripts repeat cyclically past their end.
    pub fn action_at(&self, step: usize) -> GridAction {
        self.actions[(step - 1) % self.actions.len()]
    }

    /// The cell the action aims at; moves off the grid collapse to Stay.
    pub fn intended(&self, from: usize, action: GridAction) -> usize {
        let (r, c) = self.row_col(from);
        let (nr, nc) = match action {
            GridAction::North => (r.wrapping_sub(1), c),
            GridAction::South => (r + 1, c),
            GridAction::East => (r, c + 1),
            GridAction::West => (r, c.wrapping_sub(1)),
            GridAction::Stay => (r, c),
        };
        if nr < self.height && nc < self.width {
            self.cell(nr, nc)
        } else {
            from
        }
    }

    /// Distribution over successor cells: the intended cell with
    /// probability `1 - p_slip`, staying put with probability `p_slip`.
    pub fn transition_distribution(&self, from: usize, action: GridAction) -> Vec<(usize, f64)> {
        let target = self.intended(from, action);
        if target == from {
            vec![(from, 1.0)]
        } else {
            let mut dist = Vec::with_capacity(2);
            if self.p_slip < 1.0 {
                dist.push((target, 1.0 - self.p_slip));
            }
            if self.p_slip > 0.0 {
                dist.push((from, self.p_slip));
            }
            dist
        }
    }

    /// Neighborhood offsets observable from `loc`, clipped at walls, in
    /// scan order.
    pub fn clipped_offsets(&self, loc: usize) -> Vec<(i32, i32)> {
        let (r, c) = self.row_col(loc);
        self.neighborhood
            .offsets()
            .iter()
            .copied()
            .filter(|&(dr, dc)| {
                let nr = r as i64 + dr as i64;
                let nc = c as i64 + dc as i64;
                nr >= 0 && nr < self.height as i64 && nc >= 0 && nc < self.width as i64
            })
            .collect()
    }

    fn offset_cell(&self, loc: usize, dr: i32, dc: i32) -> usize {
        let (r, c) = self.row_col(loc);
        self.cell((r as i64 + dr as i64) as usize, (c as i64 + dc as i64) as usize)
    }

    /// Whether the recorded offsets could have been produced at `loc`.
    fn footprint_matches(&self, loc: usize, obs: &GridObservation) -> bool {
        let expected = self.clipped_offsets(loc);
        expected.len() == obs.readings.len()
            && expected
                .iter()
                .zip(obs.readings.iter())
                .all(|(&(er, ec), &(or, oc, _))| er == or && ec == oc)
    }

    /// `log p(y | L, M)` for a fully specified map, the observation
    /// density shared by the joint sampler and the exact oracles.
    pub fn obs_log_lik_given_map(&self, loc: usize, map: &[usize], obs: &GridObservation) -> f64 {
        if !self.footprint_matches(loc, obs) {
            return f64::NEG_INFINITY;
        }
        let mut ll = 0.0;
        for &(dr, dc, color) in &obs.readings {
            let cell = self.offset_cell(loc, dr, dc);
            let p = sensor_likelihood(color, map[cell], self.epsilon, self.n_colors);
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += p.ln();
        }
        ll
    }

    fn sample_from<R: Rng>(dist: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for (i, &p) in dist.iter().enumerate() {
            cum += p;
            if u < cum {
                return i;
            }
        }
        dist.len() - 1
    }

    fn sample_map_cell<R: Rng>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.n_colors)
    }

    fn flip_color<R: Rng>(&self, color: usize, rng: &mut R) -> usize {
        if self.p_change > 0.0 && rng.random::<f64>() < self.p_change {
            let other = rng.random_range(0..self.n_colors - 1);
            if other >= color {
                other + 1
            } else {
                other
            }
        } else {
            color
        }
    }

    fn observe<R: Rng>(&self, loc: usize, map: &[usize], rng: &mut R) -> GridObservation {
        let readings = self
            .clipped_offsets(loc)
            .into_iter()
            .map(|(dr, dc)| {
                let cell = self.offset_cell(loc, dr, dc);
                let truth = map[cell];
                let seen = if self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon {
                    let other = rng.random_range(0..self.n_colors - 1);
                    if other >= truth {
                        other + 1
                    } else {
                        other
                    }
                } else {
                    truth
                };
                (dr, dc, seen)
            })
            .collect();
        GridObservation { readings }
    }

    /// Draw a full hidden trajectory and its observations. Deterministic
    /// given the seed. The action script repeats cyclically when `horizon`
    /// exceeds its length.
    pub fn simulate(&self, horizon: usize, seed: u64) -> GridRun {
        let mut rng = stream(seed, Phase::Simulate, 0, 0);
        let mut map: Vec<usize> = match &self.true_map {
            Some(m) => m.clone(),
            None => (0..self.n_cells())
                .map(|_| self.sample_map_cell(&mut rng))
                .collect(),
        };
        let mut loc = Self::sample_from(&self.init_location, &mut rng);
        let mut locations = vec![loc];
        let mut maps = vec![map.clone()];
        let mut observations = Vec::with_capacity(horizon);
        for step in 1..=horizon {
            map = map
                .iter()
                .map(|&c| self.flip_color(c, &mut rng))
                .collect();
            let dist = self.transition_distribution(loc, self.action_at(step));
            let pick = Self::sample_from(
                &dist.iter().map(|&(_, p)| p).collect::<Vec<_>>(),
                &mut rng,
            );
            loc = dist[pick].0;
            observations.push(self.observe(loc, &map, &mut rng));
            locations.push(loc);
            maps.push(map.clone());
        }
        GridRun {
            locations,
            maps,
            observations,
        }
    }
}

/// A simulated grid trajectory: hidden locations and maps for `t = 0..=T`
/// plus the observations `y_1..y_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRun {
    pub locations: Vec<usize>,
    pub maps: Vec<Vec<usize>>,
    pub observations: Vec<GridObservation>,
}

impl RbpfModel for GridWorldModel {
    type Root = usize;
    type Stats = FactoredMapBelief;
    type Obs = GridObservation;

    fn sample_init_root<R: Rng>(&self, rng: &mut R) -> usize {
        Self::sample_from(&self.init_location, rng)
    }

    fn init_root_log_prob(&self, root: &usize) -> f64 {
        let p = self.init_location[*root];
        if p > 0.0 {
            p.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn init_stats(&self) -> FactoredMapBelief {
        match self.map_prior {
            MapPrior::Uniform => FactoredMapBelief::uniform(self.n_cells(), self.n_colors),
            MapPrior::Known => FactoredMapBelief::known(
                self.true_map.as_ref().expect("validated"),
                self.n_colors,
            ),
        }
    }

    fn sample_transition<R: Rng>(&self, prev: &usize, step: usize, rng: &mut R) -> usize {
        let dist = self.transition_distribution(*prev, self.action_at(step));
        let pick = Self::sample_from(&dist.iter().map(|&(_, p)| p).collect::<Vec<_>>(), rng);
        dist[pick].0
    }

    fn transition_log_prob(&self, prev: &usize, next: &usize, step: usize) -> f64 {
        self.transition_distribution(*prev, self.action_at(step))
            .iter()
            .find(|(cell, _)| cell == next)
            .map(|&(_, p)| p.ln())
            .unwrap_or(f64::NEG_INFINITY)
    }

    fn cond_step(
        &self,
        stats: &FactoredMapBelief,
        _prev: &usize,
        next: &usize,
        obs: &GridObservation,
        _step: usize,
    ) -> (FactoredMapBelief, f64) {
        let predicted = map_predict(stats, self.p_change);
        if !self.footprint_matches(*next, obs) {
            return (predicted, f64::NEG_INFINITY);
        }
        let readings: Vec<(usize, usize)> = obs
            .readings
            .iter()
            .map(|&(dr, dc, color)| (self.offset_cell(*next, dr, dc), color))
            .collect();
        map_update(&predicted, &readings, self.epsilon)
    }

    fn enumerate_roots(&self) -> Option<Vec<usize>> {
        Some((0..self.n_cells()).collect())
    }

    fn transition_support(&self, prev: &usize, step: usize) -> Option<Vec<usize>> {
        Some(
            self.transition_distribution(*prev, self.action_at(step))
                .into_iter()
                .map(|(cell, _)| cell)
                .collect(),
        )
    }
}

impl JointDraw for GridWorldModel {
    type Marg = Vec<usize>;

    fn sample_init_marg<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        match self.map_prior {
            MapPrior::Uniform => (0..self.n_cells())
                .map(|_| self.sample_map_cell(rng))
                .collect(),
            MapPrior::Known => self.true_map.clone().expect("validated"),
        }
    }

    fn sample_marg_transition<R: Rng>(
        &self,
        prev: &Vec<usize>,
        _prev_root: &usize,
        _next_root: &usize,
        _step: usize,
        rng: &mut R,
    ) -> Vec<usize> {
        prev.iter().map(|&c| self.flip_color(c, rng)).collect()
    }

    fn joint_obs_log_lik(
        &self,
        root: &usize,
        marg: &Vec<usize>,
        obs: &GridObservation,
        _step: usize,
    ) -> f64 {
        self.obs_log_lik_given_map(*root, marg, obs)
    }
}

/// Indicator of one map cell having one color; its conditional expectation
/// is the corresponding belief entry.
pub struct MapCellColor {
    pub cell: usize,
    pub color: usize,
}

impl TargetFn<GridWorldModel> for MapCellColor {
    fn joint(&self, _root: &usize, marg: &Vec<usize>) -> f64 {
        if marg[self.cell] == self.color {
            1.0
        } else {
            0.0
        }
    }

    fn conditional(&self, _root: &usize, stats: &FactoredMapBelief) -> Option<f64> {
        Some(stats.prob(self.cell, self.color))
    }
}

/// Weighted location marginal of a particle set.
pub fn location_marginal(
    ps: &WeightedParticleSet<usize, FactoredMapBelief>,
    n_cells: usize,
) -> Vec<f64> {
    let probs = ps.normalized_probabilities();
    let mut marginal = vec![0.0; n_cells];
    for (loc, w) in ps.roots.iter().zip(probs) {
        marginal[*loc] += w;
    }
    marginal
}

/// Particle-averaged per-cell color marginals.
pub fn mean_map_marginals(
    ps: &WeightedParticleSet<usize, FactoredMapBelief>,
    n_cells: usize,
    n_colors: usize,
) -> Vec<f64> {
    let probs = ps.normalized_probabilities();
    let mut acc = vec![0.0; n_cells * n_colors];
    for (stats, w) in ps.stats.iter().zip(probs) {
        for cell in 0..n_cells {
            for color in 0..n_colors {
                acc[cell * n_colors + color] += w * stats.prob(cell, color);
            }
        }
    }
    acc
}

/// Most probable color per cell from averaged marginals.
pub fn argmax_map(marginals: &[f64], n_cells: usize, n_colors: usize) -> Vec<usize> {
    (0..n_cells)
        .map(|cell| {
            let row = &marginals[cell * n_colors..(cell + 1) * n_colors];
            let mut best = 0;
            for (c, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config;

    fn corridor() -> GridWorldModel {
        config::corridor_scenario().unwrap()
    }

    #[test]
    fn transitions_match_slip_kernel() {
        let mut m = corridor();
        m.p_slip = 0.0;
        assert_eq!(m.transition_distribution(2, GridAction::East), vec![(3, 1.0)]);
        m.p_slip = 0.2;
        let dist = m.transition_distribution(2, GridAction::East);
        assert_eq!(dist, vec![(3, 0.8), (2, 0.2)]);
        // East wall clamps to a point mass on the current cell.
        assert_eq!(m.transition_distribution(7, GridAction::East), vec![(7, 1.0)]);
    }

    #[test]
    fn transition_rows_are_stochastic() {
        let m = corridor();
        for from in 0..m.n_cells() {
            for step in 1..=m.actions.len() {
                let total: f64 = m
                    .transition_distribution(from, m.action_at(step))
                    .iter()
                    .map(|&(_, p)| p)
                    .sum();
                assert!((total - 1.0).abs() < 1e-9);
                let total_enum: f64 = (0..m.n_cells())
                    .map(|to| m.transition_log_prob(&from, &to, step).exp())
                    .sum();
                assert!((total_enum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn noiseless_simulation_reads_true_colors_along_path() {
        let mut m = corridor();
        m.epsilon = 0.0;
        m.p_slip = 0.0;
        let run = m.simulate(m.actions.len(), 11);
        let truth = m.true_map.clone().unwrap();
        for (step, obs) in run.observations.iter().enumerate() {
            let loc = run.locations[step + 1];
            assert_eq!(obs.readings.len(), 1);
            assert_eq!(obs.readings[0].2, truth[loc]);
        }
        // Deterministic out-and-back route under the corridor script.
        assert_eq!(run.locations[0], 0);
        assert_eq!(run.locations[7], 7);
        assert_eq!(*run.locations.last().unwrap(), 0);
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let m = corridor();
        assert_eq!(m.simulate(16, 5), m.simulate(16, 5));
        assert_ne!(m.simulate(16, 5), m.simulate(16, 6));
    }

    #[test]
    fn footprints_clip_at_walls() {
        let m = GridWorldModel {
            width: 3,
            height: 3,
            n_colors: 2,
            true_map: None,
            epsilon: 0.1,
            p_slip: 0.0,
            p_change: 0.0,
            actions: vec![GridAction::Stay],
            neighborhood: Neighborhood::ThreeByThree,
            init_location: {
                let mut v = vec![0.0; 9];
                v[4] = 1.0;
                v
            },
            map_prior: MapPrior::Uniform,
        };
        assert_eq!(m.clipped_offsets(4).len(), 9);
        assert_eq!(m.clipped_offsets(0).len(), 4);
        assert_eq!(m.clipped_offsets(1).len(), 6);
    }

    #[test]
    fn footprint_mismatch_zeroes_likelihood() {
        let m = GridWorldModel {
            width: 3,
            height: 3,
            n_colors: 2,
            true_map: Some(vec![0; 9]),
            epsilon: 0.1,
            p_slip: 0.0,
            p_change: 0.0,
            actions: vec![GridAction::Stay],
            neighborhood: Neighborhood::ThreeByThree,
            init_location: {
                let mut v = vec![0.0; 9];
                v[4] = 1.0;
                v
            },
            map_prior: MapPrior::Known,
        };
        // An interior observation (9 readings) is impossible at the corner.
        let obs = GridObservation {
            readings: m
                .neighborhood
                .offsets()
                .iter()
                .map(|&(dr, dc)| (dr, dc, 0))
                .collect(),
        };
        assert_eq!(m.obs_log_lik_given_map(0, &vec![0; 9], &obs), f64::NEG_INFINITY);
        assert!(m.obs_log_lik_given_map(4, &vec![0; 9], &obs).is_finite());
        let (_, ll) = m.cond_step(&m.init_stats(), &4, &0, &obs, 1);
        assert_eq!(ll, f64::NEG_INFINITY);
    }

    #[test]
    fn cond_step_matches_spec_examples() {
        // Noiseless sensor, known map, particle at the true cell: log 1.
        let mut m = corridor();
        m.epsilon = 0.0;
        m.map_prior = MapPrior::Known;
        let truth = m.true_map.clone().unwrap();
        let obs = GridObservation {
            readings: vec![(0, 0, truth[3])],
        };
        let (_, ll) = m.cond_step(&m.init_stats(), &2, &3, &obs, 3);
        assert_eq!(ll, 0.0);

        // A belief certain of the wrong color makes the reading impossible.
        let wrong = GridObservation {
            readings: vec![(0, 0, 1 - truth[3])],
        };
        let (_, ll) = m.cond_step(&m.init_stats(), &2, &3, &wrong, 3);
        assert_eq!(ll, f64::NEG_INFINITY);
    }

    #[test]
    fn parse_round_trips() {
        let actions = parse_actions("NSEWX").unwrap();
        assert_eq!(actions.len(), 5);
        assert!(parse_actions("Q").is_err());
        assert_eq!(parse_colors("BWB", 2).unwrap(), vec![0, 1, 0]);
        assert_eq!(parse_colors("012", 3).unwrap(), vec![0, 1, 2]);
        assert!(parse_colors("2", 2).is_err());
    }
}
