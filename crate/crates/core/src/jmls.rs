//! Jump-Markov linear system: a finite Markov regime chain (the sampled
//! root) selecting the matrices of a linear Gaussian state-space model
//! whose continuous state is marginalized by the conditional Kalman
//! filter.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::kalman::{kalman_step, GaussianBelief, RegimeParams};
use crate::model::{JointDraw, RbpfModel, TargetFn};
use crate::rngs::{stream, Phase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JmlsModel {
    pub n_regimes: usize,
    /// Row-stochastic regime transition matrix, row = previous regime.
    pub regime_transition: Vec<Vec<f64>>,
    pub params: Vec<RegimeParams>,
    pub init_regime: Vec<f64>,
    pub init_belief: GaussianBelief,
}

impl JmlsModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_regimes == 0 {
            return Err(ConfigError::Invalid("need at least one regime".into()));
        }
        if self.regime_transition.len() != self.n_regimes
            || self.params.len() != self.n_regimes
            || self.init_regime.len() != self.n_regimes
        {
            return Err(ConfigError::Invalid(
                "regime table sizes do not match n_regimes".into(),
            ));
        }
        for row in self
            .regime_transition
            .iter()
            .chain(std::iter::once(&self.init_regime))
        {
            if row.len() != self.n_regimes && row.len() != self.init_regime.len() {
                return Err(ConfigError::Invalid("transition row has wrong length".into()));
            }
            if row.iter().any(|&p| p < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(ConfigError::Invalid(
                    "regime distribution must be normalized".into(),
                ));
            }
        }
        let dim = self.init_belief.dim();
        for p in &self.params {
            p.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if p.state_dim() != dim {
                return Err(ConfigError::Invalid(
                    "regime state dimension does not match the initial belief".into(),
                ));
            }
        }
        Ok(())
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

    fn sample_gaussian<R: Rng>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
        let n = mean.len();
        let chol = Cholesky::new(cov.clone()).or_else(|| {
            let mut jittered = cov.clone();
            for i in 0..n {
                jittered[(i, i)] += 1e-12;
            }
            Cholesky::new(jittered)
        });
        let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
        match chol {
            Some(c) => mean + c.l() * z,
            // Zero covariance: degenerate draw at the mean.
            None => mean.clone(),
        }
    }

    fn gaussian_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
        let chol = match Cholesky::new(cov.clone()) {
            Some(c) => c,
            None => return f64::NEG_INFINITY,
        };
        let diff = x - mean;
        let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let maha = diff.dot(&chol.solve(&diff));
        -0.5 * (x.len() as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + maha)
    }

    /// Draw a regime path, continuous states and observations.
    /// Deterministic given the seed.
    pub fn simulate(&self, horizon: usize, seed: u64) -> JmlsRun {
        let mut rng = stream(seed, Phase::Simulate, 0, 0);
        let mut regime = Self::sample_from(&self.init_regime, &mut rng);
        let mut x = Self::sample_gaussian(&self.init_belief.mean, &self.init_belief.cov, &mut rng);
        let mut regimes = vec![regime];
        let mut states = vec![x.clone()];
        let mut observations = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            regime = Self::sample_from(&self.regime_transition[regime], &mut rng);
            let p = &self.params[regime];
            let noise = Self::sample_gaussian(&DVector::zeros(p.state_dim()), &p.q, &mut rng);
            x = &p.a * &x + noise;
            let vnoise = Self::sample_gaussian(&DVector::zeros(p.obs_dim()), &p.r, &mut rng);
            let y = &p.c * &x + vnoise;
            regimes.push(regime);
            states.push(x.clone());
            observations.push(y);
        }
        JmlsRun {
            regimes,
            states,
            observations,
        }
    }
}

/// A simulated jump-Markov run: regimes and states for `t = 0..=T`, plus
/// the observations `y_1..y_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JmlsRun {
    pub regimes: Vec<usize>,
    pub states: Vec<DVector<f64>>,
    pub observations: Vec<DVector<f64>>,
}

impl RbpfModel for JmlsModel {
    type Root = usize;
    type Stats = GaussianBelief;
    type Obs = DVector<f64>;

    fn sample_init_root<R: Rng>(&self, rng: &mut R) -> usize {
        Self::sample_from(&self.init_regime, rng)
    }

    fn init_root_log_prob(&self, root: &usize) -> f64 {
        let p = self.init_regime[*root];
        if p > 0.0 {
            p.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn init_stats(&self) -> GaussianBelief {
        self.init_belief.clone()
    }

    fn sample_transition<R: Rng>(&self, prev: &usize, _step: usize, rng: &mut R) -> usize {
        Self::sample_from(&self.regime_transition[*prev], rng)
    }

    fn transition_log_prob(&self, prev: &usize, next: &usize, _step: usize) -> f64 {
        let p = self.regime_transition[*prev][*next];
        if p > 0.0 {
            p.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn cond_step(
        &self,
        stats: &GaussianBelief,
        _prev: &usize,
        next: &usize,
        obs: &DVector<f64>,
        _step: usize,
    ) -> (GaussianBelief, f64) {
        match kalman_step(stats, &self.params[*next], obs) {
            Ok((belief, lp)) => (belief, lp),
            // A singular innovation kills the particle rather than the run.
            Err(_) => (stats.clone(), f64::NEG_INFINITY),
        }
    }

    fn enumerate_roots(&self) -> Option<Vec<usize>> {
        Some((0..self.n_regimes).collect())
    }
}

impl JointDraw for JmlsModel {
    type Marg = DVector<f64>;

    fn sample_init_marg<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        Self::sample_gaussian(&self.init_belief.mean, &self.init_belief.cov, rng)
    }

    fn sample_marg_transition<R: Rng>(
        &self,
        prev: &DVector<f64>,
        _prev_root: &usize,
        next_root: &usize,
        _step: usize,
        rng: &mut R,
    ) -> DVector<f64> {
        let p = &self.params[*next_root];
        let noise = Self::sample_gaussian(&DVector::zeros(p.state_dim()), &p.q, rng);
        &p.a * prev + noise
    }

    fn joint_obs_log_lik(
        &self,
        root: &usize,
        marg: &DVector<f64>,
        obs: &DVector<f64>,
        _step: usize,
    ) -> f64 {
        let p = &self.params[*root];
        Self::gaussian_log_density(obs, &(&p.c * marg), &p.r)
    }
}

/// One coordinate of the continuous state; its conditional expectation is
/// the Kalman mean.
pub struct StateCoord(pub usize);

impl TargetFn<JmlsModel> for StateCoord {
    fn joint(&self, _root: &usize, marg: &DVector<f64>) -> f64 {
        marg[self.0]
    }

    fn conditional(&self, _root: &usize, stats: &GaussianBelief) -> Option<f64> {
        Some(stats.mean[self.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub fn two_regime_scalar() -> JmlsModel {
        JmlsModel {
            n_regimes: 2,
            regime_transition: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            params: vec![
                RegimeParams::scalar(0.9, 1.0, 0.1, 0.2),
                RegimeParams::scalar(0.5, 1.0, 0.8, 0.2),
            ],
            init_regime: vec![0.5, 0.5],
            init_belief: GaussianBelief::scalar(0.0, 1.0),
        }
    }

    #[test]
    fn validates() {
        two_regime_scalar().validate().unwrap();
        let mut bad = two_regime_scalar();
        bad.regime_transition[0][0] = 0.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cond_step_delegates_to_kalman() {
        let m = two_regime_scalar();
        let belief = GaussianBelief::scalar(0.3, 0.7);
        let y = DVector::from_element(1, 0.45);
        let (via_model, ll_model) = m.cond_step(&belief, &0, &1, &y, 3);
        let (direct, ll_direct) = kalman_step(&belief, &m.params[1], &y).unwrap();
        assert_eq!(via_model, direct);
        assert_eq!(ll_model.to_bits(), ll_direct.to_bits());
    }

    #[test]
    fn single_regime_observation_variance_matches_steady_state() {
        // One regime: a fixed linear Gaussian system. The stationary state
        // covariance solves P = A P A' + Q; the long-run sample variance
        // of y must match C P C' + R. The tolerance is three standard
        // errors of a sample variance, inflated for autocorrelation.
        let (a, c, q, r) = (0.8, 1.0, 0.5, 0.3);
        let m = JmlsModel {
            n_regimes: 1,
            regime_transition: vec![vec![1.0]],
            params: vec![RegimeParams::scalar(a, c, q, r)],
            init_regime: vec![1.0],
            init_belief: GaussianBelief::scalar(0.0, q / (1.0 - a * a)),
        };
        let mut p_inf = 1.0f64;
        for _ in 0..10_000 {
            p_inf = a * a * p_inf + q;
        }
        let var_y = c * c * p_inf + r;

        let n = 100_000usize;
        let run = m.simulate(n, 99);
        let mean: f64 = run.observations.iter().map(|y| y[0]).sum::<f64>() / n as f64;
        let sample_var: f64 = run
            .observations
            .iter()
            .map(|y| (y[0] - mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;

        // y autocorrelation at lag k is rho_k = c^2 p a^k / var_y; the
        // sample variance of a Gaussian process has variance inflated by
        // 1 + 2 sum_k rho_k^2.
        let base = c * c * p_inf / var_y;
        let sum_rho_sq = base * base * a * a / (1.0 - a * a);
        let inflation: f64 = 1.0 + 2.0 * sum_rho_sq;
        let se = var_y * (2.0 / n as f64).sqrt() * inflation.sqrt();
        assert!(
            (sample_var - var_y).abs() < 3.0 * se,
            "sample var {sample_var}, theory {var_y}, 3se {}",
            3.0 * se
        );
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let m = two_regime_scalar();
        let a = m.simulate(20, 3);
        let b = m.simulate(20, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn state_coord_target_reads_kalman_mean() {
        let f = StateCoord(0);
        let belief = GaussianBelief::scalar(0.42, 0.1);
        assert_abs_diff_eq!(f.conditional(&0, &belief).unwrap(), 0.42, epsilon = 1e-15);
        assert_abs_diff_eq!(
            f.joint(&0, &DVector::from_element(1, -1.5)),
            -1.5,
            epsilon = 1e-15
        );
    }
}
