//! Exact conditional filter for conditionally linear Gaussian models.
//!
//! Given the sampled regime sequence, the marginalized continuous state is
//! Gaussian; this module advances its mean/covariance and returns the
//! predictive log-density that drives the particle weight. The covariance
//! update uses the Joseph form to keep it symmetric positive semi-definite.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::KalmanError;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Jitter levels tried on the innovation covariance diagonal before
/// declaring it singular.
const JITTERS: [f64; 5] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9];

/// Gaussian sufficient statistic: mean and covariance of the marginalized
/// state given the observations and the sampled regime sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        GaussianBelief { mean, cov }
    }

    pub fn scalar(mean: f64, var: f64) -> Self {
        GaussianBelief {
            mean: DVector::from_element(1, mean),
            cov: DMatrix::from_element(1, 1, var),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Checks symmetry (1e-10) and positive semi-definiteness (Cholesky
    /// after jitter at most 1e-9).
    pub fn validate(&self) -> Result<(), KalmanError> {
        let n = self.dim();
        if self.cov.nrows() != n || self.cov.ncols() != n {
            return Err(KalmanError::DimensionMismatch(format!(
                "mean has {} entries but covariance is {}x{}",
                n,
                self.cov.nrows(),
                self.cov.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if (self.cov[(i, j)] - self.cov[(j, i)]).abs() > 1e-10 {
                    return Err(KalmanError::DimensionMismatch(
                        "covariance is not symmetric".into(),
                    ));
                }
            }
        }
        jittered_cholesky(&self.cov)
            .map(|_| ())
            .ok_or(KalmanError::SingularInnovation)
    }
}

/// Regime-conditional system matrices: transition `A`, observation `C`,
/// process noise `Q`, observation noise `R`. Control inputs and offsets
/// are not modelled; extend this record if a model needs them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl RegimeParams {
    pub fn scalar(a: f64, c: f64, q: f64, r: f64) -> Self {
        RegimeParams {
            a: DMatrix::from_element(1, 1, a),
            c: DMatrix::from_element(1, 1, c),
            q: DMatrix::from_element(1, 1, q),
            r: DMatrix::from_element(1, 1, r),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn validate(&self) -> Result<(), KalmanError> {
        let n = self.state_dim();
        let m = self.obs_dim();
        let ok = self.a.ncols() == n
            && self.q.nrows() == n
            && self.q.ncols() == n
            && self.c.ncols() == n
            && self.r.nrows() == m
            && self.r.ncols() == m;
        if !ok {
            return Err(KalmanError::DimensionMismatch(format!(
                "A {}x{}, C {}x{}, Q {}x{}, R {}x{}",
                self.a.nrows(),
                self.a.ncols(),
                self.c.nrows(),
                self.c.ncols(),
                self.q.nrows(),
                self.q.ncols(),
                self.r.nrows(),
                self.r.ncols()
            )));
        }
        Ok(())
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn jittered_cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    for &j in &JITTERS {
        let mut candidate = m.clone();
        if j > 0.0 {
            for i in 0..candidate.nrows() {
                candidate[(i, i)] += j;
            }
        }
        if let Some(chol) = Cholesky::new(candidate) {
            return Some(chol);
        }
    }
    None
}

struct StepOutput {
    posterior: GaussianBelief,
    log_pred: f64,
}

fn step_inner(
    belief: &GaussianBelief,
    params: &RegimeParams,
    obs: &DVector<f64>,
) -> Result<StepOutput, KalmanError> {
    params.validate()?;
    if belief.dim() != params.state_dim() || obs.len() != params.obs_dim() {
        return Err(KalmanError::DimensionMismatch(format!(
            "belief dim {}, state dim {}, obs len {}, obs dim {}",
            belief.dim(),
            params.state_dim(),
            obs.len(),
            params.obs_dim()
        )));
    }

    // Predict.
    let mean_pred = &params.a * &belief.mean;
    let mut cov_pred = &params.a * &belief.cov * params.a.transpose() + &params.q;
    symmetrize(&mut cov_pred);

    // Innovation.
    let innovation = obs - &params.c * &mean_pred;
    let mut s = &params.c * &cov_pred * params.c.transpose() + &params.r;
    symmetrize(&mut s);
    let chol = jittered_cholesky(&s).ok_or(KalmanError::SingularInnovation)?;

    let m = obs.len() as f64;
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let maha = {
        let solved = chol.solve(&innovation);
        innovation.dot(&solved)
    };
    let log_pred = -0.5 * (m * LN_2PI + log_det + maha);

    // Update with Joseph-form covariance.
    let gain = {
        let pct = &cov_pred * params.c.transpose();
        chol.solve(&pct.transpose()).transpose()
    };
    let mean_post = &mean_pred + &gain * &innovation;
    let n = belief.dim();
    let ikc = DMatrix::<f64>::identity(n, n) - &gain * &params.c;
    let mut cov_post = &ikc * &cov_pred * ikc.transpose() + &gain * &params.r * gain.transpose();
    symmetrize(&mut cov_post);

    Ok(StepOutput {
        posterior: GaussianBelief::new(mean_post, cov_post),
        log_pred,
    })
}

/// One predict-update cycle. Returns the posterior belief and
/// `log p(y_t | y_{1:t-1}, r_{0:t}) = log N(y; C m^-, C P^- C' + R)`.
pub fn kalman_step(
    belief: &GaussianBelief,
    params: &RegimeParams,
    obs: &DVector<f64>,
) -> Result<(GaussianBelief, f64), KalmanError> {
    let out = step_inner(belief, params, obs)?;
    Ok((out.posterior, out.log_pred))
}

/// The predictive log-density of [`kalman_step`] without committing the
/// update. Shares the step's code path, so the two agree bitwise.
pub fn kalman_predictive(
    belief: &GaussianBelief,
    params: &RegimeParams,
    obs: &DVector<f64>,
) -> Result<f64, KalmanError> {
    Ok(step_inner(belief, params, obs)?.log_pred)
}
