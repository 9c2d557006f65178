//! Small statistical test kit used by the diagnostic harnesses and the
//! verification suites: one-sided variance comparisons, the Mann-Kendall
//! trend test, chi-squared goodness of fit, and least-squares slopes.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Significance thresholds for the statistical harnesses. Kept in one
/// configurable record rather than scattered through the code; the CLI can
/// override it from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// One-sided level for variance-ordering and variance-reduction tests.
    pub variance_alpha: f64,
    /// One-sided level for the Mann-Kendall trend test.
    pub trend_alpha: f64,
    /// Level for chi-squared goodness-of-fit tests.
    pub chi2_alpha: f64,
    /// Standard-error multiple for mean-agreement checks.
    pub se_factor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            variance_alpha: 0.01,
            trend_alpha: 0.05,
            chi2_alpha: 0.01,
            se_factor: 4.0,
        }
    }
}

impl Thresholds {
    pub fn variance_z_crit(&self) -> f64 {
        normal_quantile(1.0 - self.variance_alpha)
    }

    pub fn trend_z_crit(&self) -> f64 {
        normal_quantile(1.0 - self.trend_alpha)
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("unit normal")
        .inverse_cdf(p)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Large-sample standard error of the sample variance,
/// `sqrt((m4 - s^4) / n)` with `m4` the fourth central moment.
fn variance_se(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let s2 = variance(xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    ((m4 - s2 * s2).max(0.0) / n).sqrt()
}

/// z-statistic for the one-sided hypothesis `var(a) > var(b)`. Positive
/// values favor the hypothesis; zero when both samples are degenerate.
pub fn variance_excess_z(a: &[f64], b: &[f64]) -> f64 {
    let diff = variance(a) - variance(b);
    let se = (variance_se(a).powi(2) + variance_se(b).powi(2)).sqrt();
    if se == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    } else {
        diff / se
    }
}

/// Mann-Kendall trend z-statistic: positive for an increasing trend.
pub fn mann_kendall_z(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            s += match xs[j].partial_cmp(&xs[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    let var = (n * (n - 1) * (2 * n + 5)) as f64 / 18.0;
    if s > 0 {
        (s as f64 - 1.0) / var.sqrt()
    } else if s < 0 {
        (s as f64 + 1.0) / var.sqrt()
    } else {
        0.0
    }
}

/// Pearson chi-squared statistic of observed counts against expected
/// probabilities. Categories with zero expectation must have zero counts.
pub fn chi2_statistic(observed: &[u64], expected_probs: &[f64]) -> (f64, usize) {
    assert_eq!(observed.len(), expected_probs.len());
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut dof = 0usize;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = p * total as f64;
        if e > 0.0 {
            stat += (o as f64 - e).powi(2) / e;
            dof += 1;
        } else {
            assert_eq!(o, 0, "observed mass in a zero-probability category");
        }
    }
    (stat, dof.saturating_sub(1))
}

/// Upper-tail p-value of a chi-squared statistic.
pub fn chi2_pvalue(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    1.0 - dist.cdf(stat)
}

/// Least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn variance_basics() {
        assert_abs_diff_eq!(variance(&[1.0, 2.0, 3.0]), 1.0, epsilon = 1e-12);
        assert_eq!(variance(&[5.0]), 0.0);
    }

    #[test]
    fn variance_excess_detects_ordering() {
        let tight: Vec<f64> = (0..2000).map(|i| (i % 7) as f64 * 0.01).collect();
        let wide: Vec<f64> = (0..2000).map(|i| (i % 97) as f64).collect();
        assert!(variance_excess_z(&wide, &tight) > 5.0);
        assert!(variance_excess_z(&tight, &wide) < -5.0);
        assert_eq!(variance_excess_z(&[1.0, 1.0], &[2.0, 2.0]), 0.0);
    }

    #[test]
    fn mann_kendall_direction() {
        let up: Vec<f64> = (0..20).map(|i| i as f64 + 0.1 * ((i * 7) % 3) as f64).collect();
        let down: Vec<f64> = up.iter().rev().cloned().collect();
        assert!(mann_kendall_z(&up) > 1.645);
        assert!(mann_kendall_z(&down) < -1.645);
    }

    #[test]
    fn chi2_on_fair_counts_is_small() {
        let (stat, dof) = chi2_statistic(&[5000, 5000], &[0.5, 0.5]);
        assert_eq!(dof, 1);
        assert!(chi2_pvalue(stat, dof) > 0.9);
        let (stat, dof) = chi2_statistic(&[9000, 1000], &[0.5, 0.5]);
        assert!(chi2_pvalue(stat, dof) < 1e-6);
    }

    #[test]
    fn slope_of_exact_line() {
        let xs: Vec<f64> = (1..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        assert_abs_diff_eq!(ols_slope(&xs, &ys), -2.0, epsilon = 1e-12);
    }

    #[test]
    fn quantiles_match_tables() {
        assert_abs_diff_eq!(normal_quantile(0.99), 2.326, epsilon = 1e-3);
        assert_abs_diff_eq!(normal_quantile(0.95), 1.645, epsilon = 1e-3);
    }
}
