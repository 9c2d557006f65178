//! Exact conditional filter for the grid map: per-cell categorical color
//! posteriors, conditionally independent given the sampled location
//! trajectory.
//!
//! Beliefs are stored as linear-space probabilities; the number of colors
//! is small and every update renormalizes its rows.

use serde::{Deserialize, Serialize};

/// Per-cell color marginals `P(M_t(i) = c | y_{1:t}, L_{1:t})`, stored
/// row-major as an `n_cells x n_colors` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredMapBelief {
    n_cells: usize,
    n_colors: usize,
    probs: Vec<f64>,
}

impl FactoredMapBelief {
    /// Independent uniform prior over colors for every cell.
    pub fn uniform(n_cells: usize, n_colors: usize) -> Self {
        assert!(n_colors >= 2);
        FactoredMapBelief {
            n_cells,
            n_colors,
            probs: vec![1.0 / n_colors as f64; n_cells * n_colors],
        }
    }

    /// Point mass on a known map.
    pub fn known(map: &[usize], n_colors: usize) -> Self {
        let mut belief = FactoredMapBelief {
            n_cells: map.len(),
            n_colors,
            probs: vec![0.0; map.len() * n_colors],
        };
        for (cell, &color) in map.iter().enumerate() {
            assert!(color < n_colors);
            belief.probs[cell * n_colors + color] = 1.0;
        }
        belief
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, n_colors: usize) -> Self {
        let n_cells = rows.len();
        let mut probs = Vec::with_capacity(n_cells * n_colors);
        for row in rows {
            assert_eq!(row.len(), n_colors);
            probs.extend(row);
        }
        FactoredMapBelief {
            n_cells,
            n_colors,
            probs,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_colors(&self) -> usize {
        self.n_colors
    }

    pub fn row(&self, cell: usize) -> &[f64] {
        &self.probs[cell * self.n_colors..(cell + 1) * self.n_colors]
    }

    pub fn prob(&self, cell: usize, color: usize) -> f64 {
        self.probs[cell * self.n_colors + color]
    }

    /// Most probable color per cell (lowest index on ties).
    pub fn argmax_map(&self) -> Vec<usize> {
        (0..self.n_cells)
            .map(|cell| {
                let row = self.row(cell);
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

    /// Every row sums to one within `tol` and entries lie in `[0, 1]`.
    pub fn check_normalized(&self, tol: f64) -> bool {
        (0..self.n_cells).all(|cell| {
            let row = self.row(cell);
            row.iter().all(|&p| (-tol..=1.0 + tol).contains(&p))
                && (row.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }
}

/// Diffuse every cell marginal by the symmetric color-flip kernel: a cell
/// keeps its color with probability `1 - p_change` and otherwise moves to
/// a uniformly chosen different color.
pub fn map_predict(belief: &FactoredMapBelief, p_change: f64) -> FactoredMapBelief {
    if p_change == 0.0 {
        return belief.clone();
    }
    let nc = belief.n_colors;
    let off = p_change / (nc as f64 - 1.0);
    let mut out = belief.clone();
    for cell in 0..belief.n_cells {
        let row = belief.row(cell);
        let total: f64 = row.iter().sum();
        for c in 0..nc {
            out.probs[cell * nc + c] = (1.0 - p_change) * row[c] + off * (total - row[c]);
        }
    }
    out
}

/// Sensor likelihood `P(observed = c' | true color c)` under symmetric
/// flip noise `epsilon`.
pub fn sensor_likelihood(observed: usize, color: usize, epsilon: f64, n_colors: usize) -> f64 {
    if observed == color {
        1.0 - epsilon
    } else {
        epsilon / (n_colors as f64 - 1.0)
    }
}

/// Absorb one step's color readings at the given absolute cells.
///
/// Returns the posterior belief and the predictive log-likelihood
/// `sum_j log sum_c P(y_j | c) theta_j(c)`. An observation that is
/// impossible under the belief yields `-inf` (the caller propagates it as
/// a dead particle weight, not an error); the affected row is left
/// unchanged.
pub fn map_update(
    belief: &FactoredMapBelief,
    readings: &[(usize, usize)],
    epsilon: f64,
) -> (FactoredMapBelief, f64) {
    let nc = belief.n_colors;
    let mut out = belief.clone();
    let mut log_pred = 0.0f64;
    for &(cell, observed) in readings {
        assert!(cell < belief.n_cells, "reading outside the grid");
        assert!(observed < nc, "unknown color in reading");
        let row = &mut out.probs[cell * nc..(cell + 1) * nc];
        let mut predictive = 0.0f64;
        for (c, p) in row.iter().enumerate() {
            predictive += sensor_likelihood(observed, c, epsilon, nc) * p;
        }
        if predictive <= 0.0 {
            log_pred = f64::NEG_INFINITY;
            continue;
        }
        for (c, p) in row.iter_mut().enumerate() {
            *p = sensor_likelihood(observed, c, epsilon, nc) * *p / predictive;
        }
        log_pred += predictive.ln();
    }
    (out, log_pred)
}
