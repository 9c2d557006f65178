//! Selection schemes: multinomial, residual and stratified resampling.
//!
//! All three return offspring counts with `sum(counts) == N` and
//! `E[counts_i] = N * w_i`, and run in O(N). Inverse-CDF traversal is in
//! ascending particle index with ties broken toward the lower index.

use rand::Rng;

use crate::error::SelectionError;
use crate::particle::WeightedParticleSet;
use crate::weights::LogWeights;

/// Offspring counts produced by a selection scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffspringCounts {
    pub counts: Vec<usize>,
}

impl OffspringCounts {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Which selection scheme a filter uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResamplerKind {
    Multinomial,
    Residual,
    Stratified,
}

impl ResamplerKind {
    pub fn draw<R: Rng>(self, weights: &[f64], n: usize, rng: &mut R) -> OffspringCounts {
        match self {
            ResamplerKind::Multinomial => multinomial(weights, n, rng),
            ResamplerKind::Residual => residual(weights, n, rng),
            ResamplerKind::Stratified => stratified(weights, n, rng),
        }
    }
}

fn assert_weights(weights: &[f64]) {
    debug_assert!(!weights.is_empty());
    debug_assert!(
        (weights.iter().sum::<f64>() - 1.0).abs() < 1e-6,
        "selection requires normalized weights"
    );
}

/// Draw `counts ~ Multinomial(n, weights)` in O(n) using sorted uniforms
/// generated from exponential spacings.
pub fn multinomial<R: Rng>(weights: &[f64], n: usize, rng: &mut R) -> OffspringCounts {
    assert_weights(weights);
    let mut counts = vec![0usize; weights.len()];
    if n == 0 {
        return OffspringCounts { counts };
    }
    // Order statistics of n uniforms: cumulative exponential gaps scaled by
    // the total of n+1 gaps.
    let mut gaps = Vec::with_capacity(n + 1);
    let mut total = 0.0f64;
    for _ in 0..=n {
        let e = -(1.0 - rng.random::<f64>()).ln();
        total += e;
        gaps.push(total);
    }
    let mut idx = 0usize;
    let mut cum = weights[0];
    for k in 0..n {
        let u = gaps[k] / total;
        while u > cum && idx + 1 < weights.len() {
            idx += 1;
            cum += weights[idx];
        }
        counts[idx] += 1;
    }
    OffspringCounts { counts }
}

/// Residual resampling: deterministic `floor(n * w_i)` offspring plus a
/// multinomial draw of the remainder on the normalized residuals.
pub fn residual<R: Rng>(weights: &[f64], n: usize, rng: &mut R) -> OffspringCounts {
    assert_weights(weights);
    let mut counts = vec![0usize; weights.len()];
    let mut residuals = vec![0.0f64; weights.len()];
    let mut assigned = 0usize;
    for (i, &w) in weights.iter().enumerate() {
        let scaled = n as f64 * w;
        let floor = scaled.floor();
        counts[i] = floor as usize;
        assigned += counts[i];
        residuals[i] = scaled - floor;
    }
    let leftover = n - assigned.min(n);
    if leftover > 0 {
        let total: f64 = residuals.iter().sum();
        if total > 0.0 {
            for r in &mut residuals {
                *r /= total;
            }
            let extra = multinomial(&residuals, leftover, rng);
            for (c, e) in counts.iter_mut().zip(extra.counts) {
                *c += e;
            }
        } else {
            // Residuals vanish only when every n*w_i is an integer, in
            // which case leftover is zero; guard against float dust.
            counts[0] += leftover;
        }
    }
    OffspringCounts { counts }
}

/// Stratified resampling: one independent uniform per stratum
/// `((k-1)/n, k/n]`, mapped through the inverse CDF of the weights.
pub fn stratified<R: Rng>(weights: &[f64], n: usize, rng: &mut R) -> OffspringCounts {
    assert_weights(weights);
    let mut counts = vec![0usize; weights.len()];
    let mut idx = 0usize;
    let mut cum = weights[0];
    for k in 0..n {
        // (1 - random) lies in (0, 1], keeping the stratum half-open on
        // the left as specified.
        let u = (k as f64 + (1.0 - rng.random::<f64>())) / n as f64;
        while u > cum && idx + 1 < weights.len() {
            idx += 1;
            cum += weights[idx];
        }
        counts[idx] += 1;
    }
    OffspringCounts { counts }
}

/// Replace the set by `counts[i]` deep copies of particle `i`, resetting
/// weights to uniform. Offspring of lower-indexed particles come first.
pub fn apply_selection<R: Clone, S: Clone>(
    ps: &WeightedParticleSet<R, S>,
    counts: &OffspringCounts,
) -> Result<WeightedParticleSet<R, S>, SelectionError> {
    let n = ps.len();
    if counts.counts.len() != n || counts.total() != n {
        return Err(SelectionError::CountMismatch {
            expected: n,
            got: counts.total(),
        });
    }
    let mut roots = Vec::with_capacity(n);
    let mut stats = Vec::with_capacity(n);
    let mut windows = ps.windows.as_ref().map(|_| Vec::with_capacity(n));
    for (i, &c) in counts.counts.iter().enumerate() {
        for _ in 0..c {
            roots.push(ps.roots[i].clone());
            stats.push(ps.stats[i].clone());
            if let (Some(dst), Some(src)) = (windows.as_mut(), ps.windows.as_ref()) {
                dst.push(src[i].clone());
            }
        }
    }
    Ok(WeightedParticleSet {
        roots,
        stats,
        weights: LogWeights::uniform(n),
        step: ps.step,
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn multinomial_point_mass_always_collapses() {
        let mut r = rng(1);
        for _ in 0..200 {
            let c = multinomial(&[1.0, 0.0, 0.0], 5, &mut r);
            assert_eq!(c.counts, vec![5, 0, 0]);
        }
    }

    #[test]
    fn multinomial_matches_binomial_law() {
        let mut r = rng(2);
        let trials = 10_000;
        let mut freq = [0usize; 3]; // counts[0] in {0,1,2}
        let mut mean = 0.0;
        for _ in 0..trials {
            let c = multinomial(&[0.5, 0.5], 2, &mut r);
            assert_eq!(c.total(), 2);
            freq[c.counts[0]] += 1;
            mean += c.counts[0] as f64;
        }
        mean /= trials as f64;
        assert!((mean - 1.0).abs() < 0.03, "mean {mean}");
        // {1/4, 1/2, 1/4} within loose Monte Carlo bands.
        assert!((freq[0] as f64 / trials as f64 - 0.25).abs() < 0.02);
        assert!((freq[1] as f64 / trials as f64 - 0.50).abs() < 0.02);
        assert!((freq[2] as f64 / trials as f64 - 0.25).abs() < 0.02);
    }

    #[test]
    fn residual_integer_expectations_are_deterministic() {
        let mut r = rng(3);
        assert_eq!(residual(&[0.5, 0.5], 2, &mut r).counts, vec![1, 1]);
        assert_eq!(residual(&[0.75, 0.25], 4, &mut r).counts, vec![3, 1]);
    }

    #[test]
    fn residual_single_leftover_law() {
        // floor(2*0.6)=1, floor(2*0.4)=0, residuals (0.2, 0.8); the one
        // leftover lands on particle 0 with probability 0.2, which keeps
        // E[counts_0] = 1.2 = n*w_0.
        let mut r = rng(4);
        let trials = 20_000;
        let mut two_zero = 0usize;
        for _ in 0..trials {
            let c = residual(&[0.6, 0.4], 2, &mut r);
            assert_eq!(c.total(), 2);
            match c.counts[..] {
                [2, 0] => two_zero += 1,
                [1, 1] => {}
                _ => panic!("impossible counts {:?}", c.counts),
            }
        }
        let p = two_zero as f64 / trials as f64;
        assert!((p - 0.2).abs() < 0.015, "P([2,0]) = {p}");
    }

    #[test]
    fn residual_mean_counts_match_expectation() {
        let mut r = rng(41);
        let w = [0.6, 0.4];
        let trials = 20_000;
        let mut sums = [0.0f64; 2];
        for _ in 0..trials {
            let c = residual(&w, 2, &mut r);
            for (s, &ci) in sums.iter_mut().zip(&c.counts) {
                *s += ci as f64;
            }
        }
        assert!((sums[0] / trials as f64 - 1.2).abs() < 0.02);
        assert!((sums[1] / trials as f64 - 0.8).abs() < 0.02);
    }

    #[test]
    fn stratified_uniform_weights_give_one_offspring_each() {
        let mut r = rng(5);
        for _ in 0..200 {
            let c = stratified(&[0.25; 4], 4, &mut r);
            assert_eq!(c.counts, vec![1, 1, 1, 1]);
        }
    }

    #[test]
    fn stratified_point_mass() {
        let mut r = rng(6);
        assert_eq!(stratified(&[1.0, 0.0], 3, &mut r).counts, vec![3, 0]);
    }

    #[test]
    fn stratified_half_half_is_deterministic() {
        let mut r = rng(7);
        for _ in 0..200 {
            assert_eq!(stratified(&[0.5, 0.5], 2, &mut r).counts, vec![1, 1]);
        }
    }

    #[test]
    fn selection_identity_and_collapse() {
        let ps = WeightedParticleSet::<usize, f64> {
            roots: vec![10, 20, 30],
            stats: vec![0.1, 0.2, 0.3],
            weights: LogWeights::new(vec![0.3, -0.1, 0.5]),
            step: 4,
            windows: None,
        };
        let id = apply_selection(
            &ps,
            &OffspringCounts {
                counts: vec![1, 1, 1],
            },
        )
        .unwrap();
        assert_eq!(id.roots, vec![10, 20, 30]);
        assert_eq!(id.weights.values, vec![0.0; 3]);

        let collapsed = apply_selection(
            &ps,
            &OffspringCounts {
                counts: vec![0, 3, 0],
            },
        )
        .unwrap();
        assert_eq!(collapsed.roots, vec![20, 20, 20]);
        assert_eq!(collapsed.stats, vec![0.2, 0.2, 0.2]);
    }

    #[test]
    fn selection_multiset_matches_counts() {
        let ps = WeightedParticleSet::<usize, f64> {
            roots: vec![1, 2, 3, 4],
            stats: vec![1.0, 2.0, 3.0, 4.0],
            weights: LogWeights::uniform(4),
            step: 0,
            windows: None,
        };
        let sel = apply_selection(
            &ps,
            &OffspringCounts {
                counts: vec![2, 0, 1, 1],
            },
        )
        .unwrap();
        let mut got = sel.roots.clone();
        got.sort_unstable();
        assert_eq!(got, vec![1, 1, 3, 4]);
    }

    #[test]
    fn selection_count_mismatch_is_an_error() {
        let ps = WeightedParticleSet::<usize, f64> {
            roots: vec![1, 2],
            stats: vec![1.0, 2.0],
            weights: LogWeights::uniform(2),
            step: 0,
            windows: None,
        };
        assert!(apply_selection(
            &ps,
            &OffspringCounts {
                counts: vec![2, 1]
            }
        )
        .is_err());
    }

    #[test]
    fn all_schemes_conserve_total_count() {
        let mut r = rng(8);
        for seed in 0..50u64 {
            let raw: Vec<f64> = (0..7).map(|i| ((seed + i) % 11 + 1) as f64).collect();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            for kind in [
                ResamplerKind::Multinomial,
                ResamplerKind::Residual,
                ResamplerKind::Stratified,
            ] {
                assert_eq!(kind.draw(&w, 13, &mut r).total(), 13);
            }
        }
    }

    #[test]
    fn schemes_scale_linearly() {
        // Coarse guard against superlinear implementations: 100x the input
        // should cost far less than 1000x the time of the small input.
        let mut r = rng(9);
        let time_for = |n: usize, r: &mut ChaCha12Rng| {
            let w = vec![1.0 / n as f64; n];
            // Warm up allocation paths.
            let _ = multinomial(&w, n, r);
            let start = std::time::Instant::now();
            let _ = multinomial(&w, n, r);
            let _ = residual(&w, n, r);
            let _ = stratified(&w, n, r);
            start.elapsed().as_secs_f64()
        };
        let small = time_for(10_000, &mut r).max(1e-5);
        let large = time_for(1_000_000, &mut r);
        assert!(
            large / small < 1000.0,
            "resampling cost ratio {} suggests superlinear scaling",
            large / small
        );
    }
}
