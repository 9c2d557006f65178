//! Deterministic RNG streams.
//!
//! Every random draw in the engine comes from a ChaCha stream keyed by
//! `(seed, phase, step, particle index)`. Serial and parallel execution
//! therefore produce bit-identical results, and permuting particle indices
//! permutes their streams with them.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Which part of an algorithm a stream feeds. Distinct phases at the same
/// `(step, index)` get independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    InitRoot,
    Propose,
    Select,
    Mcmc,
    Simulate,
    Trial,
}

impl Phase {
    fn tag(self) -> u64 {
        match self {
            Phase::InitRoot => 0,
            Phase::Propose => 1,
            Phase::Select => 2,
            Phase::Mcmc => 3,
            Phase::Simulate => 4,
            Phase::Trial => 5,
        }
    }
}

const STEP_BITS: u32 = 30;
const INDEX_BITS: u32 = 30;

/// Stream for particle `index` in `phase` at time `step`.
///
/// Steps and indices must fit in 30 bits each; desk-scale experiments sit
/// far below that.
pub fn stream(seed: u64, phase: Phase, step: usize, index: usize) -> ChaCha12Rng {
    assert!((step as u64) < (1 << STEP_BITS), "step out of stream range");
    assert!(
        (index as u64) < (1 << INDEX_BITS),
        "particle index out of stream range"
    );
    let nonce =
        (phase.tag() << (STEP_BITS + INDEX_BITS)) | ((step as u64) << INDEX_BITS) | index as u64;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(nonce);
    rng
}

/// Derive a fresh 64-bit seed for an independent sub-experiment (e.g. one
/// trial of a Monte Carlo harness). SplitMix64 finalizer.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
