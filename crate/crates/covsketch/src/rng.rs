//! Seeded random number generation.
//!
//! Every stochastic routine in this crate draws from a ChaCha8 stream seeded
//! explicitly by the caller; normal variates use the ziggurat sampler from
//! `rand_distr`. Derived seeds (per-trial, per-role) come from the splitmix64
//! finalizer below, so any trial of any sweep can be regenerated in isolation.

use rand_chacha::ChaCha8Rng;

/// Builds the crate's RNG for a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// splitmix64 finalizer: a bijective 64-bit mix with good avalanche.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a word into a seed: `mix(s, v) = splitmix64(s ^ splitmix64(v))`.
pub fn mix(seed: u64, word: u64) -> u64 {
    splitmix64(seed ^ splitmix64(word))
}

/// Per-trial seed for a sweep cell: successive `mix` folds of
/// `(k, r, trial_index)` into the master seed, in that order.
pub fn trial_seed(master: u64, k: usize, r: usize, trial_index: usize) -> u64 {
    let mut s = mix(master, k as u64);
    s = mix(s, r as u64);
    mix(s, trial_index as u64)
}

/// Role tags for deriving independent sub-streams from one trial seed.
pub mod role {
    pub const TARGET: u64 = 0x7461_7267; // "targ"
    pub const EMBEDDING: u64 = 0x656d_6264; // "embd"
    pub const PROBES: u64 = 0x7072_6f62; // "prob"
    pub const SAMPLES: u64 = 0x7361_6d70; // "samp"
    pub const NOISE: u64 = 0x6e6f_6973; // "nois"
}
