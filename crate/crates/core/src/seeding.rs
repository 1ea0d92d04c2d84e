//! Deterministic seed splitting.
//!
//! All randomness in a run derives from one `u64` run seed through an
//! integer-only hash, so the stream layout is identical on every platform:
//!
//! * step seed  = `mix(run_seed, t)`
//! * draw seed  = `mix(step_seed, b)`
//! * noise seed = `mix(mix(run_seed ^ NOISE_TAG, t), b)`
//!
//! `mix` is two rounds of the SplitMix64 finalizer. Each derived seed feeds
//! a `ChaCha8Rng`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
pub const NOISE_TAG: u64 = 0x6E6F_6973_655F_7374;
pub const INDUCING_TAG: u64 = 0x696E_6475_6369_6E67;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine a parent seed with a child index.
pub fn mix(parent: u64, child: u64) -> u64 {
    splitmix64(parent ^ splitmix64(child.wrapping_add(GOLDEN)))
}

pub fn step_seed(run_seed: u64, t: usize) -> u64 {
    mix(run_seed, t as u64)
}

pub fn draw_seed(step_seed: u64, b: usize) -> u64 {
    mix(step_seed, b as u64)
}

pub fn noise_seed(run_seed: u64, t: usize, b: usize) -> u64 {
    mix(mix(run_seed ^ NOISE_TAG, t as u64), b as u64)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
