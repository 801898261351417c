//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`]. A 64-bit seed
//! is expanded into independent sub-streams with ChaCha's native stream
//! counter, so `(seed, stream)` fully determines the sequence:
//!
//! | stream | consumer                                   |
//! |--------|--------------------------------------------|
//! | 0      | environment dynamics (MDP and bit flips)   |
//! | 1      | behaviour policy (epsilon-greedy)          |
//! | 2      | hyperparameter sampling in sweeps          |
//!
//! Sweep runs derive their training seed from `(master_seed, index)` with
//! [`derive_seed`]. This mapping is part of the reproducibility contract and
//! must not change between releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const ENV_STREAM: u64 = 0;
pub const POLICY_STREAM: u64 = 1;
pub const SAMPLING_STREAM: u64 = 2;

/// Returns the generator for `stream` of `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer applied to `master ^ golden * (index + 1)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws an index from a list of probabilities with one uniform variate.
///
/// The walk is cumulative in list order; rounding slack past the last entry
/// selects the last entry with positive probability.
pub fn sample_index<R: rand::Rng + ?Sized>(rng: &mut R, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}
