//! Seeded random streams.
//!
//! Every random choice in the crate draws from a `ChaCha8Rng` whose seed is
//! derived from a master seed and a stream label, so independent pieces of a
//! run (splits, folds, tie-break tags, trials) never share a generator and the
//! result does not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of a labelled substream.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(stream.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Derives a seed from a path of labels, e.g. `(trial, fold)`.
pub fn derive_path(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(master, |acc, &label| derive_seed(acc, label))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(master: u64, stream: u64) -> Rng {
    rng_from_seed(derive_seed(master, stream))
}

/// One standard normal draw.
pub fn std_normal<R: rand::Rng + ?Sized>(r: &mut R) -> f64 {
    r.sample(StandardNormal)
}
