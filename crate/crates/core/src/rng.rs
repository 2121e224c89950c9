//! Counter-based random streams.
//!
//! Every random draw is taken from a ChaCha stream keyed by
//! `(master seed, domain)` and selected by a stream index (the path index),
//! so a path's values never depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DOMAIN_PATHS: u64 = 0x7061_7468;
pub const DOMAIN_SMOOTHING: u64 = 0x736d_6f6f;
pub const DOMAIN_REFINE: u64 = 0x7265_666e;
pub const DOMAIN_SUBSETS: u64 = 0x7375_6273;

pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a labelled sub-task (for example `(n, rep)` of an experiment).
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix(seed), |acc, &l| splitmix(acc ^ splitmix(l)))
}
