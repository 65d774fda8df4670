//! Seed derivation for the simulation.
//!
//! Every random stream in a run is a ChaCha8 generator keyed by a seed
//! derived from the master seed and a list of integer tags (client id,
//! epoch, split index, ...). Streams are therefore independent of thread
//! scheduling and of the order in which they are created.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

// Stream tags. Kept distinct so two purposes never share a stream.
pub const TAG_INIT: u64 = 1;
pub const TAG_CLIENT: u64 = 2;
pub const TAG_SHUFFLE: u64 = 3;
pub const TAG_SPLIT: u64 = 4;
pub const TAG_NEGATIVES: u64 = 5;
pub const TAG_SUBSET: u64 = 6;
pub const TAG_TRAIN: u64 = 7;
pub const TAG_RANDOM_MODEL: u64 = 8;
pub const TAG_CROSS_VALIDATION: u64 = 9;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `tags` into `master` one at a time.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(master), |acc, &t| {
        splitmix64(acc ^ splitmix64(t))
    })
}

pub fn stream(master: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, tags))
}
