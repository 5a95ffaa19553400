//! Seed derivation. Every random choice in the pipeline draws from a
//! ChaCha8 stream keyed by the run seed plus a tag path (stage constant,
//! then e.g. cluster id and bin index), so adding samples to one bin never
//! perturbs draws in another, and results are identical across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_KMEANS: u64 = 0x6b6d_6561_6e73;
pub const TAG_SILHOUETTE: u64 = 0x7369_6c68;
pub const TAG_SAMPLER: u64 = 0x7374_7261_7461;

/// Independent RNG stream for `(seed, tags...)`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = mix(seed);
    for &t in tags {
        state = mix(state ^ mix(t));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = mix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

// splitmix64 finalizer; diffuses tag order into the key.
fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
