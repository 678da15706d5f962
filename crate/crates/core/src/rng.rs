//! Named random substreams derived from a single root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the substream `name` under `root`.
pub fn derive_seed(root: u64, name: &str) -> u64 {
    mix64(root ^ mix64(fnv1a(name.as_bytes())))
}

pub fn substream(root: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, name))
}

/// Uniform draw in `[0, 1)` keyed by `(root, name, key)`; independent of any
/// other draw order.
pub fn keyed_uniform(root: u64, name: &str, key: &str) -> f64 {
    let h = mix64(derive_seed(root, name) ^ fnv1a(key.as_bytes()));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
