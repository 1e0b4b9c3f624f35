//! Stable seed derivation for reproducible, independently addressable
//! random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a master seed and a key path into a child seed. Stable across
/// platforms and releases.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    for byte in master.to_le_bytes() {
        h = (h ^ byte as u64).wrapping_mul(FNV_PRIME);
    }
    for part in parts {
        for &byte in part.as_bytes() {
            h = (h ^ byte as u64).wrapping_mul(FNV_PRIME);
        }
        // separator so ("ab","c") != ("a","bc")
        h = (h ^ 0xff).wrapping_mul(FNV_PRIME);
    }
    splitmix(h)
}

/// Sub-stream `stream` of the ChaCha generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
