//! Seed derivation. Every random stream is a `ChaCha8Rng` seeded from the
//! master seed, a purpose tag and an index, so parallel and serial runs draw
//! identical values.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit tag of a purpose string (FNV-1a).
fn tag(purpose: &str) -> u64 {
    purpose.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

pub fn derive_seed(master: u64, purpose: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ tag(purpose)) ^ index)
}

pub fn stream(master: u64, purpose: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(master, purpose, index))
}
