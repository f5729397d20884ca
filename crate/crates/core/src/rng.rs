//! Pinned pseudo-random streams.
//!
//! All randomness in the crate comes from ChaCha8 seeded through
//! [`stream`]; sub-streams are derived with SplitMix64 so that a single root
//! seed fans out into independent, reproducible streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Version tag of the generator recipe; bump when any draw order changes.
pub const GENERATOR_VERSION: &str = "chacha8-splitmix64-v1";

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sub-stream `index` under `root`, further separated by `salt`.
pub fn derive(root: u64, salt: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ splitmix64(salt)).wrapping_add(index))
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Integer approximate Gaussian noise (Irwin–Hall sum of twelve 16-bit
/// uniforms), scaled to `sigma_milli / 1000` and rounded half away from zero.
pub fn gaussian_noise(rng: &mut Stream, sigma_milli: i64) -> i64 {
    if sigma_milli == 0 {
        return 0;
    }
    let mut sum: i64 = 0;
    for _ in 0..3 {
        let w = rng.next_u64();
        sum += (w & 0xFFFF) as i64 + ((w >> 16) & 0xFFFF) as i64 + ((w >> 32) & 0xFFFF) as i64 + (w >> 48) as i64;
    }
    // 2*sum - 12*65535 has standard deviation ~2*65536.
    let centred = 2 * sum - 12 * 65535;
    let num = centred * sigma_milli;
    let den = 2 * 65536 * 1000;
    if num >= 0 {
        (num + den / 2) / den
    } else {
        -((-num + den / 2) / den)
    }
}
