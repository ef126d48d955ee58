//! Seeded randomness shared by every component.
//!
//! All streams are ChaCha8 keyed through [`rng`]. Integer, float, shuffle and
//! Gaussian draws are written out here rather than taken from `rand`'s
//! distribution machinery, so the exact sequence of draws is pinned down by
//! this file alone:
//!
//! * `randint(lo, hi)`: inclusive; draws `next_u64` and rejects values at or
//!   above the largest multiple of the span, then returns `lo + x % span`.
//! * `uniform()`: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`.
//! * `shuffle`: Fisher-Yates from the last index down, `j = randint(0, i)`.
//! * `gaussian()`: Box-Muller on two `uniform()` draws, cosine branch only.
//! * `derive_seed(seed, tag, id)`: splitmix64 over the seed, an FNV-1a hash
//!   of the tag, and the id.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Independent sub-seed for a named purpose.
pub fn derive_seed(seed: u64, tag: &str, id: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ fnv1a(tag.as_bytes())) ^ id)
}

pub fn derived(seed: u64, tag: &str, id: u64) -> Rng {
    rng(derive_seed(seed, tag, id))
}

/// Uniform integer in `lo..=hi`.
pub fn randint(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    assert!(lo <= hi, "randint({lo}, {hi})");
    let span = (hi - lo) as u64 + 1;
    let zone = u64::MAX - (u64::MAX % span + 1) % span;
    loop {
        let x = rng.next_u64();
        if x <= zone {
            return lo + (x % span) as usize;
        }
    }
}

pub fn uniform(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn uniform_in(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

pub fn gaussian(rng: &mut Rng) -> f64 {
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = randint(rng, 0, i);
        items.swap(i, j);
    }
}

/// `count` distinct indices from `0..len`, in draw order.
pub fn choose_indices(rng: &mut Rng, len: usize, count: usize) -> Vec<usize> {
    assert!(count <= len);
    let mut pool: Vec<usize> = (0..len).collect();
    for i in 0..count {
        let j = randint(rng, i, len - 1);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}
