//! Seed derivation and the seeded generator shared by every random component.
//!
//! All randomness is drawn from ChaCha8 streams. A master seed fans out into
//! independent per-item seeds through a splitmix64 finalizer, so any single
//! record can be replayed from its stored seed alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Name written into file headers so saved artifacts declare their generator.
pub const PRNG_NAME: &str = "chacha8+ziggurat-normal";

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// splitmix64 output function.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive the seed of item `index` in logical stream `stream` from a master seed.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let s = splitmix64(master ^ splitmix64(stream.wrapping_mul(0xD6E8_FEB8_6659_FD93)));
    splitmix64(s.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// In-place Fisher-Yates shuffle using 64-bit index draws.
pub fn shuffle<T>(items: &mut [T], rng: &mut SeededRng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i as u64) as usize;
        items.swap(i, j);
    }
}

/// A seed for runs where the user did not supply one.
pub fn fresh_seed() -> u64 {
    let nanos =
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0);
    splitmix64(nanos ^ u64::from(std::process::id()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_across_streams_and_indices() {
        let a = derive_seed(7, 0, 0);
        assert_ne!(a, derive_seed(7, 1, 0));
        assert_ne!(a, derive_seed(7, 0, 1));
        assert_ne!(a, derive_seed(8, 0, 0));
        assert_eq!(a, derive_seed(7, 0, 0));
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut v: Vec<usize> = (0..100).collect();
        shuffle(&mut v, &mut seeded(3));
        let mut s = v.clone();
        s.sort();
        assert_eq!(s, (0..100).collect::<Vec<_>>());
        assert_ne!(v, s);
    }
}
