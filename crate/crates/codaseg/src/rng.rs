//! Seeding helpers.
//!
//! All randomness flows through ChaCha8 streams keyed by (seed, purpose,
//! index) so that parallel and serial execution draw identical values. The
//! sub-seed mix is splitmix64 over the purpose/index words; both algorithms
//! are fixed and platform-independent.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derives a sub-seed from a root seed, a purpose tag, and an index.
pub fn sub_seed(seed: u64, purpose: &str, index: u64) -> u64 {
    let mut h = splitmix64(seed);
    for b in purpose.as_bytes() {
        h = splitmix64(h ^ u64::from(*b));
    }
    splitmix64(h ^ index)
}

/// ChaCha8 stream for (seed, purpose, index).
pub fn stream(seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, purpose, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u32> = (0..4).map(|_| stream(7, "gen", 3).gen()).collect();
        let b: Vec<u32> = (0..4).map(|_| stream(7, "gen", 3).gen()).collect();
        assert_eq!(a, b);
        let c: u32 = stream(7, "gen", 4).gen();
        let d: u32 = stream(7, "aug", 3).gen();
        assert_ne!(a[0], c);
        assert_ne!(a[0], d);
    }

    #[test]
    fn known_splitmix_vector() {
        // Reference value for splitmix64(0) from the published algorithm.
        assert_eq!(splitmix64(0), 0xe220a8397b1dcdaf);
    }
}
