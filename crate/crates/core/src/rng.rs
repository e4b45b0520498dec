//! Counter-based seed streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! global seed and a tuple of tags, so results never depend on the order in
//! which independent pieces of work are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// Tags naming the independent random streams used across the crate.
pub mod tags {
    pub const POLICY_INIT: u64 = 0x01;
    pub const CRITIC_INIT: u64 = 0x02;
    pub const ENV_RESET: u64 = 0x03;
    pub const ACTION: u64 = 0x04;
    pub const VALUE_SAMPLES: u64 = 0x05;
    pub const SHUFFLE: u64 = 0x06;
    pub const CFM_PATH: u64 = 0x07;
    pub const TOY_DATA: u64 = 0x08;
    pub const TOY_EVAL: u64 = 0x09;
    pub const CHECKS: u64 = 0x0a;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of tags into a single 64-bit seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(base: u64, tags: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

#[inline]
pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream(7, &[1, 2]).random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut x = stream(7, &[1, 2]);
        let mut y = stream(7, &[2, 1]);
        assert_ne!(x.random::<u64>(), y.random::<u64>());
    }
}
