//! Named random streams derived from one master seed.
//!
//! Every consumer (obstacle placement, destination draws, exploration,
//! tie-breaks, ...) gets its own ChaCha stream keyed by a label, so adding
//! draws in one consumer never shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn stream(master_seed: u64, label: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(fnv1a(label));
    rng
}

/// Seed for consumers that take a plain `u64` (e.g. obstacle placement).
pub fn derived_seed(master_seed: u64, label: &str) -> u64 {
    use rand::RngCore;
    stream(master_seed, label).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a1 = stream(7, "a").next_u64();
        assert_eq!(a1, stream(7, "a").next_u64());
        assert_ne!(a1, stream(7, "b").next_u64());
        assert_ne!(a1, stream(8, "a").next_u64());
    }
}
