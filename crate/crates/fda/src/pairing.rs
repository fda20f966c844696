//! Seeded source to target pairing.
//!
//! Every work item owns a ChaCha20 substream keyed by `(seed, purpose,
//! repeat, source index)`, so a worker can rebuild the generator for any item
//! without replaying the ones before it.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// Name and version of the generator layout below. Bump on any change that
/// alters drawn values.
pub const PRNG_NAME: &str = "chacha20-stream-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Target drawn uniformly per source.
    #[default]
    Random,
    /// Target = source position mod target count.
    FixedCycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Pairing,
    Crop,
}

/// Generator for one item. Repeats are limited to `2^31`.
pub fn item_rng(seed: u64, purpose: Purpose, repeat: u32, index: u32) -> ChaCha20Rng {
    debug_assert!(repeat < 1 << 31);
    let tag = match purpose {
        Purpose::Pairing => 0,
        Purpose::Crop => 1u64 << 63,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(tag | (u64::from(repeat) << 32) | u64::from(index));
    rng
}

/// Uniform draw from `0..n` by widening multiply with rejection.
pub fn bounded(rng: &mut impl RngCore, n: u64) -> u64 {
    assert!(n > 0);
    let reject_below = n.wrapping_neg() % n;
    loop {
        let wide = u128::from(rng.next_u64()) * u128::from(n);
        if (wide as u64) >= reject_below {
            return (wide >> 64) as u64;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Pair {
    pub repeat: u32,
    pub source: usize,
    pub target: usize,
}

/// Target index for one source item.
pub fn pick_target(pairing: Pairing, seed: u64, repeat: u32, source: usize, n_targets: usize) -> usize {
    assert!(n_targets > 0);
    match pairing {
        Pairing::FixedCycle => source % n_targets,
        Pairing::Random => {
            let index = u32::try_from(source).expect("source index fits in 32 bits");
            let mut rng = item_rng(seed, Purpose::Pairing, repeat, index);
            bounded(&mut rng, n_targets as u64) as usize
        }
    }
}

/// All pairs, repeat-major then source order.
pub fn pair_stream(n_sources: usize, n_targets: usize, pairing: Pairing, seed: u64, repeats: u32) -> Vec<Pair> {
    (0..repeats)
        .flat_map(|repeat| {
            (0..n_sources).map(move |source| Pair {
                repeat,
                source,
                target: pick_target(pairing, seed, repeat, source, n_targets),
            })
        })
        .collect()
}
