//! Counter-addressed random streams.
//!
//! Every random draw in the controller is addressed by a tuple of counters
//! rather than by position in a shared generator, so the values a rollout
//! sees do not depend on which worker evaluates it or in what order.
//! The tuple is mapped onto a ChaCha8 key (seed, purpose, cycle, iteration)
//! and stream id (rollout, sub-rollout), which makes streams for distinct
//! tuples disjoint by construction.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    ControlNoise = 1,
    DynamicsNoise = 2,
    Other = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: Purpose,
    pub cycle: u64,
    pub iteration: u64,
    pub rollout: u32,
    pub sub_rollout: u32,
}

impl StreamKey {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(self.purpose as u64).to_le_bytes());
        key[16..24].copy_from_slice(&self.cycle.to_le_bytes());
        key[24..32].copy_from_slice(&self.iteration.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(((self.rollout as u64) << 32) | self.sub_rollout as u64);
        rng
    }
}
