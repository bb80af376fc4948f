//! Deterministic random streams.
//!
//! Every consumer of randomness (proposal, each episode rollout, the accept
//! draw, ...) gets its own stream derived from the run seed and a path of
//! integer labels. Streams never share state, so rollouts can run in any
//! order and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream labels used by the samplers.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const PROPOSAL: u64 = 2;
    pub const ACCEPT: u64 = 3;
    pub const CURRENT: u64 = 4;
    pub const CANDIDATE: u64 = 5;
    pub const RESET: u64 = 6;
    pub const ACTIONS: u64 = 7;
    pub const CURIOSITY: u64 = 8;
    pub const EVAL: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a label path into a single 64-bit stream seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, path))
}

/// Reset and action streams for one episode rollout.
pub struct EpisodeStreams {
    pub reset: StreamRng,
    pub actions: StreamRng,
}

impl EpisodeStreams {
    pub fn new(seed: u64, path: &[u64]) -> Self {
        let mut reset_path = path.to_vec();
        reset_path.push(tag::RESET);
        let mut action_path = path.to_vec();
        action_path.push(tag::ACTIONS);
        Self {
            reset: stream(seed, &reset_path),
            actions: stream(seed, &action_path),
        }
    }
}
