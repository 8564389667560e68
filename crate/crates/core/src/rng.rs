//! Deterministic seeding.
//!
//! A master seed fans out into one seed per trial, and each trial seed fans
//! out into named sub-streams. Reward and prior streams do not depend on the
//! communication policy, so two policy variants run under the same master
//! seed see identical reward sequences and identical initial beliefs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STREAM_REWARDS: u64 = 0x5245_5741_5244_5300;
const STREAM_PRIOR: u64 = 0x5052_494f_5200_0000;
const STREAM_TIE_BREAK: u64 = 0x5449_4542_524b_0000;
const STREAM_GRAPH: u64 = 0x4752_4150_4800_0000;
const STREAM_TRIAL: u64 = 0x5452_4941_4c00_0000;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of tags into a new 64-bit seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

/// Seed of trial `trial` under `master`.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    derive_seed(master, &[STREAM_TRIAL, trial])
}

/// Named random sub-streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialStreams {
    seed: u64,
}

impl TrialStreams {
    pub fn new(master: u64, trial: u64) -> Self {
        Self {
            seed: trial_seed(master, trial),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream for the reward draw at step `t`. A pure function of
    /// `(master, trial, t)`: the step index selects the ChaCha stream.
    pub fn rewards(&self, t: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[STREAM_REWARDS]));
        rng.set_stream(t);
        rng
    }

    pub fn prior(&self, agent: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[STREAM_PRIOR, agent as u64]))
    }

    /// Tie-breaking in option selection.
    pub fn tie_break(&self, agent: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[STREAM_TIE_BREAK, agent as u64]))
    }

    /// Neighbor selection (random graphs and tie-breaking among peers).
    pub fn graph(&self, agent: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[STREAM_GRAPH, agent as u64]))
    }
}
