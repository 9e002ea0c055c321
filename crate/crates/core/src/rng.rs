//! Seed derivation. Every stochastic component gets its own ChaCha stream
//! derived from the experiment seed and a stream label, so adding a consumer
//! never perturbs the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Named RNG streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Env,
    Agent(usize),
    AgentInit(usize),
    Generalist,
    GeneralistInit,
    Central,
    CentralInit,
    Offline(usize),
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Env => 1,
            Stream::Agent(k) => 0x100 + k as u64,
            Stream::AgentInit(k) => 0x1_0000 + k as u64,
            Stream::Generalist => 2,
            Stream::GeneralistInit => 3,
            Stream::Central => 4,
            Stream::CentralInit => 5,
            Stream::Offline(k) => 0x100_0000 + k as u64,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.tag().wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn stream_rng(seed: u64, stream: Stream) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, stream))
}
