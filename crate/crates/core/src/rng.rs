//! Reproducible random streams.
//!
//! Every stochastic component draws from `ChaCha8Rng` seeded with the run
//! seed and a stream id `(domain << 56) | index`. Streams do not depend on
//! execution order, so parallel and sequential runs agree bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Domain {
    Population = 1,
    Replication = 2,
    GarchParams = 3,
    Theory = 4,
    Frontier = 5,
    Panel = 6,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    debug_assert!(index < 1 << 56);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) | index);
    rng
}
