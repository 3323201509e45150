//! Deterministic randomness. One scenario seed fans out into independent
//! substreams, one per stochastic stage, so changing e.g. the perturbation
//! draw never reshuffles the topology draw.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stochastic stages, each pinned to its own ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Site placement (Poisson count + uniform positions).
    Sites,
    /// Independent edge thinning of the neighbor graph.
    EdgeThinning,
    /// Initial load vectors.
    InitialLoads,
    /// Load perturbations around an operating point.
    Perturbation,
    /// User placement and demand in the radio layer.
    Users,
    /// Seeded selection of which cells carry a non-default policy.
    PolicySelection,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Sites => 1,
            Stream::EdgeThinning => 2,
            Stream::InitialLoads => 3,
            Stream::Perturbation => 4,
            Stream::Users => 5,
            Stream::PolicySelection => 6,
        }
    }
}

/// RNG for one (seed, stage) pair. Identical inputs give identical draws.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
