//! Named random sub-streams derived from one seed.
//!
//! Every consumer of randomness draws from its own ChaCha stream so that,
//! for example, switching regimes (which changes how many mixing coins are
//! flipped) leaves parameter initialization and data order untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init,
    Data,
    Mixing,
    Gumbel,
    Shuffle,
    Probe,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Data => 2,
            Stream::Mixing => 3,
            Stream::Gumbel => 4,
            Stream::Shuffle => 5,
            Stream::Probe => 6,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
