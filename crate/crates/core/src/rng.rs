//! Reproducible random streams.
//!
//! Every chain, training sample and evaluation draw gets its own ChaCha8
//! stream derived from `(seed, purpose, index)`. ChaCha is counter based, so
//! results never depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream namespaces. The high 16 bits of the ChaCha stream id carry the
/// purpose, the low 48 bits the index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Chain = 1,
    TrainSample = 2,
    EvalSample = 3,
    ModelGen = 4,
    Init = 5,
    ParamInit = 6,
    Gmm = 7,
    Misc = 15,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | (index & ((1 << 48) - 1)));
    rng
}

/// Plain seeded generator for tests and one-off uses.
pub fn seeded(seed: u64) -> Rng {
    stream(seed, Purpose::Misc, 0)
}
