// SPDX-License-Identifier: Apache-2.0

//! Seeded random streams. Every stochastic step of the pipeline draws from
//! its own ChaCha stream so that changing one stage never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers; one per pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Split = 1,
    Pretrain = 2,
    FoldIn = 3,
    Meta = 4,
    MetaTasks = 7,
    Mapping = 5,
    Synth = 6,
}

pub fn seeded(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
