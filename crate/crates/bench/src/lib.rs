// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the criterion benches.

use rand_distr::{Distribution, StandardNormal};
use tmcdr_core::dataset::TrainingSample;
use tmcdr_core::meta::PhaseSample;
use tmcdr_core::rng::{seeded, Stream};
use tmcdr_core::Embeddings;

pub struct Fixture {
    pub source: Embeddings,
    pub items: Embeddings,
    pub data_a: Vec<PhaseSample>,
    pub data_b: Vec<PhaseSample>,
}

/// Random tables plus two phases of `group_size` users with four negatives each.
pub fn fixture(dim: usize, group_size: usize, n_items: usize, seed: u64) -> Fixture {
    let mut rng = seeded(seed, Stream::Synth);
    let mut table = |rows: usize| {
        let data = (0..rows * dim).map(|_| 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
        Embeddings::from_vec(rows, dim, data).expect("sized")
    };
    let source = table(2 * group_size);
    let items = table(n_items);
    let phase = |users: std::ops::Range<usize>| -> Vec<PhaseSample> {
        users
            .map(|u| PhaseSample {
                source_user: u,
                sample: TrainingSample {
                    user: u,
                    pos_item: u % n_items,
                    neg_items: (1..=4).map(|k| (u + k) % n_items).collect(),
                },
            })
            .collect()
    };
    Fixture {
        source,
        items,
        data_a: phase(0..group_size),
        data_b: phase(group_size..2 * group_size),
    }
}
