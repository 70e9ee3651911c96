// SPDX-License-Identifier: Apache-2.0

//! Seeded two-domain world with a planted affine relation between the
//! source and target factors of overlapping users.
//!
//! Overlap users are `o{n}`, source-only users `s{n}`, target-only users
//! `t{n}`; items are `si{n}` and `ti{n}`. Interactions are Bernoulli draws
//! through `σ(scale·⟨u, v⟩/√d + offset)`.

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::io::write_file;
use crate::models::{BaseModel, ModelKind};
use crate::rng::{seeded, Rng, Stream};
use crate::tensor::{dot, norm, sigmoid, Embeddings};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub users_per_domain: usize,
    pub items_per_domain: usize,
    pub dim: usize,
    pub overlap: usize,
    /// Std of the Gaussian noise added after the affine transform.
    pub noise: f64,
    /// Std of the translation `c` in `A·u + c`.
    pub translation: f64,
    pub logit_scale: f64,
    pub logit_offset: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users_per_domain: 400,
            items_per_domain: 200,
            dim: 8,
            overlap: 120,
            noise: 0.05,
            translation: 0.1,
            logit_scale: 4.0,
            logit_offset: -3.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(format!("synth: {what}")));
        if self.dim == 0 || self.users_per_domain == 0 || self.items_per_domain == 0 {
            return bad("users, items and dim must be >= 1".into());
        }
        if self.overlap > self.users_per_domain {
            return bad(format!("overlap {} exceeds users per domain {}", self.overlap, self.users_per_domain));
        }
        for (name, v) in [("noise", self.noise), ("translation", self.translation)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0"));
            }
        }
        if !(self.logit_scale.is_finite() && self.logit_offset.is_finite()) {
            return bad("logit parameters must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld {
    pub source: InteractionDataset,
    pub target: InteractionDataset,
    /// Generating factors, rows aligned with the datasets' user and item indices.
    pub source_truth: BaseModel,
    pub target_truth: BaseModel,
    /// Row-major `d × d` orthogonal matrix.
    pub transform: Vec<f64>,
    pub translation: Vec<f64>,
}

impl SynthWorld {
    /// Writes `source.tsv` and `target.tsv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, ds) in [("source.tsv", &self.source), ("target.tsv", &self.target)] {
            let mut buf = Vec::new();
            ds.write_tsv(&mut buf).expect("writing to memory");
            write_file(&dir.join(name), &buf)?;
        }
        Ok(())
    }
}

fn randn(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Gram-Schmidt on a Gaussian matrix; rows come out orthonormal.
fn random_orthogonal(dim: usize, rng: &mut Rng) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v = randn(rng, dim);
        for r in &rows {
            let p = dot(&v, r);
            v.iter_mut().zip(r).for_each(|(x, y)| *x -= p * y);
        }
        let n = norm(&v);
        if n > 1e-6 {
            rows.push(v.iter().map(|x| x / n).collect());
        }
    }
    rows.concat()
}

struct Domain {
    users: Vec<(String, Vec<f64>)>,
    items: Vec<(String, Vec<f64>)>,
}

impl Domain {
    fn sample(&self, config: &SynthConfig, rng: &mut Rng, domain_id: &str) -> Result<(InteractionDataset, BaseModel)> {
        let scale = config.logit_scale / (config.dim as f64).sqrt();
        let logits: Vec<Vec<f64>> = self
            .users
            .iter()
            .map(|(_, u)| self.items.iter().map(|(_, v)| scale * dot(u, v) + config.logit_offset).collect())
            .collect();
        let mut hits: Vec<Vec<bool>> = logits
            .iter()
            .map(|row| row.iter().map(|&z| rng.random::<f64>() < sigmoid(z)).collect())
            .collect();
        // Every user and every item gets at least its most likely interaction.
        for (u, row) in logits.iter().enumerate() {
            if !hits[u].iter().any(|&h| h) {
                hits[u][argmax(row.iter().copied())] = true;
            }
        }
        for i in 0..self.items.len() {
            if !hits.iter().any(|row| row[i]) {
                let u = argmax(logits.iter().map(|row| row[i]));
                hits[u][i] = true;
            }
        }
        let pairs = hits.iter().enumerate().flat_map(|(u, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &h)| h)
                .map(move |(i, _)| (self.users[u].0.as_str(), self.items[i].0.as_str()))
        });
        let ds = InteractionDataset::from_pairs(domain_id, pairs)?;

        let d = config.dim;
        let mut users = Embeddings::zeros(ds.num_users(), d);
        for (id, f) in &self.users {
            users.row_mut(ds.users().get(id).expect("every user interacts")).copy_from_slice(f);
        }
        let mut items = Embeddings::zeros(ds.num_items(), d);
        for (id, f) in &self.items {
            items.row_mut(ds.items().get(id).expect("every item interacts")).copy_from_slice(f);
        }
        Ok((ds, BaseModel::new(ModelKind::Mf, users, items)?))
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    values
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
        .0
}

pub fn generate(config: &SynthConfig) -> Result<SynthWorld> {
    config.validate()?;
    let d = config.dim;
    let mut rng = seeded(config.seed, Stream::Synth);
    let transform = random_orthogonal(d, &mut rng);
    let translation: Vec<f64> = randn(&mut rng, d).iter().map(|x| x * config.translation).collect();
    let noise = Normal::new(0.0, config.noise).expect("validated std");

    let mut source = Domain { users: Vec::new(), items: Vec::new() };
    let mut target = Domain { users: Vec::new(), items: Vec::new() };
    for n in 0..config.overlap {
        let u = randn(&mut rng, d);
        let mapped: Vec<f64> = (0..d)
            .map(|i| dot(&transform[i * d..(i + 1) * d], &u) + translation[i] + noise.sample(&mut rng))
            .collect();
        source.users.push((format!("o{n}"), u));
        target.users.push((format!("o{n}"), mapped));
    }
    for n in 0..config.users_per_domain - config.overlap {
        source.users.push((format!("s{n}"), randn(&mut rng, d)));
        target.users.push((format!("t{n}"), randn(&mut rng, d)));
    }
    for n in 0..config.items_per_domain {
        source.items.push((format!("si{n}"), randn(&mut rng, d)));
        target.items.push((format!("ti{n}"), randn(&mut rng, d)));
    }

    let (source_ds, source_truth) = source.sample(config, &mut rng, "source")?;
    let (target_ds, target_truth) = target.sample(config, &mut rng, "target")?;
    Ok(SynthWorld {
        source: source_ds,
        target: target_ds,
        source_truth,
        target_truth,
        transform,
        translation,
    })
}
