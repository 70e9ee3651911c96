// SPDX-License-Identifier: Apache-2.0

//! Transfer stage: fits one base model per domain on all of that domain's
//! interactions with minibatch Adam and fresh negatives every epoch.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::dataset::{sample_negatives, InteractionDataset, TrainingSample};
use crate::error::{Error, Result};
use crate::models::{project_unit_ball_in_place, sample_loss, BaseModel, ModelKind};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::{seeded, Rng, Stream};
use crate::tensor::{axpy, norm, Embeddings};

pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub kind: ModelKind,
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub l2: f64,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mf,
            dim: 16,
            epochs: 20,
            batch_size: 256,
            lr: 0.01,
            l2: 1e-5,
            negatives_per_positive: 4,
            seed: 42,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("pretrain: {what}")));
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be >= 0");
        }
        if let ModelKind::Cml { margin } = self.kind {
            ModelKind::cml(margin)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutcome {
    pub model: BaseModel,
    /// Mean task loss per positive, one entry per epoch.
    pub loss_curve: Vec<f64>,
}

fn gaussian_table(rows: usize, dim: usize, kind: ModelKind, rng: &mut Rng) -> Embeddings {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let data = (0..rows * dim).map(|_| normal.sample(rng)).collect();
    let mut table = Embeddings::from_vec(rows, dim, data).expect("shape by construction");
    if kind.is_metric() {
        for r in 0..rows {
            project_unit_ball_in_place(table.row_mut(r));
        }
    }
    table
}

/// Gaussian initialization, N(0, 0.1²) per entry, deterministic by seed.
pub fn init_model(dataset: &InteractionDataset, config: &PretrainConfig) -> Result<BaseModel> {
    config.validate()?;
    init_with(dataset, config, &mut seeded(config.seed, Stream::Pretrain))
}

fn init_with(dataset: &InteractionDataset, config: &PretrainConfig, rng: &mut Rng) -> Result<BaseModel> {
    if dataset.interactions().is_empty() {
        return Err(Error::EmptyDataset);
    }
    let users = gaussian_table(dataset.num_users(), config.dim, config.kind, rng);
    let items = gaussian_table(dataset.num_items(), config.dim, config.kind, rng);
    BaseModel::new(config.kind, users, items)
}

pub fn train_base_model(dataset: &InteractionDataset, config: &PretrainConfig) -> Result<PretrainOutcome> {
    config.validate()?;
    let mut rng = seeded(config.seed, Stream::Pretrain);
    let mut model = init_with(dataset, config, &mut rng)?;
    let positives = dataset.interactions().to_vec();
    let loss_curve = fit(&mut model, dataset, positives, config, Trainable::All, &mut rng)?;
    Ok(PretrainOutcome { model, loss_curve })
}

/// Fits fresh embeddings for `users` against the frozen item table of
/// `model`, using those users' interactions in `dataset`. Every other row
/// is returned unchanged.
pub fn fold_in_users(
    model: &BaseModel,
    dataset: &InteractionDataset,
    users: &[usize],
    config: &PretrainConfig,
) -> Result<PretrainOutcome> {
    config.validate()?;
    Error::check_dim(model.dim(), config.dim)?;
    Error::check_dim(model.users.rows(), dataset.num_users())?;
    let mut rng = seeded(config.seed, Stream::FoldIn);
    let mut model = model.clone();
    let fresh = gaussian_table(users.len(), config.dim, model.kind, &mut rng);
    for (k, &u) in users.iter().enumerate() {
        model.users.row_mut(u).copy_from_slice(fresh.row(k));
    }
    let positives: Vec<_> = users
        .iter()
        .flat_map(|&u| dataset.user_items(u).iter().map(move |&i| (u, i)))
        .collect();
    if positives.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let loss_curve = fit(&mut model, dataset, positives, config, Trainable::UsersOnly, &mut rng)?;
    Ok(PretrainOutcome { model, loss_curve })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Trainable {
    All,
    UsersOnly,
}

fn fit(
    model: &mut BaseModel,
    dataset: &InteractionDataset,
    mut positives: Vec<(usize, usize)>,
    config: &PretrainConfig,
    trainable: Trainable,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let dim = model.dim();
    let n_users = model.users.rows();
    // one moment table covering user rows then item rows
    let mut adam = AdamState::new((n_users + model.items.rows()) * dim, AdamConfig::with_lr(config.lr));
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        positives.shuffle(rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in positives.chunks(config.batch_size).enumerate() {
            let at = || format!("epoch {} batch {}", epoch + 1, b + 1);
            let mut grads: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            let mut batch_loss = 0.0;
            for &(user, pos_item) in batch {
                let sample = TrainingSample {
                    user,
                    pos_item,
                    neg_items: sample_negatives(dataset, user, config.negatives_per_positive, rng)?,
                };
                let lg = sample_loss(model.kind, model.users.row(user), &model.items, &sample)?;
                if !lg.is_finite() {
                    return Err(Error::Divergence { stage: "pretrain", at: at() });
                }
                batch_loss += lg.value;
                accumulate(&mut grads, user, &lg.d_user, dim);
                if trainable == Trainable::All {
                    for (item, g) in &lg.d_items {
                        accumulate(&mut grads, n_users + item, g, dim);
                    }
                }
            }

            let scale = 1.0 / batch.len() as f64;
            adam.begin_step();
            for (row, mut g) in grads {
                let params = if row < n_users {
                    model.users.row_mut(row)
                } else {
                    model.items.row_mut(row - n_users)
                };
                for x in g.iter_mut() {
                    *x *= scale;
                }
                axpy(2.0 * config.l2, params, &mut g);
                adam.apply(row * dim, params, &g)?;
                if model.kind.is_metric() {
                    project_unit_ball_in_place(params);
                    debug_assert!(norm(params) <= 1.0 + 1e-12);
                }
                if params.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Divergence { stage: "pretrain", at: at() });
                }
            }
            epoch_loss += batch_loss;
        }
        curve.push(epoch_loss / positives.len() as f64);
    }
    Ok(curve)
}

fn accumulate(grads: &mut BTreeMap<usize, Vec<f64>>, row: usize, g: &[f64], dim: usize) {
    axpy(1.0, g, grads.entry(row).or_insert_with(|| vec![0.0; dim]));
}
