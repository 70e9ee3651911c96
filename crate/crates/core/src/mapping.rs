// SPDX-License-Identifier: Apache-2.0

//! Embedding-and-mapping baseline: an affine map fitted by full-batch Adam to
//! minimize the mean squared distance between mapped source embeddings and
//! target embeddings of the training overlap users.

use crate::affine::{apply_raw, backprop_raw, AffineMap, UserTransform};
use crate::dataset::{OverlapSet, OverlapUser};
use crate::error::{Error, Result};
use crate::meta::cold_start_embed;
use crate::models::BaseModel;
use crate::optim::{AdamConfig, AdamState};
use crate::rng::{seeded, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct MappingNetwork {
    pub map: AffineMap,
}

impl UserTransform for MappingNetwork {
    fn affine(&self) -> &AffineMap {
        &self.map
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 0.001,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingOutcome {
    pub net: MappingNetwork,
    /// MSE before each epoch's update.
    pub loss_curve: Vec<f64>,
    pub final_loss: f64,
}

/// Same initialization as the meta network: `I + N(0, 0.01²)`, zero bias.
pub fn init_mapping_network(dim: usize, seed: u64) -> Result<MappingNetwork> {
    if dim == 0 {
        return Err(Error::InvalidArgument("mapping dim must be >= 1".into()));
    }
    let map = AffineMap::identity_with_noise(dim, crate::meta::INIT_NOISE_STD, &mut seeded(seed, Stream::Mapping))?;
    Ok(MappingNetwork { map })
}

fn mse(
    params: &[f64],
    dim: usize,
    pairs: &[(&[f64], &[f64])],
    grad: Option<&mut [f64]>,
) -> f64 {
    let n = pairs.len() as f64;
    let mut total = 0.0;
    let mut grad = grad;
    for (src, tgt) in pairs {
        let mapped = apply_raw(dim, params, src);
        let resid: Vec<f64> = mapped.iter().zip(*tgt).map(|(m, t)| m - t).collect();
        total += resid.iter().map(|r| r * r).sum::<f64>();
        if let Some(g) = grad.as_deref_mut() {
            let d_out: Vec<f64> = resid.iter().map(|r| 2.0 * r / n).collect();
            backprop_raw(dim, src, &d_out, g);
        }
    }
    total / n
}

pub fn train_mapping(
    source: &BaseModel,
    target: &BaseModel,
    train_overlap: &OverlapSet,
    config: &MappingConfig,
) -> Result<MappingOutcome> {
    Error::check_dim(source.dim(), target.dim())?;
    if train_overlap.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    if !(config.lr > 0.0 && config.lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("mapping lr must be > 0, got {}", config.lr)));
    }
    let dim = source.dim();
    let pairs = train_overlap
        .iter()
        .map(|u| {
            if u.source >= source.users.rows() || u.target >= target.users.rows() {
                return Err(Error::UnknownUser(u.id.clone()));
            }
            Ok((source.users.row(u.source), target.users.row(u.target)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut net = init_mapping_network(dim, config.seed)?;
    let mut adam = AdamState::new(net.map.params.len(), AdamConfig::with_lr(config.lr));
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut grad = vec![0.0; net.map.params.len()];
    for epoch in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let loss = mse(&net.map.params.values, dim, &pairs, Some(&mut grad));
        if !loss.is_finite() {
            return Err(Error::Divergence {
                stage: "map-train",
                at: format!("epoch {}", epoch + 1),
            });
        }
        loss_curve.push(loss);
        adam.step(&mut net.map.params.values, &grad)?;
    }
    let final_loss = mse(&net.map.params.values, dim, &pairs, None);
    if !final_loss.is_finite() {
        return Err(Error::Divergence {
            stage: "map-train",
            at: format!("epoch {}", config.epochs),
        });
    }
    Ok(MappingOutcome {
        net,
        loss_curve,
        final_loss,
    })
}

pub fn map_cold_user(net: &MappingNetwork, source: &BaseModel, user: &OverlapUser) -> Result<Vec<f64>> {
    cold_start_embed(net, source, user)
}
