// SPDX-License-Identifier: Apache-2.0

//! The single fully connected layer `u ↦ W·u + b` shared by the meta network
//! and the mapping baseline.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::optim::FlatParams;
use crate::rng::Rng;
use crate::tensor::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    dim: usize,
    /// `W` row-major (`W[i][j]` at `i * dim + j`) followed by `b`.
    pub params: FlatParams,
}

impl AffineMap {
    pub fn layout(dim: usize) -> FlatParams {
        FlatParams::zeros(&[("W", dim * dim), ("b", dim)])
    }

    pub fn identity(dim: usize) -> Self {
        let mut params = Self::layout(dim);
        let w = params.segment_mut("W");
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        Self { dim, params }
    }

    /// Identity plus i.i.d. N(0, noise_std²) on `W`; `b` starts at zero.
    pub fn identity_with_noise(dim: usize, noise_std: f64, rng: &mut Rng) -> Result<Self> {
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise std must be >= 0, got {noise_std}")));
        }
        let mut map = Self::identity(dim);
        if noise_std > 0.0 {
            let normal = Normal::new(0.0, noise_std).expect("valid std");
            for w in map.params.segment_mut("W") {
                *w += normal.sample(rng);
            }
        }
        Ok(map)
    }

    pub fn from_params(dim: usize, values: Vec<f64>) -> Result<Self> {
        let params = Self::layout(dim).with_values(values)?;
        Ok(Self { dim, params })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        self.params.segment("W")
    }

    pub fn bias(&self) -> &[f64] {
        self.params.segment("b")
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim, u.len())?;
        Ok(apply_raw(self.dim, &self.params.values, u))
    }

    pub fn is_finite(&self) -> bool {
        self.params.is_finite()
    }
}

/// `W·u + b` on a raw parameter vector.
pub(crate) fn apply_raw(dim: usize, params: &[f64], u: &[f64]) -> Vec<f64> {
    let (w, b) = params.split_at(dim * dim);
    (0..dim).map(|i| dot(&w[i * dim..(i + 1) * dim], u) + b[i]).collect()
}

/// Chain rule through the affine map: `dW += d_out·uᵀ`, `db += d_out`.
pub(crate) fn backprop_raw(dim: usize, u: &[f64], d_out: &[f64], grad: &mut [f64]) {
    let (gw, gb) = grad.split_at_mut(dim * dim);
    for i in 0..dim {
        let row = &mut gw[i * dim..(i + 1) * dim];
        for j in 0..dim {
            row[j] += d_out[i] * u[j];
        }
        gb[i] += d_out[i];
    }
}

/// Anything that maps a source-domain user vector into the target space.
pub trait UserTransform {
    fn affine(&self) -> &AffineMap;

    fn transform(&self, u_source: &[f64]) -> Result<Vec<f64>> {
        self.affine().apply(u_source)
    }
}

impl UserTransform for AffineMap {
    fn affine(&self) -> &AffineMap {
        self
    }
}
