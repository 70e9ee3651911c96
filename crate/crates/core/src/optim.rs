// SPDX-License-Identifier: Apache-2.0

//! Plain gradient steps, Adam with bias correction, and central-difference
//! gradient and Hessian-vector oracles.

use crate::error::{Error, Result};

/// A named slice of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Parameters packed into one vector with named segments laid out back to
/// back.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatParams {
    pub values: Vec<f64>,
    layout: Vec<Segment>,
}

impl FlatParams {
    pub fn zeros(segments: &[(&str, usize)]) -> Self {
        let mut layout = Vec::with_capacity(segments.len());
        let mut offset = 0;
        for &(name, len) in segments {
            layout.push(Segment {
                name: name.to_owned(),
                offset,
                len,
            });
            offset += len;
        }
        Self {
            values: vec![0.0; offset],
            layout,
        }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Error::check_dim(self.values.len(), values.len())?;
        Ok(Self {
            values,
            layout: self.layout.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> &[Segment] {
        &self.layout
    }

    fn find(&self, name: &str) -> &Segment {
        self.layout
            .iter()
            .find(|s| s.name == name)
            .unwrap_or_else(|| panic!("no parameter segment named `{name}`"))
    }

    pub fn segment(&self, name: &str) -> &[f64] {
        let s = self.find(name);
        &self.values[s.offset..s.offset + s.len]
    }

    pub fn segment_mut(&mut self, name: &str) -> &mut [f64] {
        let s = self.find(name).clone();
        &mut self.values[s.offset..s.offset + s.len]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// `params - lr * grad`
pub fn sgd_step(params: &FlatParams, grad: &[f64], lr: f64) -> Result<FlatParams> {
    Error::check_dim(params.len(), grad.len())?;
    if lr.is_nan() || lr < 0.0 {
        return Err(Error::InvalidArgument(format!("learning rate must be >= 0, got {lr}")));
    }
    let values = params.values.iter().zip(grad).map(|(p, g)| p - lr * g).collect();
    params.with_values(values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adam moments for a parameter vector.
///
/// [`AdamState::step`] updates the whole vector. Sparse trainers call
/// [`AdamState::begin_step`] once per minibatch and then
/// [`AdamState::apply`] for each touched slice, so untouched rows keep their
/// moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        Error::check_dim(self.m.len(), params.len())?;
        self.begin_step();
        self.apply(0, params, grad)
    }

    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Applies the current step's update to `params`, which occupy
    /// `offset..offset + params.len()` of the full vector.
    pub fn apply(&mut self, offset: usize, params: &mut [f64], grad: &[f64]) -> Result<()> {
        Error::check_dim(params.len(), grad.len())?;
        if offset + params.len() > self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                found: offset + params.len(),
            });
        }
        assert!(self.step > 0, "begin_step must precede apply");
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let m = &mut self.m[offset..offset + params.len()];
        let v = &mut self.v[offset..offset + params.len()];
        for i in 0..params.len() {
            let g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Functional form: returns the advanced state and updated parameters.
pub fn adam_step(state: &AdamState, params: &FlatParams, grad: &[f64]) -> Result<(AdamState, FlatParams)> {
    let mut state = state.clone();
    let mut params = params.clone();
    state.step(&mut params.values, grad)?;
    Ok((state, params))
}

/// Central-difference gradient of `f` at `params`.
pub fn finite_diff_grad<F>(f: F, params: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("step must be positive, got {eps}")));
    }
    let mut x = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let plus = f(&x);
        x[i] = orig - eps;
        let minus = f(&x);
        x[i] = orig;
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::NonFinite(format!("objective near coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

/// `H·vec` by central differences of the gradient map along `vec`.
pub fn hessian_vector_product<G>(grad: G, params: &[f64], vec: &[f64], eps: f64) -> Result<Vec<f64>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    Error::check_dim(params.len(), vec.len())?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("step must be positive, got {eps}")));
    }
    let shifted = |sign: f64| -> Vec<f64> { params.iter().zip(vec).map(|(p, v)| p + sign * eps * v).collect() };
    let plus = grad(&shifted(1.0))?;
    let minus = grad(&shifted(-1.0))?;
    Error::check_dim(params.len(), plus.len())?;
    let hv: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
    if hv.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("gradient in Hessian-vector product".into()));
    }
    Ok(hv)
}
