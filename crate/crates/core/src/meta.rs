// SPDX-License-Identifier: Apache-2.0

//! Meta stage: a task-oriented affine network trained MAML-style on
//! simulated cold-start tasks built from overlapping users.
//!
//! Each task group draws `2·group_size` overlap users and splits them into a
//! learning phase (`U_a`) and a cold-start phase (`U_b`). The network adapts
//! on the learning phase with one plain gradient step of size λ,
//!
//! ```text
//! θ' = θ − λ ∇L_a(θ)
//! ```
//!
//! and is scored on the cold-start phase. The outer gradient differentiates
//! through that step:
//!
//! ```text
//! ∇_θ L_b(θ') = (I − λ ∇²L_a(θ)) ∇L_b(θ')
//! ```
//!
//! The Hessian-vector product is taken by central differences of the analytic
//! phase gradient. Both phase losses are the target model's own training
//! loss evaluated with `W·u^s + b` in place of the target user embedding, and
//! the pretrained embeddings are never modified.

use std::collections::BTreeMap;

use rand::seq::index;

use crate::affine::{apply_raw, backprop_raw, AffineMap, UserTransform};
use crate::dataset::{sample_negatives, InteractionDataset, OverlapSet, OverlapUser, TrainingSample};
use crate::error::{Error, Result};
use crate::models::{sample_loss, BaseModel, ModelKind};
use crate::optim::{hessian_vector_product, sgd_step, AdamConfig, AdamState, FlatParams};
use crate::rng::{seeded, Rng, Stream};
use crate::tensor::{axpy, Embeddings};

pub const DEFAULT_INNER_LR: f64 = 0.005;
pub const INIT_NOISE_STD: f64 = 0.01;
pub const HVP_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct MetaNetwork {
    pub map: AffineMap,
}

impl UserTransform for MetaNetwork {
    fn affine(&self) -> &AffineMap {
        &self.map
    }
}

/// `W = I + N(0, 0.01²)`, `b = 0`, deterministic by seed.
pub fn init_meta_network(dim: usize, seed: u64) -> Result<MetaNetwork> {
    init_meta_network_with_noise(dim, INIT_NOISE_STD, seed)
}

pub fn init_meta_network_with_noise(dim: usize, noise_std: f64, seed: u64) -> Result<MetaNetwork> {
    if dim == 0 {
        return Err(Error::InvalidArgument("meta network dim must be >= 1".into()));
    }
    let map = AffineMap::identity_with_noise(dim, noise_std, &mut seeded(seed, Stream::Meta))?;
    Ok(MetaNetwork { map })
}

pub fn transform(net: &MetaNetwork, u_source: &[f64]) -> Result<Vec<f64>> {
    net.transform(u_source)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientOrder {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterOptimizer {
    Adam,
    /// Plain `θ ← θ − α·Σ g`.
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaConfig {
    pub inner_lr: f64,
    pub outer_lr: f64,
    pub outer_optimizer: OuterOptimizer,
    /// Users per phase.
    pub group_size: usize,
    pub groups_per_batch: usize,
    pub iterations: usize,
    pub inner_steps: usize,
    pub order: GradientOrder,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            inner_lr: DEFAULT_INNER_LR,
            outer_lr: 0.01,
            outer_optimizer: OuterOptimizer::Adam,
            group_size: 8,
            groups_per_batch: 4,
            iterations: 500,
            inner_steps: 1,
            order: GradientOrder::Second,
            negatives_per_positive: 4,
            seed: 42,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(format!("meta: {what}")));
        if !(self.inner_lr >= 0.0 && self.inner_lr.is_finite()) {
            return bad(format!("inner_lr must be >= 0, got {}", self.inner_lr));
        }
        if !(self.outer_lr > 0.0 && self.outer_lr.is_finite()) {
            return bad(format!("outer_lr must be > 0, got {}", self.outer_lr));
        }
        if self.group_size == 0 || self.groups_per_batch == 0 || self.inner_steps == 0 {
            return bad("group_size, groups_per_batch and inner_steps must be >= 1".into());
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be >= 1".into());
        }
        check_order(self.order, self.inner_steps)
    }
}

fn check_order(order: GradientOrder, inner_steps: usize) -> Result<()> {
    if order == GradientOrder::Second && inner_steps > 1 {
        return Err(Error::Unsupported(
            "second-order outer gradient requires inner_steps = 1".into(),
        ));
    }
    Ok(())
}

/// A training sample tagged with the user's source-domain row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseSample {
    pub source_user: usize,
    /// `sample.user` is the target-domain index.
    pub sample: TrainingSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskGroup {
    pub users_a: Vec<OverlapUser>,
    pub users_b: Vec<OverlapUser>,
    pub data_a: Vec<PhaseSample>,
    pub data_b: Vec<PhaseSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskBatch {
    pub groups: Vec<TaskGroup>,
}

/// Overlap users with at least one target-domain positive.
pub fn eligible_users(overlap: &OverlapSet, target: &InteractionDataset) -> Vec<OverlapUser> {
    overlap
        .iter()
        .filter(|u| u.target < target.num_users() && !target.user_items(u.target).is_empty())
        .cloned()
        .collect()
}

fn phase_samples(
    users: &[OverlapUser],
    target: &InteractionDataset,
    k: usize,
    rng: &mut Rng,
) -> Result<Vec<PhaseSample>> {
    let mut out = Vec::new();
    for u in users {
        for &pos_item in target.user_items(u.target) {
            out.push(PhaseSample {
                source_user: u.source,
                sample: TrainingSample {
                    user: u.target,
                    pos_item,
                    neg_items: sample_negatives(target, u.target, k, rng)?,
                },
            });
        }
    }
    Ok(out)
}

/// Draws `groups_per_batch` groups of `2·group_size` distinct eligible users,
/// the first half forming the learning phase and the second the cold-start
/// phase, each with all of its target positives plus fresh negatives.
pub fn sample_task_batch(
    train_overlap: &OverlapSet,
    target: &InteractionDataset,
    config: &MetaConfig,
    rng: &mut Rng,
) -> Result<TaskBatch> {
    let eligible = eligible_users(train_overlap, target);
    sample_from_eligible(&eligible, target, config, rng)
}

fn sample_from_eligible(
    eligible: &[OverlapUser],
    target: &InteractionDataset,
    config: &MetaConfig,
    rng: &mut Rng,
) -> Result<TaskBatch> {
    let need = 2 * config.group_size;
    if eligible.len() < need {
        return Err(Error::Sampling(format!(
            "{} eligible overlap users, each task group needs {need}",
            eligible.len()
        )));
    }
    let mut groups = Vec::with_capacity(config.groups_per_batch);
    for _ in 0..config.groups_per_batch {
        let picked: Vec<OverlapUser> = index::sample(rng, eligible.len(), need)
            .into_iter()
            .map(|i| eligible[i].clone())
            .collect();
        let (a, b) = picked.split_at(config.group_size);
        let data_a = phase_samples(a, target, config.negatives_per_positive, rng)?;
        let data_b = phase_samples(b, target, config.negatives_per_positive, rng)?;
        groups.push(TaskGroup {
            users_a: a.to_vec(),
            users_b: b.to_vec(),
            data_a,
            data_b,
        });
    }
    Ok(TaskBatch { groups })
}

/// Read-only view of the frozen pretrained tables a phase loss needs.
#[derive(Debug, Clone, Copy)]
pub struct PhaseContext<'a> {
    pub kind: ModelKind,
    pub source_users: &'a Embeddings,
    pub target_items: &'a Embeddings,
}

impl<'a> PhaseContext<'a> {
    pub fn new(source: &'a BaseModel, target: &'a BaseModel) -> Result<Self> {
        Error::check_dim(source.dim(), target.dim())?;
        Ok(Self {
            kind: target.kind,
            source_users: &source.users,
            target_items: &target.items,
        })
    }

    pub fn dim(&self) -> usize {
        self.source_users.dim()
    }

    pub fn param_len(&self) -> usize {
        let d = self.dim();
        d * d + d
    }
}

/// Summed task loss of a phase under `f_θ` and its gradient over θ.
pub fn phase_loss(params: &[f64], ctx: &PhaseContext<'_>, data: &[PhaseSample]) -> Result<(f64, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("phase has no samples".into()));
    }
    let dim = ctx.dim();
    Error::check_dim(ctx.param_len(), params.len())?;

    // per source user: (transformed vector, accumulated ∂L/∂f_θ(u))
    let mut users: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut value = 0.0;
    for x in data {
        if x.source_user >= ctx.source_users.rows() {
            return Err(Error::UnknownUser(format!("source row {}", x.source_user)));
        }
        let (user_vec, d_user) = users.entry(x.source_user).or_insert_with(|| {
            (
                apply_raw(dim, params, ctx.source_users.row(x.source_user)),
                vec![0.0; dim],
            )
        });
        let lg = sample_loss(ctx.kind, user_vec, ctx.target_items, &x.sample)?;
        value += lg.value;
        axpy(1.0, &lg.d_user, d_user);
    }

    let mut grad = vec![0.0; params.len()];
    for (source_user, (_, d_user)) in &users {
        backprop_raw(dim, ctx.source_users.row(*source_user), d_user, &mut grad);
    }
    Ok((value, grad))
}

/// `inner_steps` plain gradient steps of size λ on the learning phase.
pub fn inner_update(
    theta: &FlatParams,
    ctx: &PhaseContext<'_>,
    data_a: &[PhaseSample],
    inner_lr: f64,
    inner_steps: usize,
) -> Result<FlatParams> {
    let mut current = theta.clone();
    for step in 0..inner_steps {
        let (_, grad) = phase_loss(&current.values, ctx, data_a)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                stage: "inner update",
                at: format!("step {}", step + 1),
            });
        }
        current = sgd_step(&current, &grad, inner_lr)?;
    }
    Ok(current)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterGradient {
    pub grad: Vec<f64>,
    /// Cold-start phase loss at θ'.
    pub loss_b: f64,
}

/// Gradient of the cold-start loss at θ' with respect to θ.
///
/// `First` returns `∇L_b(θ')`; `Second` returns `(I − λ∇²L_a(θ))·∇L_b(θ')`,
/// which is exact only for a single inner step.
#[allow(clippy::too_many_arguments)]
pub fn outer_gradient(
    theta: &FlatParams,
    theta_prime: &FlatParams,
    ctx: &PhaseContext<'_>,
    data_a: &[PhaseSample],
    data_b: &[PhaseSample],
    inner_lr: f64,
    order: GradientOrder,
    inner_steps: usize,
) -> Result<OuterGradient> {
    check_order(order, inner_steps)?;
    let (loss_b, g_b) = phase_loss(&theta_prime.values, ctx, data_b)?;
    let grad = match order {
        GradientOrder::First => g_b,
        GradientOrder::Second => {
            second_order_correction(&theta.values, g_b, inner_lr, |p| phase_loss(p, ctx, data_a).map(|(_, g)| g))?
        }
    };
    Ok(OuterGradient { grad, loss_b })
}

/// `(I − λ∇²L_a(θ))·g_b`, with the Hessian-vector product taken by central
/// differences of `grad_a`.
pub fn second_order_correction<G>(theta: &[f64], g_b: Vec<f64>, inner_lr: f64, grad_a: G) -> Result<Vec<f64>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if inner_lr == 0.0 {
        return Ok(g_b);
    }
    let hv = hessian_vector_product(grad_a, theta, &g_b, HVP_EPS)?;
    Ok(g_b.iter().zip(&hv).map(|(g, h)| g - inner_lr * h).collect())
}

/// Single-step MAML gradient of `θ ↦ L_b(θ − λ∇L_a(θ))` for arbitrary
/// differentiable losses given by their gradients.
pub fn maml_gradient<GA, GB>(theta: &[f64], inner_lr: f64, order: GradientOrder, grad_a: GA, grad_b: GB) -> Result<Vec<f64>>
where
    GA: Fn(&[f64]) -> Result<Vec<f64>>,
    GB: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let g_a = grad_a(theta)?;
    Error::check_dim(theta.len(), g_a.len())?;
    let theta_prime: Vec<f64> = theta.iter().zip(&g_a).map(|(t, g)| t - inner_lr * g).collect();
    let g_b = grad_b(&theta_prime)?;
    match order {
        GradientOrder::First => Ok(g_b),
        GradientOrder::Second => second_order_correction(theta, g_b, inner_lr, grad_a),
    }
}

/// What the training loop saw at one iteration; passed to observers.
#[derive(Debug)]
pub struct IterationTrace<'a> {
    pub iteration: usize,
    pub batch: &'a TaskBatch,
    pub theta_before: &'a [f64],
    pub outer_grad: &'a [f64],
    /// Mean cold-start loss per sample across the batch, at θ'.
    pub cold_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaOutcome {
    pub net: MetaNetwork,
    pub loss_curve: Vec<f64>,
}

pub fn meta_train(
    source: &BaseModel,
    target: &BaseModel,
    target_data: &InteractionDataset,
    train_overlap: &OverlapSet,
    config: &MetaConfig,
) -> Result<MetaOutcome> {
    meta_train_observed(source, target, target_data, train_overlap, config, |_| {})
}

pub fn meta_train_observed<F>(
    source: &BaseModel,
    target: &BaseModel,
    target_data: &InteractionDataset,
    train_overlap: &OverlapSet,
    config: &MetaConfig,
    mut observe: F,
) -> Result<MetaOutcome>
where
    F: FnMut(&IterationTrace<'_>),
{
    config.validate()?;
    let ctx = PhaseContext::new(source, target)?;
    Error::check_dim(target_data.num_items(), target.items.rows())?;
    let mut net = init_meta_network(ctx.dim(), config.seed)?;
    let mut loss_curve = Vec::with_capacity(config.iterations);
    if config.iterations == 0 {
        return Ok(MetaOutcome { net, loss_curve });
    }

    let eligible = eligible_users(train_overlap, target_data);
    if eligible.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let mut rng = seeded(config.seed, Stream::MetaTasks);
    let mut adam = AdamState::new(ctx.param_len(), AdamConfig::with_lr(config.outer_lr));

    for it in 0..config.iterations {
        let batch = sample_from_eligible(&eligible, target_data, config, &mut rng)?;
        let theta = net.map.params.clone();
        let mut summed = vec![0.0; theta.len()];
        let (mut cold_total, mut cold_count) = (0.0, 0usize);
        for group in &batch.groups {
            let theta_prime = inner_update(&theta, &ctx, &group.data_a, config.inner_lr, config.inner_steps)?;
            let og = outer_gradient(
                &theta,
                &theta_prime,
                &ctx,
                &group.data_a,
                &group.data_b,
                config.inner_lr,
                config.order,
                config.inner_steps,
            )?;
            axpy(1.0, &og.grad, &mut summed);
            cold_total += og.loss_b;
            cold_count += group.data_b.len();
        }
        let cold_loss = cold_total / cold_count as f64;
        let diverged = || Error::Divergence {
            stage: "meta-train",
            at: format!("iteration {}", it + 1),
        };
        if !cold_loss.is_finite() || summed.iter().any(|g| !g.is_finite()) {
            return Err(diverged());
        }

        match config.outer_optimizer {
            OuterOptimizer::Adam => adam.step(&mut net.map.params.values, &summed)?,
            OuterOptimizer::Sgd => net.map.params = sgd_step(&net.map.params, &summed, config.outer_lr)?,
        }
        observe(&IterationTrace {
            iteration: it,
            batch: &batch,
            theta_before: &theta.values,
            outer_grad: &summed,
            cold_loss,
        });
        loss_curve.push(cold_loss);
        if !net.map.is_finite() {
            return Err(diverged());
        }
    }
    Ok(MetaOutcome { net, loss_curve })
}

/// Test-stage embedding of a cold-start user: `f_θ(u^s)`.
pub fn cold_start_embed<T: UserTransform>(net: &T, source: &BaseModel, user: &OverlapUser) -> Result<Vec<f64>> {
    if user.source >= source.users.rows() {
        return Err(Error::UnknownUser(user.id.clone()));
    }
    net.transform(source.users.row(user.source))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::finite_diff_grad;
    use crate::tensor::dot;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng)).collect::<Vec<f64>>()
    }

    /// Small random instance: tables plus a phase of `users` users with a few
    /// samples each.
    struct Instance {
        source: Embeddings,
        items: Embeddings,
        data_a: Vec<PhaseSample>,
        data_b: Vec<PhaseSample>,
    }

    fn instance(rng: &mut Rng, d: usize, group_size: usize) -> Instance {
        let n_users = 2 * group_size;
        let n_items = 12;
        let source = Embeddings::from_vec(n_users, d, randn(rng, n_users * d, 0.5)).unwrap();
        let items = Embeddings::from_vec(n_items, d, randn(rng, n_items * d, 0.5)).unwrap();
        let phase = |rng: &mut Rng, users: std::ops::Range<usize>| -> Vec<PhaseSample> {
            let mut out = Vec::new();
            for u in users {
                for _ in 0..3 {
                    let pos = rng.random_range(0..n_items);
                    let neg_items: Vec<usize> = index::sample(rng, n_items - 1, 4)
                        .into_iter()
                        .map(|j| if j >= pos { j + 1 } else { j })
                        .collect();
                    out.push(PhaseSample {
                        source_user: u,
                        sample: TrainingSample { user: u, pos_item: pos, neg_items },
                    });
                }
            }
            out
        };
        let data_a = phase(rng, 0..group_size);
        let data_b = phase(rng, group_size..n_users);
        Instance { source, items, data_a, data_b }
    }

    fn random_theta(rng: &mut Rng, d: usize) -> FlatParams {
        let mut values = randn(rng, d * d + d, 0.3);
        for i in 0..d {
            values[i * d + i] += 1.0;
        }
        AffineMap::layout(d).with_values(values).unwrap()
    }

    #[test]
    fn init_examples() {
        let a = init_meta_network(6, 3).unwrap();
        let b = init_meta_network(6, 3).unwrap();
        assert_eq!(a, b);
        for (i, w) in a.map.weights().iter().enumerate() {
            let eye = if i % 7 == 0 { 1.0 } else { 0.0 };
            assert!((w - eye).abs() <= 5.0 * INIT_NOISE_STD);
        }
        assert!(a.map.bias().iter().all(|&x| x == 0.0));
        let exact = init_meta_network_with_noise(3, 0.0, 1).unwrap();
        assert_eq!(transform(&exact, &[0.1, 0.2, 0.3]).unwrap(), vec![0.1, 0.2, 0.3]);
        assert!(init_meta_network(0, 1).is_err());
    }

    #[test]
    fn phase_loss_identity_equals_direct_loss() {
        let mut rng = seeded(2, Stream::Synth);
        let inst = instance(&mut rng, 4, 2);
        let ctx = PhaseContext {
            kind: ModelKind::Mf,
            source_users: &inst.source,
            target_items: &inst.items,
        };
        let theta = AffineMap::identity(4).params;
        let (value, _) = phase_loss(&theta.values, &ctx, &inst.data_a).unwrap();
        let direct: f64 = inst
            .data_a
            .iter()
            .map(|x| sample_loss(ModelKind::Mf, inst.source.row(x.source_user), &inst.items, &x.sample).unwrap().value)
            .sum();
        assert!((value - direct).abs() < 1e-12);
        assert!(phase_loss(&theta.values, &ctx, &[]).is_err());
    }

    #[test]
    fn saturated_phase_has_zero_gradient() {
        // CML hinge inactive everywhere: positives at the user, negatives far away
        let d = 2;
        let source = Embeddings::from_vec(1, d, vec![0.0, 0.0]).unwrap();
        let items = Embeddings::from_vec(3, d, vec![0.0, 0.0, 5.0, 0.0, 0.0, 5.0]).unwrap();
        let ctx = PhaseContext {
            kind: ModelKind::Cml { margin: 0.5 },
            source_users: &source,
            target_items: &items,
        };
        let data = vec![PhaseSample {
            source_user: 0,
            sample: TrainingSample { user: 0, pos_item: 0, neg_items: vec![1, 2] },
        }];
        let (value, grad) = phase_loss(&AffineMap::identity(d).params.values, &ctx, &data).unwrap();
        assert_eq!(value, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn phase_gradient_matches_finite_differences() {
        let mut rng = seeded(12, Stream::Synth);
        for kind in [ModelKind::Mf, ModelKind::Bpr, ModelKind::ListRankMf] {
            for _ in 0..10 {
                let inst = instance(&mut rng, 4, 2);
                let ctx = PhaseContext { kind, source_users: &inst.source, target_items: &inst.items };
                let theta = random_theta(&mut rng, 4);
                let (_, grad) = phase_loss(&theta.values, &ctx, &inst.data_a).unwrap();
                let fd = finite_diff_grad(|p| phase_loss(p, &ctx, &inst.data_a).unwrap().0, &theta.values, 1e-5).unwrap();
                for (a, n) in grad.iter().zip(&fd) {
                    let err = (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
                    assert!(err <= 1e-4, "{kind}: {a} vs {n}");
                }
            }
        }
    }

    #[test]
    fn inner_update_examples() {
        let mut rng = seeded(5, Stream::Synth);
        let inst = instance(&mut rng, 3, 2);
        let ctx = PhaseContext { kind: ModelKind::Bpr, source_users: &inst.source, target_items: &inst.items };
        let theta = random_theta(&mut rng, 3);
        assert_eq!(inner_update(&theta, &ctx, &inst.data_a, 0.0, 1).unwrap(), theta);

        let got = inner_update(&theta, &ctx, &inst.data_a, 0.05, 1).unwrap();
        let (_, g) = phase_loss(&theta.values, &ctx, &inst.data_a).unwrap();
        assert_eq!(got, sgd_step(&theta, &g, 0.05).unwrap());

        let two = inner_update(&theta, &ctx, &inst.data_a, 0.05, 2).unwrap();
        let (_, g2) = phase_loss(&got.values, &ctx, &inst.data_a).unwrap();
        assert_eq!(two, sgd_step(&got, &g2, 0.05).unwrap());
    }

    #[test]
    fn second_order_requires_single_step() {
        let mut rng = seeded(5, Stream::Synth);
        let inst = instance(&mut rng, 3, 1);
        let ctx = PhaseContext { kind: ModelKind::Mf, source_users: &inst.source, target_items: &inst.items };
        let theta = AffineMap::identity(3).params;
        let r = outer_gradient(&theta, &theta, &ctx, &inst.data_a, &inst.data_b, 0.1, GradientOrder::Second, 2);
        assert!(matches!(r, Err(Error::Unsupported(_))));
        let cfg = MetaConfig { inner_steps: 3, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = MetaConfig { inner_steps: 3, order: GradientOrder::First, ..Default::default() };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn scalar_quadratic_chain_rule() {
        // L_a = ½θ², L_b = ½(θ - c)², θ = 1, λ = 0.1, c = 0
        let grad_a = |p: &[f64]| Ok(vec![p[0]]);
        let grad_b = |p: &[f64]| Ok(vec![p[0] - 0.0]);
        let second = maml_gradient(&[1.0], 0.1, GradientOrder::Second, grad_a, grad_b).unwrap();
        let first = maml_gradient(&[1.0], 0.1, GradientOrder::First, grad_a, grad_b).unwrap();
        assert!((second[0] - 0.81).abs() <= 1e-12, "{}", second[0]);
        assert!((first[0] - 0.9).abs() <= 1e-12);
    }

    #[test]
    fn zero_inner_rate_collapses_orders() {
        let mut rng = seeded(6, Stream::Synth);
        let inst = instance(&mut rng, 4, 2);
        let ctx = PhaseContext { kind: ModelKind::Mf, source_users: &inst.source, target_items: &inst.items };
        let theta = random_theta(&mut rng, 4);
        let tp = inner_update(&theta, &ctx, &inst.data_a, 0.0, 1).unwrap();
        let first = outer_gradient(&theta, &tp, &ctx, &inst.data_a, &inst.data_b, 0.0, GradientOrder::First, 1).unwrap();
        let second = outer_gradient(&theta, &tp, &ctx, &inst.data_a, &inst.data_b, 0.0, GradientOrder::Second, 1).unwrap();
        let (_, g_b) = phase_loss(&theta.values, &ctx, &inst.data_b).unwrap();
        assert_eq!(first.grad, g_b);
        assert_eq!(second.grad, g_b);
    }

    #[test]
    fn second_order_matches_composite_finite_differences() {
        let mut rng = seeded(31, Stream::Synth);
        let lr = 0.1;
        for kind in [ModelKind::Mf, ModelKind::Bpr, ModelKind::ListRankMf] {
            for _ in 0..5 {
                let inst = instance(&mut rng, 4, 2);
                let ctx = PhaseContext { kind, source_users: &inst.source, target_items: &inst.items };
                let theta = random_theta(&mut rng, 4);
                let tp = inner_update(&theta, &ctx, &inst.data_a, lr, 1).unwrap();
                let second = outer_gradient(&theta, &tp, &ctx, &inst.data_a, &inst.data_b, lr, GradientOrder::Second, 1).unwrap();
                let first = outer_gradient(&theta, &tp, &ctx, &inst.data_a, &inst.data_b, lr, GradientOrder::First, 1).unwrap();
                let composite = |p: &[f64]| {
                    let th = theta.with_values(p.to_vec()).unwrap();
                    let tp = inner_update(&th, &ctx, &inst.data_a, lr, 1).unwrap();
                    phase_loss(&tp.values, &ctx, &inst.data_b).unwrap().0
                };
                let fd = finite_diff_grad(composite, &theta.values, 1e-5).unwrap();
                for (a, n) in second.grad.iter().zip(&fd) {
                    let err = (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
                    assert!(err <= 1e-3, "{kind}: {a} vs {n}");
                }
                let gap: f64 = second.grad.iter().zip(&first.grad).map(|(a, b)| (a - b).abs()).sum();
                assert!(gap > 0.0);
            }
        }
    }

    fn linear_world(seed: u64) -> (BaseModel, BaseModel, InteractionDataset, OverlapSet) {
        // target user vectors are an exact linear image of the source ones
        let mut rng = seeded(seed, Stream::Synth);
        let (d, n_users, n_items) = (4, 60, 40);
        let source = Embeddings::from_vec(n_users, d, randn(&mut rng, n_users * d, 1.0)).unwrap();
        let a = randn(&mut rng, d * d, 0.7);
        let mut target_users = Embeddings::zeros(n_users, d);
        for u in 0..n_users {
            let t = apply_raw(d, &[a.clone(), vec![0.0; d]].concat(), source.row(u));
            target_users.row_mut(u).copy_from_slice(&t);
        }
        let items = Embeddings::from_vec(n_items, d, randn(&mut rng, n_items * d, 1.0)).unwrap();
        let mut pairs = Vec::new();
        for u in 0..n_users {
            let mut scored: Vec<(usize, f64)> = (0..n_items).map(|i| (i, dot(target_users.row(u), items.row(i)))).collect();
            scored.sort_by(|x, y| y.1.total_cmp(&x.1));
            for &(i, _) in scored.iter().take(6) {
                pairs.push((format!("u{u}"), format!("i{i}")));
            }
        }
        let ds = InteractionDataset::from_pairs("t", pairs).unwrap();
        // reorder embedding rows to match the dataset's first-appearance indices
        let mut src = Embeddings::zeros(n_users, d);
        let mut tgt_items = Embeddings::zeros(n_items, d);
        for u in 0..n_users {
            let idx = ds.users().get(&format!("u{u}")).unwrap();
            src.row_mut(idx).copy_from_slice(source.row(u));
        }
        for i in 0..ds.num_items() {
            let orig: usize = ds.items().id(i)[1..].parse().unwrap();
            tgt_items.row_mut(i).copy_from_slice(items.row(orig));
        }
        let tgt_items = Embeddings::from_vec(ds.num_items(), d, tgt_items.as_slice()[..ds.num_items() * d].to_vec()).unwrap();
        let source_model = BaseModel::new(ModelKind::Mf, src, Embeddings::zeros(1, d)).unwrap();
        let target_model = BaseModel::new(ModelKind::Mf, Embeddings::zeros(n_users, d), tgt_items).unwrap();
        let overlap = OverlapSet {
            users: (0..n_users).map(|u| OverlapUser { source: u, target: u, id: ds.users().id(u).to_owned() }).collect(),
        };
        (source_model, target_model, ds, overlap)
    }

    #[test]
    fn sampled_groups_are_disjoint_and_complete() {
        let (_, _, ds, overlap) = linear_world(1);
        let cfg = MetaConfig { group_size: 1, groups_per_batch: 50, ..Default::default() };
        let mut rng = seeded(3, Stream::Meta);
        let batch = sample_task_batch(&overlap, &ds, &cfg, &mut rng).unwrap();
        for g in &batch.groups {
            assert_eq!(g.users_a.len(), 1);
            assert_ne!(g.users_a[0], g.users_b[0]);
            assert!(g.data_a.iter().all(|x| x.sample.user == g.users_a[0].target));
            assert!(g.data_b.iter().all(|x| x.sample.user == g.users_b[0].target));
            assert_eq!(g.data_a.len(), ds.user_items(g.users_a[0].target).len());
        }
    }

    #[test]
    fn two_users_give_two_outcomes() {
        let (_, _, ds, overlap) = linear_world(1);
        let two = OverlapSet { users: overlap.users[..2].to_vec() };
        let cfg = MetaConfig { group_size: 1, groups_per_batch: 1, ..Default::default() };
        let first = |seed| sample_task_batch(&two, &ds, &cfg, &mut seeded(seed, Stream::Meta)).unwrap();
        assert_eq!(first(4), first(4));
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..20 {
            seen.insert(first(seed).groups[0].users_a[0].id.clone());
        }
        assert_eq!(seen.len(), 2);
        let cfg = MetaConfig { group_size: 2, ..cfg };
        assert!(matches!(sample_task_batch(&two, &ds, &cfg, &mut seeded(0, Stream::Meta)), Err(Error::Sampling(_))));
    }

    #[test]
    fn user_sampling_is_uniform() {
        let (_, _, ds, overlap) = linear_world(2);
        let cfg = MetaConfig { group_size: 2, groups_per_batch: 1000, ..Default::default() };
        let batch = sample_task_batch(&overlap, &ds, &cfg, &mut seeded(9, Stream::Meta)).unwrap();
        let mut counts = vec![0usize; overlap.len()];
        for g in &batch.groups {
            for u in g.users_a.iter().chain(&g.users_b) {
                counts[u.source] += 1;
            }
        }
        let p = 4.0 / overlap.len() as f64;
        let mean = 1000.0 * p;
        let sigma = (1000.0 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 4.0 * sigma, "{c} vs {mean}");
        }
    }

    #[test]
    fn zero_iterations_returns_init() {
        let (s, t, ds, overlap) = linear_world(1);
        let cfg = MetaConfig { iterations: 0, ..Default::default() };
        let out = meta_train(&s, &t, &ds, &overlap, &cfg).unwrap();
        assert_eq!(out.net, init_meta_network(4, cfg.seed).unwrap());
        assert!(out.loss_curve.is_empty());
    }

    #[test]
    fn meta_training_lowers_cold_loss_and_leaves_models_alone() {
        let (s, t, ds, overlap) = linear_world(3);
        let (s0, t0) = (s.clone(), t.clone());
        let cfg = MetaConfig { iterations: 200, group_size: 4, groups_per_batch: 4, outer_lr: 0.01, ..Default::default() };
        let mut disjoint = true;
        let out = meta_train_observed(&s, &t, &ds, &overlap, &cfg, |trace| {
            for g in &trace.batch.groups {
                disjoint &= g.users_a.iter().all(|a| !g.users_b.contains(a));
            }
        })
        .unwrap();
        assert!(disjoint);
        assert_eq!(s, s0);
        assert_eq!(t, t0);
        let early: f64 = out.loss_curve[..10].iter().sum::<f64>() / 10.0;
        let late: f64 = out.loss_curve[190..].iter().sum::<f64>() / 10.0;
        assert!(late < early, "{early} -> {late}");
        assert!(out.loss_curve[199] < out.loss_curve[0]);

        let again = meta_train(&s, &t, &ds, &overlap, &cfg).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn zero_inner_rate_trains_on_cold_phase_gradient() {
        let (s, t, ds, overlap) = linear_world(4);
        let cfg = MetaConfig { iterations: 20, inner_lr: 0.0, group_size: 3, ..Default::default() };
        let ctx = PhaseContext::new(&s, &t).unwrap();
        meta_train_observed(&s, &t, &ds, &overlap, &cfg, |trace| {
            let mut expect = vec![0.0; trace.outer_grad.len()];
            for g in &trace.batch.groups {
                let (_, gb) = phase_loss(trace.theta_before, &ctx, &g.data_b).unwrap();
                axpy(1.0, &gb, &mut expect);
            }
            assert_eq!(trace.outer_grad, expect.as_slice());
        })
        .unwrap();
    }

    #[test]
    fn plain_outer_step_mode_runs() {
        let (s, t, ds, overlap) = linear_world(5);
        let cfg = MetaConfig {
            iterations: 30,
            outer_optimizer: OuterOptimizer::Sgd,
            outer_lr: 1e-3,
            group_size: 4,
            ..Default::default()
        };
        let out = meta_train(&s, &t, &ds, &overlap, &cfg).unwrap();
        assert!(out.net.map.is_finite());
        assert_eq!(out.loss_curve.len(), 30);
    }

    #[test]
    fn cold_start_embed_examples() {
        let (s, _, _, overlap) = linear_world(1);
        let id = init_meta_network_with_noise(4, 0.0, 0).unwrap();
        let u = &overlap.users[3];
        assert_eq!(cold_start_embed(&id, &s, u).unwrap(), s.users.row(u.source));
        let net = init_meta_network(4, 9).unwrap();
        let a = cold_start_embed(&net, &s, u).unwrap();
        assert_eq!(a, cold_start_embed(&net, &s, u).unwrap());
        assert_eq!(a, transform(&net, s.users.row(u.source)).unwrap());
        let ghost = OverlapUser { source: 10_000, target: 0, id: "ghost".into() };
        assert!(matches!(cold_start_embed(&net, &s, &ghost), Err(Error::UnknownUser(_))));
    }
}
