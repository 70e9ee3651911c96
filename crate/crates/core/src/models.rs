// SPDX-License-Identifier: Apache-2.0

//! Base embedding models for binary implicit feedback: logistic MF, BPR,
//! ListRank-MF and CML. Each loss returns its value together with analytic
//! gradients for the user vector and every item vector it touched.

use std::fmt;
use std::str::FromStr;

use crate::dataset::TrainingSample;
use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, log_softmax, norm, sigmoid, softmax, softplus, sq_dist, Embeddings};

pub const DEFAULT_CML_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    Mf,
    Bpr,
    ListRankMf,
    Cml { margin: f64 },
}

impl ModelKind {
    pub fn cml(margin: f64) -> Result<Self> {
        if margin.is_finite() && margin > 0.0 {
            Ok(ModelKind::Cml { margin })
        } else {
            Err(Error::InvalidArgument(format!(
                "CML margin must be finite and positive, got {margin}"
            )))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Mf => "mf",
            ModelKind::Bpr => "bpr",
            ModelKind::ListRankMf => "listrank-mf",
            ModelKind::Cml { .. } => "cml",
        }
    }

    pub fn is_metric(&self) -> bool {
        matches!(self, ModelKind::Cml { .. })
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    /// CML gets the default margin; use [`ModelKind::cml`] to set another.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mf" => Ok(ModelKind::Mf),
            "bpr" => Ok(ModelKind::Bpr),
            "listrank-mf" | "listrankmf" | "listrank" => Ok(ModelKind::ListRankMf),
            "cml" => Ok(ModelKind::Cml {
                margin: DEFAULT_CML_MARGIN,
            }),
            other => Err(Error::InvalidArgument(format!("unknown model kind `{other}`"))),
        }
    }
}

/// A pretrained domain model: user and item embedding tables.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseModel {
    pub kind: ModelKind,
    pub users: Embeddings,
    pub items: Embeddings,
}

impl BaseModel {
    pub fn new(kind: ModelKind, users: Embeddings, items: Embeddings) -> Result<Self> {
        Error::check_dim(users.dim(), items.dim())?;
        Ok(Self { kind, users, items })
    }

    pub fn dim(&self) -> usize {
        self.users.dim()
    }

    /// Scores every item for an arbitrary user vector.
    pub fn score_all(&self, user: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim(), user.len())?;
        Ok(self
            .items
            .iter_rows()
            .map(|v| score_unchecked(self.kind, user, v))
            .collect())
    }
}

/// Loss value plus gradients. `d_items` is keyed by item position for the
/// raw losses and by item index for [`sample_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub value: f64,
    pub d_user: Vec<f64>,
    pub d_items: Vec<(usize, Vec<f64>)>,
}

impl LossGradient {
    fn zero(dim: usize) -> Self {
        Self {
            value: 0.0,
            d_user: vec![0.0; dim],
            d_items: Vec::new(),
        }
    }

    fn add_item(&mut self, item: usize, alpha: f64, x: &[f64]) {
        match self.d_items.iter_mut().find(|(i, _)| *i == item) {
            Some((_, g)) => axpy(alpha, x, g),
            None => self.d_items.push((item, x.iter().map(|v| alpha * v).collect())),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.d_user.iter().all(|x| x.is_finite())
            && self.d_items.iter().all(|(_, g)| g.iter().all(|x| x.is_finite()))
    }
}

fn check_same(a: &[f64], b: &[f64]) -> Result<()> {
    Error::check_dim(a.len(), b.len())
}

#[inline]
fn score_unchecked(kind: ModelKind, u: &[f64], v: &[f64]) -> f64 {
    match kind {
        ModelKind::Cml { .. } => -sq_dist(u, v),
        _ => dot(u, v),
    }
}

/// Higher is better for every kind: inner product, or negative squared
/// distance for CML.
pub fn score(kind: ModelKind, u: &[f64], v: &[f64]) -> Result<f64> {
    check_same(u, v)?;
    Ok(score_unchecked(kind, u, v))
}

/// Logistic loss on the inner product.
pub fn loss_mf(u: &[f64], v: &[f64], label: f64) -> Result<LossGradient> {
    check_same(u, v)?;
    let s = dot(u, v);
    // -[y ln σ(s) + (1-y) ln(1-σ(s))] = softplus(s) - y s
    let value = softplus(s) - label * s;
    let g = sigmoid(s) - label;
    Ok(LossGradient {
        value,
        d_user: v.iter().map(|x| g * x).collect(),
        d_items: vec![(0, u.iter().map(|x| g * x).collect())],
    })
}

/// `-ln σ(u·(v_pos - v_neg))`.
pub fn loss_bpr(u: &[f64], v_pos: &[f64], v_neg: &[f64]) -> Result<LossGradient> {
    check_same(u, v_pos)?;
    check_same(u, v_neg)?;
    let diff: Vec<f64> = v_pos.iter().zip(v_neg).map(|(p, n)| p - n).collect();
    let x = dot(u, &diff);
    let g = -sigmoid(-x);
    Ok(LossGradient {
        value: softplus(-x),
        d_user: diff.iter().map(|d| g * d).collect(),
        d_items: vec![
            (0, u.iter().map(|x| g * x).collect()),
            (1, u.iter().map(|x| -g * x).collect()),
        ],
    })
}

/// Top-one cross entropy between the softmax of the labels and the softmax
/// of the inner-product scores.
pub fn loss_listrank(u: &[f64], items: &[(&[f64], f64)]) -> Result<LossGradient> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("ListRank list is empty".into()));
    }
    if !items.iter().any(|&(_, y)| y > 0.0) {
        return Err(Error::InvalidArgument("ListRank list has no positive label".into()));
    }
    for (v, _) in items {
        check_same(u, v)?;
    }
    let scores: Vec<f64> = items.iter().map(|(v, _)| dot(u, v)).collect();
    let labels: Vec<f64> = items.iter().map(|&(_, y)| y).collect();
    let p_label = softmax(&labels);
    let log_p_score = log_softmax(&scores);

    let value = -p_label.iter().zip(&log_p_score).map(|(p, lq)| p * lq).sum::<f64>();
    let mut out = LossGradient::zero(u.len());
    out.value = value.max(0.0);
    for (i, ((v, _), (pl, lq))) in items.iter().zip(p_label.iter().zip(&log_p_score)).enumerate() {
        // ∂value/∂s_i = q_i - p_i since the label distribution sums to one
        let g = lq.exp() - pl;
        axpy(g, v, &mut out.d_user);
        out.d_items.push((i, u.iter().map(|x| g * x).collect()));
    }
    Ok(out)
}

/// Hinge `max(0, margin + ‖u-v_pos‖² - ‖u-v_neg‖²)`.
pub fn loss_cml(u: &[f64], v_pos: &[f64], v_neg: &[f64], margin: f64) -> Result<LossGradient> {
    if !(margin.is_finite() && margin > 0.0) {
        return Err(Error::InvalidArgument(format!("CML margin must be positive, got {margin}")));
    }
    check_same(u, v_pos)?;
    check_same(u, v_neg)?;
    let hinge = margin + sq_dist(u, v_pos) - sq_dist(u, v_neg);
    let dim = u.len();
    if hinge <= 0.0 {
        return Ok(LossGradient {
            value: 0.0,
            d_user: vec![0.0; dim],
            d_items: vec![(0, vec![0.0; dim]), (1, vec![0.0; dim])],
        });
    }
    Ok(LossGradient {
        value: hinge,
        d_user: v_neg.iter().zip(v_pos).map(|(n, p)| 2.0 * (n - p)).collect(),
        d_items: vec![
            (0, u.iter().zip(v_pos).map(|(a, p)| -2.0 * (a - p)).collect()),
            (1, u.iter().zip(v_neg).map(|(a, n)| 2.0 * (a - n)).collect()),
        ],
    })
}

/// Rescales onto the unit sphere when outside the unit ball.
pub fn project_unit_ball(vec: &[f64]) -> Vec<f64> {
    let mut out = vec.to_vec();
    project_unit_ball_in_place(&mut out);
    out
}

pub fn project_unit_ball_in_place(vec: &mut [f64]) {
    let n = norm(vec);
    if n > 1.0 {
        for x in vec.iter_mut() {
            *x /= n;
        }
    }
}

/// Task loss of one training sample for a given user vector, with item
/// gradients keyed by item index.
///
/// MF contributes one positive and `k` negative logistic terms, BPR and CML
/// one pair term per negative, and ListRank-MF a single list of the positive
/// followed by its negatives.
pub fn sample_loss(
    kind: ModelKind,
    user: &[f64],
    items: &Embeddings,
    sample: &TrainingSample,
) -> Result<LossGradient> {
    Error::check_dim(items.dim(), user.len())?;
    for &i in std::iter::once(&sample.pos_item).chain(&sample.neg_items) {
        if i >= items.rows() {
            return Err(Error::InvalidArgument(format!(
                "item index {i} out of range for {} items",
                items.rows()
            )));
        }
    }
    let pos = items.row(sample.pos_item);
    let mut out = LossGradient::zero(user.len());
    let absorb = |out: &mut LossGradient, part: LossGradient, ids: &[usize]| {
        out.value += part.value;
        axpy(1.0, &part.d_user, &mut out.d_user);
        for (slot, g) in part.d_items {
            out.add_item(ids[slot], 1.0, &g);
        }
    };

    match kind {
        ModelKind::Mf => {
            absorb(&mut out, loss_mf(user, pos, 1.0)?, &[sample.pos_item]);
            for &n in &sample.neg_items {
                absorb(&mut out, loss_mf(user, items.row(n), 0.0)?, &[n]);
            }
        }
        ModelKind::Bpr => {
            for &n in &sample.neg_items {
                absorb(&mut out, loss_bpr(user, pos, items.row(n))?, &[sample.pos_item, n]);
            }
        }
        ModelKind::Cml { margin } => {
            for &n in &sample.neg_items {
                absorb(
                    &mut out,
                    loss_cml(user, pos, items.row(n), margin)?,
                    &[sample.pos_item, n],
                );
            }
        }
        ModelKind::ListRankMf => {
            let ids: Vec<usize> = std::iter::once(sample.pos_item)
                .chain(sample.neg_items.iter().copied())
                .collect();
            let list: Vec<(&[f64], f64)> = ids
                .iter()
                .enumerate()
                .map(|(j, &i)| (items.row(i), if j == 0 { 1.0 } else { 0.0 }))
                .collect();
            absorb(&mut out, loss_listrank(user, &list)?, &ids);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::finite_diff_grad;
    use crate::rng::{seeded, Stream};
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    const LN2: f64 = std::f64::consts::LN_2;

    fn randn(rng: &mut crate::rng::Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn score_examples() {
        assert_eq!(score(ModelKind::Mf, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let cml = ModelKind::Cml { margin: 0.5 };
        assert_eq!(score(cml, &[0.3, 0.2], &[0.3, 0.2]).unwrap(), 0.0);
        assert!(score(cml, &[0.3, 0.2], &[0.3, 0.25]).unwrap() < 0.0);
        assert!(matches!(
            score(ModelKind::Mf, &[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));

        let mut rng = seeded(1, Stream::Synth);
        let (u, v) = (randn(&mut rng, 8), randn(&mut rng, 8));
        let mut acc = 0.0;
        for i in 0..8 {
            acc += u[i] * v[i];
        }
        assert!((score(ModelKind::Bpr, &u, &v).unwrap() - acc).abs() < 1e-12);
    }

    #[test]
    fn cml_score_decreases_with_distance() {
        let cml = ModelKind::Cml { margin: 0.5 };
        let u = [0.1, -0.2, 0.3];
        let dir = [0.6, 0.0, -0.8];
        let mut last = f64::INFINITY;
        for step in 0..20 {
            let t = step as f64 * 0.1;
            let v: Vec<f64> = u.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let s = score(cml, &u, &v).unwrap();
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn mf_examples() {
        let r = loss_mf(&[0.0, 0.0], &[1.0, 2.0], 1.0).unwrap();
        assert!((r.value - LN2).abs() < 1e-15);
        let r = loss_mf(&[50.0], &[50.0], 1.0).unwrap();
        assert!(r.value < 1e-300 + 1e-12);
        assert!(r.d_user[0].abs() < 1e-12);
    }

    #[test]
    fn bpr_examples() {
        let u = [0.3, -1.0];
        let v = [0.5, 0.5];
        assert!((loss_bpr(&u, &v, &v).unwrap().value - LN2).abs() < 1e-15);
        // u·(vp - vn) = 1
        let r = loss_bpr(&[1.0, 0.0], &[1.5, 0.0], &[0.5, 0.0]).unwrap();
        // ln(1 + e^-1) evaluated independently at high precision
        assert!((r.value - 0.313_261_687_518_222_8).abs() < 1e-15);
        let expect = -(1.0 - sigmoid(1.0));
        assert!((r.d_user[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn listrank_examples() {
        let u = [0.2, 0.4];
        let v = [1.0, -1.0];
        assert!(loss_listrank(&u, &[(&v, 1.0)]).unwrap().value.abs() < 1e-15);
        // all scores equal
        let zero = [0.0, 0.0];
        let list: Vec<(&[f64], f64)> = (0..5).map(|i| (&zero[..], if i == 2 { 1.0 } else { 0.0 })).collect();
        assert!((loss_listrank(&u, &list).unwrap().value - 5f64.ln()).abs() < 1e-12);
        let all_neg: Vec<(&[f64], f64)> = vec![(&zero[..], 0.0)];
        assert!(matches!(loss_listrank(&u, &all_neg), Err(Error::InvalidArgument(_))));
        assert!(matches!(loss_listrank(&u, &[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cml_examples() {
        // ‖u-vp‖² = 0.1, ‖u-vn‖² = 1.0
        let u = [0.0, 0.0];
        let vp = [0.1f64.sqrt(), 0.0];
        let vn = [0.0, 1.0];
        let r = loss_cml(&u, &vp, &vn, 0.5).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.d_user.iter().all(|&g| g == 0.0));
        let vn = [0.0, 0.2f64.sqrt()];
        let r = loss_cml(&u, &vp, &vn, 0.5).unwrap();
        assert!((r.value - 0.4).abs() < 1e-12);
        assert!(loss_cml(&u, &vp, &vn, 0.0).is_err());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_unit_ball(&[0.3, 0.4]), vec![0.3, 0.4]);
        let p = project_unit_ball(&[3.0, 4.0]);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("MF".parse::<ModelKind>().unwrap(), ModelKind::Mf);
        assert_eq!("listrank-mf".parse::<ModelKind>().unwrap(), ModelKind::ListRankMf);
        assert_eq!(
            "cml".parse::<ModelKind>().unwrap(),
            ModelKind::Cml { margin: DEFAULT_CML_MARGIN }
        );
        assert!("svd".parse::<ModelKind>().is_err());
        assert!(ModelKind::cml(-1.0).is_err());
        assert!(ModelKind::cml(f64::INFINITY).is_err());
    }

    fn zero_items(n: usize, d: usize) -> Embeddings {
        Embeddings::zeros(n, d)
    }

    #[test]
    fn sample_loss_at_zero_scores() {
        let items = zero_items(6, 3);
        let sample = TrainingSample {
            user: 0,
            pos_item: 0,
            neg_items: vec![1, 2, 3, 4],
        };
        let u = [0.1, 0.2, 0.3];
        let mf = sample_loss(ModelKind::Mf, &u, &items, &sample).unwrap();
        assert!((mf.value - 5.0 * LN2).abs() < 1e-12);
        let bpr = sample_loss(ModelKind::Bpr, &u, &items, &sample).unwrap();
        assert!((bpr.value - 4.0 * LN2).abs() < 1e-12);
        let lr = sample_loss(ModelKind::ListRankMf, &u, &items, &sample).unwrap();
        assert!((lr.value - 5f64.ln()).abs() < 1e-12);
        let bad = TrainingSample {
            user: 0,
            pos_item: 9,
            neg_items: vec![1],
        };
        assert!(sample_loss(ModelKind::Mf, &u, &items, &bad).is_err());
    }

    /// Term-by-term re-derivation with plain `exp`/`ln`.
    fn naive_sample_loss(
        kind: ModelKind,
        u: &[f64],
        items: &Embeddings,
        s: &TrainingSample,
    ) -> (f64, Vec<f64>) {
        let d = u.len();
        let mut value = 0.0;
        let mut du = vec![0.0; d];
        let dotp = |a: &[f64], b: &[f64]| -> f64 { (0..d).map(|i| a[i] * b[i]).sum() };
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let p = items.row(s.pos_item);
        match kind {
            ModelKind::Mf => {
                let sp = dotp(u, p);
                value += -(sig(sp)).ln();
                for i in 0..d {
                    du[i] += (sig(sp) - 1.0) * p[i];
                }
                for &n in &s.neg_items {
                    let v = items.row(n);
                    let sn = dotp(u, v);
                    value += -(1.0 - sig(sn)).ln();
                    for i in 0..d {
                        du[i] += sig(sn) * v[i];
                    }
                }
            }
            ModelKind::Bpr => {
                for &n in &s.neg_items {
                    let v = items.row(n);
                    let x = dotp(u, p) - dotp(u, v);
                    value += -(sig(x)).ln();
                    for i in 0..d {
                        du[i] += -(1.0 - sig(x)) * (p[i] - v[i]);
                    }
                }
            }
            ModelKind::Cml { margin } => {
                for &n in &s.neg_items {
                    let v = items.row(n);
                    let dp: f64 = (0..d).map(|i| (u[i] - p[i]).powi(2)).sum();
                    let dn: f64 = (0..d).map(|i| (u[i] - v[i]).powi(2)).sum();
                    let h = margin + dp - dn;
                    if h > 0.0 {
                        value += h;
                        for i in 0..d {
                            du[i] += 2.0 * (u[i] - p[i]) - 2.0 * (u[i] - v[i]);
                        }
                    }
                }
            }
            ModelKind::ListRankMf => {
                let ids: Vec<usize> = std::iter::once(s.pos_item).chain(s.neg_items.clone()).collect();
                let sc: Vec<f64> = ids.iter().map(|&i| dotp(u, items.row(i))).collect();
                let z: f64 = sc.iter().map(|x| x.exp()).sum();
                let zl = 1f64.exp() + (ids.len() - 1) as f64;
                for (j, &i) in ids.iter().enumerate() {
                    let pl = if j == 0 { 1f64.exp() / zl } else { 1.0 / zl };
                    let q = sc[j].exp() / z;
                    value += -pl * q.ln();
                    let v = items.row(i);
                    for k in 0..d {
                        du[k] += (q - pl) * v[k];
                    }
                }
            }
        }
        (value, du)
    }

    #[test]
    fn sample_loss_matches_naive_expansion() {
        let mut rng = seeded(3, Stream::Synth);
        for kind in [ModelKind::Mf, ModelKind::Bpr, ModelKind::ListRankMf, ModelKind::Cml { margin: 0.5 }] {
            for _ in 0..20 {
                let d = 5;
                let items = Embeddings::from_vec(8, d, randn(&mut rng, 8 * d).iter().map(|x| 0.5 * x).collect()).unwrap();
                let u: Vec<f64> = randn(&mut rng, d).iter().map(|x| 0.5 * x).collect();
                let pos_item = rng.random_range(0..8);
                let first = (pos_item + 1 + rng.random_range(0..7usize)) % 8;
                let mut neg_items = vec![first];
                neg_items.extend((0..8).filter(|&i| i != pos_item && i != first).take(3));
                let sample = TrainingSample { user: 0, pos_item, neg_items };
                let got = sample_loss(kind, &u, &items, &sample).unwrap();
                let (value, du) = naive_sample_loss(kind, &u, &items, &sample);
                assert!(close(got.value, value, 1e-12), "{kind}: {} vs {value}", got.value);
                for (a, b) in got.d_user.iter().zip(&du) {
                    assert!(close(*a, *b, 1e-12), "{kind}");
                }
                // each touched item appears once
                let mut ids: Vec<_> = got.d_items.iter().map(|(i, _)| *i).collect();
                ids.sort();
                ids.dedup();
                assert_eq!(ids.len(), got.d_items.len());
            }
        }
    }

    type RawLoss<'a> = &'a dyn Fn(&[f64], &[&[f64]]) -> LossGradient;

    /// Full-parameter FD check of a raw loss, flattening `[u, v_0, v_1, ...]`.
    fn fd_check(d: usize, n_items: usize, f: RawLoss<'_>, x: &[f64]) {
        let unpack = |p: &[f64]| -> (Vec<f64>, Vec<Vec<f64>>) {
            (p[..d].to_vec(), (0..n_items).map(|j| p[d * (j + 1)..d * (j + 2)].to_vec()).collect())
        };
        let value = |p: &[f64]| {
            let (u, vs) = unpack(p);
            let refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
            f(&u, &refs).value
        };
        let (u, vs) = unpack(x);
        let refs: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        let analytic = f(&u, &refs);
        let mut flat = analytic.d_user.clone();
        let mut by_slot = vec![vec![0.0; d]; n_items];
        for (slot, g) in &analytic.d_items {
            by_slot[*slot] = g.clone();
        }
        flat.extend(by_slot.into_iter().flatten());
        let numeric = finite_diff_grad(value, x, 1e-5).unwrap();
        for (a, n) in flat.iter().zip(&numeric) {
            let err = (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
            assert!(err <= 1e-4, "analytic {a} numeric {n}");
        }
    }

    #[test]
    fn raw_losses_match_finite_differences() {
        let mut rng = seeded(21, Stream::Synth);
        for &d in &[2usize, 4, 8] {
            for _ in 0..25 {
                let x = randn(&mut rng, d * 6);
                let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                fd_check(d, 1, &|u, v| loss_mf(u, v[0], y).unwrap(), &x[..2 * d]);
                fd_check(d, 2, &|u, v| loss_bpr(u, v[0], v[1]).unwrap(), &x[..3 * d]);
                fd_check(
                    d,
                    5,
                    &|u, v| {
                        let list: Vec<(&[f64], f64)> =
                            v.iter().enumerate().map(|(j, v)| (*v, if j < 2 { 1.0 } else { 0.0 })).collect();
                        loss_listrank(u, &list).unwrap()
                    },
                    &x,
                );
                // large margin keeps the hinge active
                let margin = 1.0 + 4.0 * d as f64;
                fd_check(d, 2, &|u, v| loss_cml(u, v[0], v[1], margin).unwrap(), &x[..3 * d]);
            }
        }
    }

    proptest! {
        #[test]
        fn losses_are_finite_and_nonnegative(
            u in prop::collection::vec(-30.0f64..30.0, 4),
            a in prop::collection::vec(-30.0f64..30.0, 4),
            b in prop::collection::vec(-30.0f64..30.0, 4),
            y in 0u8..2,
        ) {
            for r in [
                loss_mf(&u, &a, y as f64).unwrap(),
                loss_bpr(&u, &a, &b).unwrap(),
                loss_listrank(&u, &[(&a, 1.0), (&b, 0.0)]).unwrap(),
                loss_cml(&u, &a, &b, 0.5).unwrap(),
            ] {
                prop_assert!(r.is_finite());
                prop_assert!(r.value >= 0.0);
            }
        }

        #[test]
        fn bpr_swap_and_negate(
            u in prop::collection::vec(-3.0f64..3.0, 4),
            a in prop::collection::vec(-3.0f64..3.0, 4),
            b in prop::collection::vec(-3.0f64..3.0, 4),
        ) {
            let neg_u: Vec<f64> = u.iter().map(|x| -x).collect();
            let l1 = loss_bpr(&u, &a, &b).unwrap().value;
            let l2 = loss_bpr(&neg_u, &b, &a).unwrap().value;
            prop_assert!((l1 - l2).abs() <= 1e-12 * (1.0 + l1.abs()));
        }

        #[test]
        fn listrank_shift_invariance(
            u in prop::collection::vec(-2.0f64..2.0, 3),
            vs in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 2..6),
            shift in -3.0f64..3.0,
        ) {
            // appending a coordinate with u = 1 and v = shift adds `shift` to every score
            let mut u2 = u.clone();
            u2.push(1.0);
            let vs2: Vec<Vec<f64>> = vs.iter().map(|v| { let mut w = v.clone(); w.push(shift); w }).collect();
            let list: Vec<(&[f64], f64)> = vs.iter().enumerate().map(|(j, v)| (v.as_slice(), if j == 0 { 1.0 } else { 0.0 })).collect();
            let list2: Vec<(&[f64], f64)> = vs2.iter().enumerate().map(|(j, v)| (v.as_slice(), if j == 0 { 1.0 } else { 0.0 })).collect();
            let a = loss_listrank(&u, &list).unwrap().value;
            let b = loss_listrank(&u2, &list2).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }

        #[test]
        fn projection_is_idempotent(x in prop::collection::vec(-10.0f64..10.0, 1..8)) {
            let once = project_unit_ball(&x);
            prop_assert!(norm(&once) <= 1.0 + 1e-12);
            let twice = project_unit_ball(&once);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }
    }
}
