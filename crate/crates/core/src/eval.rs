// SPDX-License-Identifier: Apache-2.0

//! Cold-start evaluation: rank the full target catalog for each held-out
//! user and average per-user AUC and NDCG@k.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::affine::UserTransform;
use crate::dataset::{InteractionDataset, OverlapSet, OverlapUser};
use crate::error::{Error, Result};
use crate::meta::cold_start_embed;
use crate::models::BaseModel;

/// Fraction of (positive, negative) pairs ordered correctly, ties counting
/// one half. `None` when the list lacks positives or negatives.
pub fn auc_per_user(scores: &[(usize, f64)], positives: &[usize]) -> Option<f64> {
    let mut pos = positives.to_vec();
    pos.sort_unstable();
    pos.dedup();
    let is_pos = |item: usize| pos.binary_search(&item).is_ok();

    let mut sorted: Vec<(f64, bool)> = scores.iter().map(|&(i, s)| (s, is_pos(i))).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_pos = sorted.iter().filter(|(_, p)| *p).count();
    let n_neg = sorted.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }

    // Mann-Whitney: sum of positive midranks
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start;
        while end + 1 < sorted.len() && sorted[end + 1].0 == sorted[start].0 {
            end += 1;
        }
        let midrank = (start + end) as f64 / 2.0 + 1.0;
        let tied_pos = sorted[start..=end].iter().filter(|(_, p)| *p).count();
        rank_sum += midrank * tied_pos as f64;
        start = end + 1;
    }
    let correct = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(correct / (n_pos * n_neg) as f64)
}

/// Items by descending score, ties broken by ascending item index.
pub fn rank_items(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Binary-gain NDCG@k with `1/log2(rank + 1)` discounts. Returns 0 when
/// there are no positives.
pub fn ndcg_at_k(ranking: &[usize], positives: &[usize], k: usize) -> f64 {
    let mut pos = positives.to_vec();
    pos.sort_unstable();
    pos.dedup();
    if pos.is_empty() || k == 0 {
        return 0.0;
    }
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, item)| pos.binary_search(item).is_ok())
        .map(|(r, _)| discount(r + 1))
        .sum();
    let idcg: f64 = (1..=k.min(pos.len())).map(discount).sum();
    dcg / idcg
}

/// Supplies the user vector used to score target items for a test user.
pub trait EmbeddingProvider {
    fn embed(&self, user: &OverlapUser) -> Result<Vec<f64>>;
}

/// A meta or mapping network applied to source-domain embeddings.
pub struct Transformed<'a, T> {
    pub net: &'a T,
    pub source: &'a BaseModel,
}

impl<T: UserTransform> EmbeddingProvider for Transformed<'_, T> {
    fn embed(&self, user: &OverlapUser) -> Result<Vec<f64>> {
        cold_start_embed(self.net, self.source, user)
    }
}

/// The target model's own user rows.
pub struct TargetRows<'a> {
    pub target: &'a BaseModel,
}

impl EmbeddingProvider for TargetRows<'_> {
    fn embed(&self, user: &OverlapUser) -> Result<Vec<f64>> {
        if user.target >= self.target.users.rows() {
            return Err(Error::UnknownUser(user.id.clone()));
        }
        Ok(self.target.users.row(user.target).to_vec())
    }
}

impl<F> EmbeddingProvider for F
where
    F: Fn(&OverlapUser) -> Result<Vec<f64>>,
{
    fn embed(&self, user: &OverlapUser) -> Result<Vec<f64>> {
        self(user)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserMetrics {
    pub user: String,
    pub auc: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub k: usize,
    pub auc: f64,
    pub ndcg_at_k: f64,
    pub num_users: usize,
    pub num_skipped: usize,
    pub per_user: Vec<UserMetrics>,
    pub errors: Vec<String>,
    /// Free-form provenance such as seeds, written as extra key/value rows.
    pub meta: Vec<(String, String)>,
}

pub fn evaluate_user(
    target: &BaseModel,
    user_vec: &[f64],
    positives: &[usize],
    k: usize,
) -> Result<Option<(f64, f64)>> {
    let scores = target.score_all(user_vec)?;
    let indexed: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
    Ok(auc_per_user(&indexed, positives).map(|auc| (auc, ndcg_at_k(&rank_items(&scores), positives, k))))
}

/// Macro-averaged AUC and NDCG@k over `test_overlap`. Every target item is a
/// candidate; the user's target-domain interactions are the positives.
pub fn evaluate_cold_start(
    method: &str,
    test_overlap: &OverlapSet,
    embed: &dyn EmbeddingProvider,
    target: &BaseModel,
    target_data: &InteractionDataset,
    k: usize,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    Error::check_dim(target_data.num_items(), target.items.rows())?;
    let mut per_user = Vec::with_capacity(test_overlap.len());
    let mut errors = Vec::new();
    for user in test_overlap.iter() {
        let vec = match embed.embed(user) {
            Ok(v) => v,
            Err(Error::UnknownUser(id)) => {
                errors.push(format!("unknown user `{id}`"));
                continue;
            }
            Err(e) => return Err(e),
        };
        if user.target >= target_data.num_users() {
            errors.push(format!("user `{}` missing from target data", user.id));
            continue;
        }
        if let Some((auc, ndcg)) = evaluate_user(target, &vec, target_data.user_items(user.target), k)? {
            per_user.push(UserMetrics {
                user: user.id.clone(),
                auc,
                ndcg,
            });
        }
    }
    if per_user.is_empty() {
        return Err(Error::InvalidArgument("no test user could be evaluated".into()));
    }
    let n = per_user.len() as f64;
    Ok(EvalReport {
        method: method.to_owned(),
        k,
        auc: per_user.iter().map(|u| u.auc).sum::<f64>() / n,
        ndcg_at_k: per_user.iter().map(|u| u.ndcg).sum::<f64>() / n,
        num_users: test_overlap.len(),
        num_skipped: test_overlap.len() - per_user.len(),
        per_user,
        errors,
        meta: Vec::new(),
    })
}

const REPORT_HEADER: &str = "# cold-start evaluation report";

impl EvalReport {
    /// Tab-separated key/value lines, a blank line, then a per-user table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{REPORT_HEADER}");
        let _ = writeln!(out, "method\t{}", self.method);
        let _ = writeln!(out, "k\t{}", self.k);
        let _ = writeln!(out, "auc\t{:?}", self.auc);
        let _ = writeln!(out, "ndcg_at_k\t{:?}", self.ndcg_at_k);
        let _ = writeln!(out, "num_users\t{}", self.num_users);
        let _ = writeln!(out, "num_skipped\t{}", self.num_skipped);
        for (key, value) in &self.meta {
            let _ = writeln!(out, "meta.{key}\t{value}");
        }
        for e in &self.errors {
            let _ = writeln!(out, "error\t{e}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "user\tauc\tndcg");
        for u in &self.per_user {
            let _ = writeln!(out, "{}\t{:?}\t{:?}", u.user, u.auc, u.ndcg);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut report = EvalReport {
            method: String::new(),
            k: 0,
            auc: f64::NAN,
            ndcg_at_k: f64::NAN,
            num_users: 0,
            num_skipped: 0,
            per_user: Vec::new(),
            errors: Vec::new(),
            meta: Vec::new(),
        };
        let mut in_table = false;
        for (n, line) in text.lines().enumerate() {
            let lineno = n + 1;
            let err = |message: String| Error::Parse { line: lineno, message };
            if line.starts_with('#') {
                continue;
            }
            if line.is_empty() {
                in_table = true;
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if in_table {
                if fields == ["user", "auc", "ndcg"] {
                    continue;
                }
                let [user, auc, ndcg] = fields[..] else {
                    return Err(err(format!("expected 3 columns, got {}", fields.len())));
                };
                report.per_user.push(UserMetrics {
                    user: user.to_owned(),
                    auc: parse(auc).map_err(err)?,
                    ndcg: parse(ndcg).map_err(err)?,
                });
                continue;
            }
            let Some((key, value)) = line.split_once('\t') else {
                return Err(err("expected `key<TAB>value`".into()));
            };
            match key {
                "method" => report.method = value.to_owned(),
                "k" => report.k = parse(value).map_err(err)?,
                "auc" => report.auc = parse(value).map_err(err)?,
                "ndcg_at_k" => report.ndcg_at_k = parse(value).map_err(err)?,
                "num_users" => report.num_users = parse(value).map_err(err)?,
                "num_skipped" => report.num_skipped = parse(value).map_err(err)?,
                "error" => report.errors.push(value.to_owned()),
                other => match other.strip_prefix("meta.") {
                    Some(m) => report.meta.push((m.to_owned(), value.to_owned())),
                    None => return Err(err(format!("unknown key `{other}`"))),
                },
            }
        }
        Ok(report)
    }
}

fn parse<T: FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse `{s}`"))
}
