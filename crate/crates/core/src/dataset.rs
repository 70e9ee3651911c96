// SPDX-License-Identifier: Apache-2.0

//! Two-domain implicit-feedback data: loading and binarizing interaction
//! files, dense id indexing, overlap discovery, the cold-start split, and
//! uniform negative sampling.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Bidirectional map between external string ids and dense indices,
/// assigned in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdIndex {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `id`, assigning the next free one if unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&idx) = self.lookup.get(id) {
            return idx;
        }
        let idx = self.ids.len();
        self.ids.push(id.to_owned());
        self.lookup.insert(id.to_owned(), idx);
        idx
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Tsv,
    Csv,
}

impl FileFormat {
    /// `.csv` files are comma separated; everything else is read as TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Tsv,
        }
    }

    fn delimiter(self) -> char {
        match self {
            FileFormat::Tsv => '\t',
            FileFormat::Csv => ',',
        }
    }
}

/// One domain's binarized interactions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDataset {
    domain_id: String,
    users: IdIndex,
    items: IdIndex,
    interactions: Vec<(usize, usize)>,
    // sorted ascending per user
    per_user_items: Vec<Vec<usize>>,
}

impl InteractionDataset {
    /// Builds a dataset from (user, item) pairs, collapsing duplicates.
    pub fn from_pairs<I, U, V>(domain_id: impl Into<String>, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (U, V)>,
        U: AsRef<str>,
        V: AsRef<str>,
    {
        let mut builder = Builder::new(domain_id.into());
        for (u, v) in pairs {
            builder.push(u.as_ref(), v.as_ref());
        }
        builder.finish()
    }

    /// Parses rows of `user, item, rating[, ...]`. Rows with a positive rating
    /// become interactions; `#` comments and blank lines are skipped.
    pub fn parse<R: BufRead>(
        reader: R,
        format: FileFormat,
        domain_id: impl Into<String>,
    ) -> Result<Self> {
        let delim = format.delimiter();
        let mut builder = Builder::new(domain_id.into());
        for (n, line) in reader.lines().enumerate() {
            let lineno = n + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.split(delim).map(str::trim);
            let (user, item, rating) = match (fields.next(), fields.next(), fields.next()) {
                (Some(u), Some(i), Some(r)) if !u.is_empty() && !i.is_empty() => (u, i, r),
                _ => {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("expected at least 3 `{}`-separated fields", delim.escape_default()),
                    })
                }
            };
            let rating: f64 = rating.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("rating `{rating}` is not a number"),
            })?;
            if !rating.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("rating `{rating}` is not finite"),
                });
            }
            if rating > 0.0 {
                builder.push(user, item);
            }
        }
        builder.finish()
    }

    /// Loads an interaction file; the domain id is the file stem.
    pub fn load(path: &Path, format: FileFormat) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let domain = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(BufReader::new(file), format, domain)
    }

    /// Writes the binarized interactions as `user\titem\t1` rows.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for &(u, i) in &self.interactions {
            writeln!(out, "{}\t{}\t1", self.users.id(u), self.items.id(i))?;
        }
        Ok(())
    }

    /// Removes every interaction of `held_out` users while keeping both id
    /// indices intact, so embeddings trained on the result stay aligned
    /// with the full dataset.
    pub fn without_users_interactions(&self, held_out: &[usize]) -> Self {
        let mut drop = vec![false; self.num_users()];
        for &u in held_out {
            drop[u] = true;
        }
        let interactions: Vec<_> = self
            .interactions
            .iter()
            .copied()
            .filter(|&(u, _)| !drop[u])
            .collect();
        let per_user_items = self
            .per_user_items
            .iter()
            .enumerate()
            .map(|(u, items)| if drop[u] { Vec::new() } else { items.clone() })
            .collect();
        Self {
            domain_id: self.domain_id.clone(),
            users: self.users.clone(),
            items: self.items.clone(),
            interactions,
            per_user_items,
        }
    }

    pub fn domain_id(&self) -> &str {
        &self.domain_id
    }

    pub fn users(&self) -> &IdIndex {
        &self.users
    }

    pub fn items(&self) -> &IdIndex {
        &self.items
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn interactions(&self) -> &[(usize, usize)] {
        &self.interactions
    }

    /// Sorted item indices the user interacted with.
    pub fn user_items(&self, user: usize) -> &[usize] {
        &self.per_user_items[user]
    }

    pub fn has_interaction(&self, user: usize, item: usize) -> bool {
        self.per_user_items[user].binary_search(&item).is_ok()
    }
}

struct Builder {
    domain_id: String,
    users: IdIndex,
    items: IdIndex,
    interactions: Vec<(usize, usize)>,
    per_user_items: Vec<Vec<usize>>,
}

impl Builder {
    fn new(domain_id: String) -> Self {
        Self {
            domain_id,
            users: IdIndex::new(),
            items: IdIndex::new(),
            interactions: Vec::new(),
            per_user_items: Vec::new(),
        }
    }

    fn push(&mut self, user: &str, item: &str) {
        let u = self.users.intern(user);
        let i = self.items.intern(item);
        if u == self.per_user_items.len() {
            self.per_user_items.push(Vec::new());
        }
        let row = &mut self.per_user_items[u];
        if let Err(pos) = row.binary_search(&i) {
            row.insert(pos, i);
            self.interactions.push((u, i));
        }
    }

    fn finish(self) -> Result<InteractionDataset> {
        if self.interactions.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(InteractionDataset {
            domain_id: self.domain_id,
            users: self.users,
            items: self.items,
            interactions: self.interactions,
            per_user_items: self.per_user_items,
        })
    }
}

/// A user present in both domains.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OverlapUser {
    pub source: usize,
    pub target: usize,
    pub id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OverlapSet {
    pub users: Vec<OverlapUser>,
}

impl OverlapSet {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, OverlapUser> {
        self.users.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.users.iter().map(|u| u.id.as_str())
    }

    /// Resolves external ids against both domains.
    pub fn from_ids<S: AsRef<str>>(
        source: &InteractionDataset,
        target: &InteractionDataset,
        ids: &[S],
    ) -> Result<Self> {
        let users = ids
            .iter()
            .map(|id| {
                let id = id.as_ref();
                match (source.users().get(id), target.users().get(id)) {
                    (Some(s), Some(t)) => Ok(OverlapUser {
                        source: s,
                        target: t,
                        id: id.to_owned(),
                    }),
                    _ => Err(Error::UnknownUser(id.to_owned())),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { users })
    }
}

/// Users present in both domains, in source first-appearance order.
pub fn find_overlap(source: &InteractionDataset, target: &InteractionDataset) -> Result<OverlapSet> {
    let users: Vec<_> = source
        .users()
        .ids()
        .iter()
        .enumerate()
        .filter_map(|(s, id)| {
            target.users().get(id).map(|t| OverlapUser {
                source: s,
                target: t,
                id: id.clone(),
            })
        })
        .collect();
    if users.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    Ok(OverlapSet { users })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColdStartSplit {
    pub train: OverlapSet,
    pub test: OverlapSet,
    pub seed: u64,
    pub ratio: f64,
}

/// Number of held-out users: `round(ratio * n)` with halves rounded up.
pub fn cold_start_size(n: usize, ratio: f64) -> usize {
    (ratio * n as f64 + 0.5).floor() as usize
}

/// Holds out `round(ratio * n)` overlap users as cold-start test users.
/// Both halves keep the input order.
pub fn split_cold_start(overlap: &OverlapSet, ratio: f64, seed: u64) -> Result<ColdStartSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let n = overlap.len();
    if n < 2 {
        return Err(Error::Split(format!("need at least 2 overlap users, have {n}")));
    }
    let n_test = cold_start_size(n, ratio);
    if n_test == 0 || n_test == n {
        return Err(Error::Split(format!(
            "ratio {ratio} over {n} users leaves an empty train or test set"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng::seeded(seed, crate::rng::Stream::Split));
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let (test, train): (Vec<_>, Vec<_>) = overlap
        .users
        .iter()
        .cloned()
        .zip(is_test)
        .partition(|(_, t)| *t);
    Ok(ColdStartSplit {
        train: OverlapSet {
            users: train.into_iter().map(|(u, _)| u).collect(),
        },
        test: OverlapSet {
            users: test.into_iter().map(|(u, _)| u).collect(),
        },
        seed,
        ratio,
    })
}

/// A positive interaction with its sampled negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSample {
    pub user: usize,
    pub pos_item: usize,
    pub neg_items: Vec<usize>,
}

/// Draws `k` distinct items the user has not interacted with, uniformly.
pub fn sample_negatives(
    dataset: &InteractionDataset,
    user: usize,
    k: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidArgument("negatives per positive must be >= 1".into()));
    }
    let positives = dataset.user_items(user);
    let n_items = dataset.num_items();
    let candidates = n_items - positives.len();
    if candidates == 0 {
        return Err(Error::Sampling(format!(
            "user `{}` interacted with every item; no negative candidates",
            dataset.users().id(user)
        )));
    }
    if candidates < k {
        return Err(Error::Sampling(format!(
            "user `{}` has {candidates} negative candidates, {k} requested",
            dataset.users().id(user)
        )));
    }

    if candidates >= 2 * k {
        // rejection is cheap when negatives are plentiful
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let item = rng.random_range(0..n_items);
            if positives.binary_search(&item).is_err() && !out.contains(&item) {
                out.push(item);
            }
        }
        Ok(out)
    } else {
        let pool: Vec<usize> = (0..n_items)
            .filter(|i| positives.binary_search(i).is_err())
            .collect();
        Ok(rand::seq::index::sample(rng, pool.len(), k)
            .into_iter()
            .map(|j| pool[j])
            .collect())
    }
}

/// One sample per positive interaction of each listed user, in user order.
pub fn build_samples(
    dataset: &InteractionDataset,
    users: impl IntoIterator<Item = usize>,
    k: usize,
    rng: &mut Rng,
) -> Result<Vec<TrainingSample>> {
    let mut out = Vec::new();
    for user in users {
        for &pos_item in dataset.user_items(user) {
            out.push(TrainingSample {
                user,
                pos_item,
                neg_items: sample_negatives(dataset, user, k, rng)?,
            });
        }
    }
    Ok(out)
}
