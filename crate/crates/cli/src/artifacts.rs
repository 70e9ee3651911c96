// SPDX-License-Identifier: Apache-2.0

//! On-disk layout of a run directory:
//!
//! ```text
//! split.toml
//! source/{users,items}.tmce + .ids, source/model.toml
//! target/{users,items}.tmce + .ids, target/model.toml
//! meta/net.tmce + .ids, meta/train.toml
//! mapping/net.tmce + .ids, mapping/train.toml
//! reports/<method>.txt
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tmcdr_core::io::{load_affine, load_table, save_affine, save_table};
use tmcdr_core::{AffineMap, BaseModel, Error as CoreError, InteractionDataset, ModelKind};

use crate::error::{CliError, CliResult};
use crate::Domain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratio: f64,
    pub source_domain: String,
    pub target_domain: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub domain: String,
    pub kind: String,
    pub cml_margin: Option<f64>,
    pub dim: usize,
    pub seed: u64,
    pub epochs: usize,
    pub num_users: usize,
    pub num_items: usize,
    /// Users whose interactions were withheld from training.
    pub held_out_users: usize,
    pub loss_curve: Vec<f64>,
}

impl ModelMeta {
    pub fn model_kind(&self) -> CliResult<ModelKind> {
        let kind: ModelKind = self.kind.parse()?;
        match (kind, self.cml_margin) {
            (ModelKind::Cml { .. }, Some(m)) => Ok(ModelKind::cml(m)?),
            (k, _) => Ok(k),
        }
    }
}

/// Training record for a meta or mapping network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetMeta {
    pub method: String,
    pub dim: usize,
    pub seed: u64,
    pub steps: usize,
    pub train_users: usize,
    pub loss_curve: Vec<f64>,
}

pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("split.toml")
    }

    pub fn model_dir(&self, domain: Domain) -> PathBuf {
        self.root.join(domain.name())
    }

    pub fn users(&self, domain: Domain) -> PathBuf {
        self.model_dir(domain).join("users.tmce")
    }

    pub fn items(&self, domain: Domain) -> PathBuf {
        self.model_dir(domain).join("items.tmce")
    }

    pub fn model_meta(&self, domain: Domain) -> PathBuf {
        self.model_dir(domain).join("model.toml")
    }

    pub fn meta_net(&self) -> PathBuf {
        self.root.join("meta").join("net.tmce")
    }

    pub fn meta_record(&self) -> PathBuf {
        self.root.join("meta").join("train.toml")
    }

    pub fn mapping_net(&self) -> PathBuf {
        self.root.join("mapping").join("net.tmce")
    }

    pub fn mapping_record(&self) -> PathBuf {
        self.root.join("mapping").join("train.toml")
    }

    pub fn report(&self, method: &str) -> PathBuf {
        self.root.join("reports").join(format!("{method}.txt"))
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CoreError::Io { path: parent.to_path_buf(), source: e })?;
    }
    fs::write(path, text).map_err(|e| CoreError::Io { path: path.to_path_buf(), source: e })?;
    Ok(())
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = toml::to_string(value).map_err(|e| CoreError::Format(e.to_string()))?;
    write_text(path, &text)
}

pub fn require(path: &Path, hint: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing {
            path: path.to_path_buf(),
            hint: hint.to_owned(),
        })
    }
}

pub fn read_toml<T: DeserializeOwned>(path: &Path, hint: &str) -> CliResult<T> {
    require(path, hint)?;
    let text = fs::read_to_string(path).map_err(|e| CoreError::Io { path: path.to_path_buf(), source: e })?;
    toml::from_str(&text).map_err(|e| CoreError::Format(format!("{}: {e}", path.display())).into())
}

pub fn save_model(layout: &Layout, domain: Domain, model: &BaseModel, data: &InteractionDataset, meta: &ModelMeta) -> CliResult<()> {
    save_table(&layout.users(domain), &model.users, data.users().ids())?;
    save_table(&layout.items(domain), &model.items, data.items().ids())?;
    write_toml(&layout.model_meta(domain), meta)
}

/// Loads a pretrained model and checks that its rows line up with `data`.
pub fn load_model(layout: &Layout, domain: Domain, data: &InteractionDataset) -> CliResult<(BaseModel, ModelMeta)> {
    let hint = format!("run `tmcdr pretrain --domain {}` first", domain.name());
    let meta: ModelMeta = read_toml(&layout.model_meta(domain), &hint)?;
    require(&layout.users(domain), &hint)?;
    require(&layout.items(domain), &hint)?;
    let (users, user_ids) = load_table(&layout.users(domain))?;
    let (items, item_ids) = load_table(&layout.items(domain))?;
    if user_ids != data.users().ids() || item_ids != data.items().ids() {
        return Err(CoreError::Format(format!(
            "{} embeddings do not match the rows of {}; re-run pretrain",
            domain.name(),
            data.domain_id()
        ))
        .into());
    }
    let model = BaseModel::new(meta.model_kind()?, users, items)?;
    Ok((model, meta))
}

pub fn save_net(path: &Path, record_path: &Path, map: &AffineMap, record: &NetMeta) -> CliResult<()> {
    save_affine(path, map)?;
    write_toml(record_path, record)
}

pub fn load_net(path: &Path, hint: &str) -> CliResult<AffineMap> {
    require(path, hint)?;
    Ok(load_affine(path)?)
}
