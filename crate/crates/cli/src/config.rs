// SPDX-License-Identifier: Apache-2.0

//! TOML run configuration. Every section is optional; unknown keys are
//! rejected so a misspelled hyperparameter fails loudly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tmcdr_core::meta::{GradientOrder, OuterOptimizer};
use tmcdr_core::models::DEFAULT_CML_MARGIN;
use tmcdr_core::{MappingConfig, MetaConfig, ModelKind, PretrainConfig, SynthConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; each stage derives its own from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataSection,
    pub split: SplitSection,
    pub pretrain: PretrainSections,
    pub meta: MetaSection,
    pub mapping: MappingSection,
    pub eval: EvalSection,
    pub synth: SynthSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("tmcdr-out"),
            data: DataSection::default(),
            split: SplitSection::default(),
            pretrain: PretrainSections::default(),
            meta: MetaSection::default(),
            mapping: MappingSection::default(),
            eval: EvalSection::default(),
            synth: SynthSection::default(),
        }
    }
}

/// Interaction files; when unset they default to `source.tsv` and
/// `target.tsv` inside the output directory, where `synth` writes them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub ratio: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { ratio: 0.2 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSections {
    pub source: PretrainSection,
    pub target: PretrainSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub kind: String,
    pub cml_margin: f64,
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub l2: f64,
    pub negatives: usize,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let d = PretrainConfig::default();
        Self {
            kind: d.kind.name().to_owned(),
            cml_margin: DEFAULT_CML_MARGIN,
            dim: d.dim,
            epochs: d.epochs,
            batch_size: d.batch_size,
            lr: d.lr,
            l2: d.l2,
            negatives: d.negatives_per_positive,
        }
    }
}

impl PretrainSection {
    pub fn model_kind(&self) -> CliResult<ModelKind> {
        match self.kind.parse::<ModelKind>()? {
            ModelKind::Cml { .. } => Ok(ModelKind::cml(self.cml_margin)?),
            other => Ok(other),
        }
    }

    pub fn to_core(&self, seed: u64) -> CliResult<PretrainConfig> {
        let config = PretrainConfig {
            kind: self.model_kind()?,
            dim: self.dim,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            l2: self.l2,
            negatives_per_positive: self.negatives,
            seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaSection {
    pub inner_lr: f64,
    pub outer_lr: f64,
    /// `adam` or `sgd`.
    pub optimizer: String,
    pub group_size: usize,
    pub groups_per_batch: usize,
    pub iterations: usize,
    pub inner_steps: usize,
    /// `second` or `first`.
    pub order: String,
    pub negatives: usize,
}

impl Default for MetaSection {
    fn default() -> Self {
        let d = MetaConfig::default();
        Self {
            inner_lr: d.inner_lr,
            outer_lr: d.outer_lr,
            optimizer: "adam".into(),
            group_size: d.group_size,
            groups_per_batch: d.groups_per_batch,
            iterations: d.iterations,
            inner_steps: d.inner_steps,
            order: "second".into(),
            negatives: d.negatives_per_positive,
        }
    }
}

impl MetaSection {
    pub fn to_core(&self, seed: u64) -> CliResult<MetaConfig> {
        let outer_optimizer = match self.optimizer.as_str() {
            "adam" => OuterOptimizer::Adam,
            "sgd" => OuterOptimizer::Sgd,
            other => return Err(CliError::Usage(format!("meta.optimizer: expected adam or sgd, got `{other}`"))),
        };
        let order = match self.order.as_str() {
            "second" => GradientOrder::Second,
            "first" => GradientOrder::First,
            other => return Err(CliError::Usage(format!("meta.order: expected second or first, got `{other}`"))),
        };
        let config = MetaConfig {
            inner_lr: self.inner_lr,
            outer_lr: self.outer_lr,
            outer_optimizer,
            group_size: self.group_size,
            groups_per_batch: self.groups_per_batch,
            iterations: self.iterations,
            inner_steps: self.inner_steps,
            order,
            negatives_per_positive: self.negatives,
            seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingSection {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for MappingSection {
    fn default() -> Self {
        let d = MappingConfig::default();
        Self { epochs: d.epochs, lr: d.lr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub users_per_domain: usize,
    pub items_per_domain: usize,
    pub dim: usize,
    pub overlap: usize,
    pub noise: f64,
    pub translation: f64,
    pub logit_scale: f64,
    pub logit_offset: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            users_per_domain: d.users_per_domain,
            items_per_domain: d.items_per_domain,
            dim: d.dim,
            overlap: d.overlap,
            noise: d.noise,
            translation: d.translation,
            logit_scale: d.logit_scale,
            logit_offset: d.logit_offset,
        }
    }
}

/// Per-stage seeds derived from the global one. Target pretraining is
/// offset so the two domains never start from correlated tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub split: u64,
    pub pretrain_source: u64,
    pub pretrain_target: u64,
    pub fold_in: u64,
    pub meta: u64,
    pub mapping: u64,
    pub synth: u64,
}

impl RunConfig {
    /// Parses TOML and resolves relative paths against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        config.out_dir = base_dir.join(&config.out_dir);
        for p in [&mut config.data.source, &mut config.data.target].into_iter().flatten() {
            *p = base_dir.join(&*p);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> CliResult<()> {
        let seeds = self.seeds();
        let source = self.pretrain.source.to_core(seeds.pretrain_source)?;
        let target = self.pretrain.target.to_core(seeds.pretrain_target)?;
        if source.dim != target.dim {
            return Err(CliError::Usage(format!(
                "pretrain.source.dim ({}) and pretrain.target.dim ({}) must be equal",
                source.dim, target.dim
            )));
        }
        self.meta.to_core(seeds.meta)?;
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(CliError::Usage(format!("split.ratio must lie in (0, 1), got {}", self.split.ratio)));
        }
        if !(self.mapping.lr > 0.0 && self.mapping.lr.is_finite()) {
            return Err(CliError::Usage("mapping.lr must be > 0".into()));
        }
        if self.eval.k == 0 {
            return Err(CliError::Usage("eval.k must be >= 1".into()));
        }
        self.synth_config().validate()?;
        Ok(())
    }

    pub fn seeds(&self) -> StageSeeds {
        let s = self.seed;
        StageSeeds {
            split: s,
            pretrain_source: s,
            pretrain_target: s.wrapping_add(1),
            fold_in: s,
            meta: s,
            mapping: s,
            synth: s,
        }
    }

    pub fn source_path(&self) -> PathBuf {
        self.data.source.clone().unwrap_or_else(|| self.out_dir.join("source.tsv"))
    }

    pub fn target_path(&self) -> PathBuf {
        self.data.target.clone().unwrap_or_else(|| self.out_dir.join("target.tsv"))
    }

    pub fn pretrain_config(&self, domain: crate::Domain) -> CliResult<PretrainConfig> {
        let seeds = self.seeds();
        match domain {
            crate::Domain::Source => self.pretrain.source.to_core(seeds.pretrain_source),
            crate::Domain::Target => self.pretrain.target.to_core(seeds.pretrain_target),
        }
    }

    pub fn meta_config(&self) -> CliResult<MetaConfig> {
        self.meta.to_core(self.seeds().meta)
    }

    pub fn mapping_config(&self) -> MappingConfig {
        MappingConfig {
            epochs: self.mapping.epochs,
            lr: self.mapping.lr,
            seed: self.seeds().mapping,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            users_per_domain: s.users_per_domain,
            items_per_domain: s.items_per_domain,
            dim: s.dim,
            overlap: s.overlap,
            noise: s.noise,
            translation: s.translation,
            logit_scale: s.logit_scale,
            logit_offset: s.logit_offset,
            seed: self.seeds().synth,
        }
    }
}
