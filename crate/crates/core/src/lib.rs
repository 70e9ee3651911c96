// SPDX-License-Identifier: Apache-2.0

//! Cold-start cross-domain recommendation by meta-learning an affine
//! transformation from pretrained source-domain user embeddings into a
//! frozen target-domain model, plus the mapping baseline it is compared to.

pub mod affine;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;
pub mod mapping;
pub mod meta;
pub mod models;
pub mod optim;
pub mod pretrain;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use affine::{AffineMap, UserTransform};
pub use dataset::{
    find_overlap, split_cold_start, ColdStartSplit, FileFormat, InteractionDataset, OverlapSet, OverlapUser,
};
pub use error::{Error, Result};
pub use eval::{evaluate_cold_start, EvalReport, EmbeddingProvider, TargetRows, Transformed};
pub use mapping::{train_mapping, MappingConfig, MappingNetwork, MappingOutcome};
pub use meta::{cold_start_embed, meta_train, GradientOrder, MetaConfig, MetaNetwork, MetaOutcome, OuterOptimizer};
pub use models::{BaseModel, ModelKind};
pub use pretrain::{fold_in_users, train_base_model, PretrainConfig, PretrainOutcome};
pub use synth::{generate as generate_synthetic, SynthConfig, SynthWorld};
pub use tensor::Embeddings;
