// SPDX-License-Identifier: Apache-2.0

//! Pipeline commands behind the `tmcdr` binary. Each command reads its
//! inputs from the run directory and persists its outputs there, so stages
//! can be run separately and rerun deterministically.

pub mod artifacts;
pub mod config;
pub mod error;

use clap::ValueEnum;
use tmcdr_core::eval::EmbeddingProvider;
use tmcdr_core::{
    evaluate_cold_start, find_overlap, fold_in_users, generate_synthetic, meta_train, split_cold_start, train_mapping,
    train_base_model, EvalReport, FileFormat, InteractionDataset, MappingOutcome, MetaNetwork, MetaOutcome,
    OverlapSet, SynthWorld, TargetRows, Transformed,
};

use artifacts::{load_model, load_net, read_toml, save_model, save_net, write_text, write_toml, Layout, ModelMeta, NetMeta, SplitManifest};
pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Tmcdr,
    Emcdr,
    /// Test users' own target embeddings, fitted on their held-out positives.
    #[value(name = "target_oracle")]
    TargetOracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tmcdr => "tmcdr",
            Method::Emcdr => "emcdr",
            Method::TargetOracle => "target_oracle",
        }
    }
}

const SPLIT_HINT: &str = "run `tmcdr split` first";

pub fn load_dataset(path: &std::path::Path) -> CliResult<InteractionDataset> {
    artifacts::require(path, "set [data] in the config or run `tmcdr synth`")?;
    Ok(InteractionDataset::load(path, FileFormat::from_path(path))?)
}

struct Inputs {
    source: InteractionDataset,
    target: InteractionDataset,
}

fn load_inputs(config: &RunConfig) -> CliResult<Inputs> {
    Ok(Inputs {
        source: load_dataset(&config.source_path())?,
        target: load_dataset(&config.target_path())?,
    })
}

fn load_split(layout: &Layout, inputs: &Inputs) -> CliResult<(OverlapSet, OverlapSet)> {
    let manifest: SplitManifest = read_toml(&layout.split(), SPLIT_HINT)?;
    let train = OverlapSet::from_ids(&inputs.source, &inputs.target, &manifest.train)?;
    let test = OverlapSet::from_ids(&inputs.source, &inputs.target, &manifest.test)?;
    Ok((train, test))
}

pub fn cmd_synth(config: &RunConfig) -> CliResult<SynthWorld> {
    let world = generate_synthetic(&config.synth_config())?;
    for (path, data) in [(config.source_path(), &world.source), (config.target_path(), &world.target)] {
        let mut buf = Vec::new();
        data.write_tsv(&mut buf).expect("writing to memory");
        write_text(&path, std::str::from_utf8(&buf).expect("ids are utf-8"))?;
    }
    Ok(world)
}

pub fn cmd_split(config: &RunConfig) -> CliResult<SplitManifest> {
    let inputs = load_inputs(config)?;
    let overlap = find_overlap(&inputs.source, &inputs.target)?;
    let seed = config.seeds().split;
    let split = split_cold_start(&overlap, config.split.ratio, seed)?;
    let manifest = SplitManifest {
        seed,
        ratio: config.split.ratio,
        source_domain: inputs.source.domain_id().to_owned(),
        target_domain: inputs.target.domain_id().to_owned(),
        train: split.train.ids().map(str::to_owned).collect(),
        test: split.test.ids().map(str::to_owned).collect(),
    };
    write_toml(&Layout::new(&config.out_dir).split(), &manifest)?;
    Ok(manifest)
}

/// Trains one domain's base model. The target model never sees the
/// cold-start users' interactions, so the split must exist first.
pub fn cmd_pretrain(config: &RunConfig, domain: Domain) -> CliResult<ModelMeta> {
    let layout = Layout::new(&config.out_dir);
    let pc = config.pretrain_config(domain)?;
    let (data, held_out) = match domain {
        Domain::Source => (load_dataset(&config.source_path())?, 0),
        Domain::Target => {
            let inputs = load_inputs(config)?;
            let (_, test) = load_split(&layout, &inputs)?;
            let rows: Vec<usize> = test.iter().map(|u| u.target).collect();
            (inputs.target.without_users_interactions(&rows), rows.len())
        }
    };
    let outcome = train_base_model(&data, &pc)?;
    let meta = ModelMeta {
        domain: data.domain_id().to_owned(),
        kind: pc.kind.name().to_owned(),
        cml_margin: match pc.kind {
            tmcdr_core::ModelKind::Cml { margin } => Some(margin),
            _ => None,
        },
        dim: pc.dim,
        seed: pc.seed,
        epochs: pc.epochs,
        num_users: data.num_users(),
        num_items: data.num_items(),
        held_out_users: held_out,
        loss_curve: outcome.loss_curve,
    };
    save_model(&layout, domain, &outcome.model, &data, &meta)?;
    Ok(meta)
}

pub fn cmd_meta_train(config: &RunConfig) -> CliResult<MetaOutcome> {
    let layout = Layout::new(&config.out_dir);
    let inputs = load_inputs(config)?;
    let (train, _) = load_split(&layout, &inputs)?;
    let (source, _) = load_model(&layout, Domain::Source, &inputs.source)?;
    let (target, _) = load_model(&layout, Domain::Target, &inputs.target)?;
    let mc = config.meta_config()?;
    let outcome = meta_train(&source, &target, &inputs.target, &train, &mc)?;
    let record = NetMeta {
        method: Method::Tmcdr.name().into(),
        dim: source.dim(),
        seed: mc.seed,
        steps: mc.iterations,
        train_users: train.len(),
        loss_curve: outcome.loss_curve.clone(),
    };
    save_net(&layout.meta_net(), &layout.meta_record(), &outcome.net.map, &record)?;
    Ok(outcome)
}

pub fn cmd_map_train(config: &RunConfig) -> CliResult<MappingOutcome> {
    let layout = Layout::new(&config.out_dir);
    let inputs = load_inputs(config)?;
    let (train, _) = load_split(&layout, &inputs)?;
    let (source, _) = load_model(&layout, Domain::Source, &inputs.source)?;
    let (target, _) = load_model(&layout, Domain::Target, &inputs.target)?;
    let mc = config.mapping_config();
    let outcome = train_mapping(&source, &target, &train, &mc)?;
    let record = NetMeta {
        method: Method::Emcdr.name().into(),
        dim: source.dim(),
        seed: mc.seed,
        steps: mc.epochs,
        train_users: train.len(),
        loss_curve: outcome.loss_curve.clone(),
    };
    save_net(&layout.mapping_net(), &layout.mapping_record(), &outcome.net.map, &record)?;
    Ok(outcome)
}

pub fn cmd_evaluate(config: &RunConfig, method: Method) -> CliResult<EvalReport> {
    let layout = Layout::new(&config.out_dir);
    let inputs = load_inputs(config)?;
    let (_, test) = load_split(&layout, &inputs)?;
    let (source, _) = load_model(&layout, Domain::Source, &inputs.source)?;
    let (target, _) = load_model(&layout, Domain::Target, &inputs.target)?;
    tmcdr_core::Error::check_dim(target.dim(), source.dim())?;

    let k = config.eval.k;
    let mut report = match method {
        Method::Tmcdr | Method::Emcdr => {
            let (path, hint) = match method {
                Method::Tmcdr => (layout.meta_net(), "run `tmcdr meta-train` first"),
                _ => (layout.mapping_net(), "run `tmcdr map-train` first"),
            };
            let map = load_net(&path, hint)?;
            tmcdr_core::Error::check_dim(target.dim(), map.dim())?;
            let net = MetaNetwork { map };
            let provider = Transformed { net: &net, source: &source };
            evaluate(method, &test, &provider, &target, &inputs.target, k)?
        }
        Method::TargetOracle => {
            let rows: Vec<usize> = test.iter().map(|u| u.target).collect();
            let mut pc = config.pretrain_config(Domain::Target)?;
            pc.seed = config.seeds().fold_in;
            let fitted = fold_in_users(&target, &inputs.target, &rows, &pc)?.model;
            evaluate(method, &test, &TargetRows { target: &fitted }, &target, &inputs.target, k)?
        }
    };
    let seeds = config.seeds();
    report.meta = vec![
        ("seed".into(), config.seed.to_string()),
        ("seed.split".into(), seeds.split.to_string()),
        ("seed.pretrain_source".into(), seeds.pretrain_source.to_string()),
        ("seed.pretrain_target".into(), seeds.pretrain_target.to_string()),
        ("seed.meta".into(), seeds.meta.to_string()),
        ("seed.mapping".into(), seeds.mapping.to_string()),
        ("seed.fold_in".into(), seeds.fold_in.to_string()),
        ("source".into(), inputs.source.domain_id().to_owned()),
        ("target".into(), inputs.target.domain_id().to_owned()),
    ];
    write_text(&layout.report(method.name()), &report.to_text())?;
    Ok(report)
}

fn evaluate(
    method: Method,
    test: &OverlapSet,
    provider: &dyn EmbeddingProvider,
    target: &tmcdr_core::BaseModel,
    target_data: &InteractionDataset,
    k: usize,
) -> CliResult<EvalReport> {
    Ok(evaluate_cold_start(method.name(), test, provider, target, target_data, k)?)
}
