// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tmcdr_cli::{
    cmd_evaluate, cmd_map_train, cmd_meta_train, cmd_pretrain, cmd_split, cmd_synth, CliError, CliResult, Domain,
    Method, RunConfig,
};

#[derive(Parser)]
#[command(name = "tmcdr", version, about = "Cold-start cross-domain recommendation pipeline")]
struct Args {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic two-domain dataset.
    Synth,
    /// Split overlapping users into meta-training and cold-start test sets.
    Split,
    /// Pretrain one domain's base model.
    Pretrain {
        #[arg(long, value_enum)]
        domain: Domain,
    },
    /// Meta-train the transformation network.
    MetaTrain,
    /// Train the mapping baseline.
    MapTrain,
    /// Evaluate cold-start recommendations for the test users.
    Evaluate {
        #[arg(long, value_enum)]
        method: Method,
    },
}

fn run(args: Args) -> CliResult<()> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    config.validate()?;

    match args.command {
        Command::Synth => {
            let world = cmd_synth(&config)?;
            println!(
                "wrote {} ({} interactions) and {} ({} interactions)",
                config.source_path().display(),
                world.source.interactions().len(),
                config.target_path().display(),
                world.target.interactions().len()
            );
        }
        Command::Split => {
            let m = cmd_split(&config)?;
            println!("split: {} meta-train users, {} cold-start test users", m.train.len(), m.test.len());
        }
        Command::Pretrain { domain } => {
            let meta = cmd_pretrain(&config, domain)?;
            let last = meta.loss_curve.last().copied().unwrap_or(f64::NAN);
            println!("pretrained {} {} (dim {}), final loss {last:.6}", domain.name(), meta.kind, meta.dim);
        }
        Command::MetaTrain => {
            let out = cmd_meta_train(&config)?;
            let last = out.loss_curve.last().copied().unwrap_or(f64::NAN);
            println!("meta network trained, final cold-start loss {last:.6}");
        }
        Command::MapTrain => {
            let out = cmd_map_train(&config)?;
            println!("mapping trained, final mse {:.6}", out.final_loss);
        }
        Command::Evaluate { method } => {
            let r = cmd_evaluate(&config, method)?;
            println!(
                "{}: auc {:.4} ndcg@{} {:.4} over {} users ({} skipped)",
                r.method, r.auc, r.k, r.ndcg_at_k, r.num_users, r.num_skipped
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(inner) = &e {
                let mut source = std::error::Error::source(inner);
                while let Some(s) = source {
                    eprintln!("  caused by: {s}");
                    source = s.source();
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
