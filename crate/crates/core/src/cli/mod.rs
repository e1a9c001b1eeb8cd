//! Command-line interface: argument parsing and dispatch.

pub mod commands;
pub mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::model::VariantKind;

pub use commands::{
    cmd_compare, cmd_eval, cmd_gen_data, cmd_predict, cmd_train, default_train_config,
    load_train_config,
};
pub use manifest::{RunManifest, MANIFEST_FILE};

/// Env var naming the default output root (used when --out is relative).
pub const OUT_ROOT_ENV: &str = "RANP_OUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "ranp", version, about = "Recurrent attentive neural processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (GP+sine realizations or lane-change
    /// traffic scenarios).
    GenData {
        /// Task: "synthetic" or "traffic".
        #[arg(long)]
        task: String,
        #[arg(long)]
        seed: u64,
        /// Number of realizations / scenarios.
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a TOML config or a previous run's manifest.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Rerun exactly from a manifest.json instead of a config.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Overrides the config's training seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's iteration count.
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the full default config for a variant (np, anp,
        /// anp-lstm) and exit.
        #[arg(long, value_name = "VARIANT")]
        print_defaults: Option<String>,
    },
    /// Evaluate a checkpoint's mean target NLL on a held-out set.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Training config supplying the dataset definition.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        eval_seed: u64,
        #[arg(long, default_value_t = 16)]
        eval_size: usize,
        #[arg(long, default_value_t = 8)]
        z_samples: usize,
        /// Optional JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict targets given contexts with a trained 1-D checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV with header x,y.
        #[arg(long)]
        context: PathBuf,
        /// CSV with header x.
        #[arg(long)]
        targets: PathBuf,
        #[arg(long, default_value_t = 8)]
        z_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every .toml config in a directory and compare final NLLs.
    Compare {
        #[arg(long)]
        configs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Resolves a relative --out against RANP_OUT_ROOT when set.
fn resolve_out(out: PathBuf) -> PathBuf {
    if out.is_relative() {
        if let Ok(root) = std::env::var(OUT_ROOT_ENV) {
            return PathBuf::from(root).join(out);
        }
    }
    out
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { task, seed, count, out } => {
            cmd_gen_data(&task, seed, count, &resolve_out(out))
        }
        Command::Train { config, manifest, seed, iterations, out, print_defaults } => {
            if let Some(variant) = print_defaults {
                let cfg = default_train_config(VariantKind::parse(&variant)?);
                let text = toml::to_string_pretty(&cfg)
                    .map_err(|e| Error::format(format!("cannot encode defaults: {e}")))?;
                print!("{text}");
                return Ok(());
            }
            let out = out.ok_or_else(|| Error::config("train requires --out"))?;
            cmd_train(
                config.as_deref(),
                manifest.as_deref(),
                seed,
                iterations,
                &resolve_out(out),
            )
        }
        Command::Eval { checkpoint, config, eval_seed, eval_size, z_samples, out } => cmd_eval(
            &checkpoint,
            &config,
            eval_seed,
            eval_size,
            z_samples,
            out.map(resolve_out).as_deref(),
        )
        .map(|_| ()),
        Command::Predict { checkpoint, context, targets, z_samples, seed, out } => {
            cmd_predict(&checkpoint, &context, &targets, z_samples, seed, &resolve_out(out))
        }
        Command::Compare { configs, out } => cmd_compare(&configs, &resolve_out(out)),
    }
}
