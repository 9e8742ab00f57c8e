//! Experiment driver for the spiking CNN engine.

pub mod commands;
pub mod config;
pub mod data;
pub mod manifest;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands::Run;
use crate::config::RunConfig;
use crate::manifest::Manifest;

/// Spiking CNN experiments: encoding, STDP training, classification and
/// the diagnostic studies. Every command writes a manifest that can be
/// passed back as `--config` to repeat it.
#[derive(Debug, Parser)]
#[command(name = "spikeconv", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file (TOML) or a manifest from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs everything serially.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "SPIKECONV_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Directory holding upstream artifacts; defaults to the output directory.
    #[arg(long, global = true)]
    pub from: Option<PathBuf>,
    /// Override a config key, e.g. `--set head.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Encode the train and test splits into the spike cache.
    Encode,
    /// Train the convolution layers with STDP.
    Train,
    /// Extract features with the trained layers.
    Features,
    /// Train the classifier head on the features.
    Classify,
    /// Evaluate the head on the test features.
    Eval,
    /// Pattern-in-noise STDP demonstration.
    DemoStdp,
    /// Catastrophic-forgetting sweep over rehearsal fractions.
    Forget,
    /// Render the learned kernels in input space.
    Reconstruct,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Encode => "encode",
            Command::Train => "train",
            Command::Features => "features",
            Command::Classify => "classify",
            Command::Eval => "eval",
            Command::DemoStdp => "demo-stdp",
            Command::Forget => "forget",
            Command::Reconstruct => "reconstruct",
        }
    }
}

/// Resolves the config, then runs the command on a pool capped at
/// `--threads` workers.
pub fn run(cli: &Cli) -> Result<Manifest> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path, &c.overrides)?,
        None => RunConfig::resolve("", &c.overrides)?,
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
        cfg.validate()?;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = c.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker pool")?;
    let input = c.from.clone().unwrap_or_else(|| c.out.clone());
    let command = cli.command;
    pool.install(|| {
        let mut run = Run::new(command.name(), cfg, c.out.clone(), input)?;
        match command {
            Command::Encode => commands::encode(&mut run),
            Command::Train => commands::train(&mut run),
            Command::Features => commands::features(&mut run),
            Command::Classify => commands::classify(&mut run),
            Command::Eval => commands::eval(&mut run),
            Command::DemoStdp => commands::demo_stdp(&mut run),
            Command::Forget => commands::forget(&mut run),
            Command::Reconstruct => commands::reconstruct(&mut run),
        }
        .with_context(|| format!("{} failed", command.name()))?;
        run.finish()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_flags_after_the_subcommand() {
        let cli = Cli::try_parse_from(["spikeconv", "train", "--seed", "4", "--threads", "1", "--out", "x", "--set", "head.epochs=2"]).unwrap();
        assert_eq!(cli.command, Command::Train);
        assert_eq!(cli.common.seed, Some(4));
        assert_eq!(cli.common.threads, Some(1));
        assert_eq!(cli.common.out, PathBuf::from("x"));
        assert_eq!(cli.common.overrides, vec!["head.epochs=2".to_string()]);
    }

    #[test]
    fn subcommand_names_match_the_parser() {
        for (arg, cmd) in [("demo-stdp", Command::DemoStdp), ("reconstruct", Command::Reconstruct)] {
            let cli = Cli::try_parse_from(["spikeconv", arg]).unwrap();
            assert_eq!(cli.command, cmd);
            assert_eq!(cmd.name(), arg);
        }
    }
}
