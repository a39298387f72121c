use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use saferl::calibration::FitConfig;
use saferl::harness::{self, TrainConfig};

#[derive(Parser)]
#[command(name = "saferl", version, about = "Shielded deep Q-learning on a two-lane highway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long, value_enum)]
    supervisor: Option<Switch>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

impl Common {
    fn train_config(&self) -> Result<TrainConfig> {
        let mut config = match &self.config {
            Some(path) => TrainConfig::from_file(path).with_context(|| format!("loading {}", path.display()))?,
            None => TrainConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            config.epochs = epochs;
        }
        if let Some(s) = self.supervisor {
            config.supervisor.enabled = matches!(s, Switch::On);
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Greedy rollouts of a saved policy.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Weights file written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
    },
    /// Train with and without the supervisor and tabulate collisions.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the lane-change decision model to a labelled CSV file.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 400)]
        iterations: usize,
    },
    /// Collect lane-change decisions from standard input.
    Elicit {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        count: usize,
    },
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common } => {
            let config = common.train_config()?;
            let run = harness::train(&config, &common.out)?;
            println!(
                "trained {} epochs: {} collisions, {} vetoes",
                run.episodes.len(),
                run.collisions(),
                run.veto_count
            );
            for p in &run.evaluations {
                println!(
                    "  epoch {:>5}  mean return {:>10.2}  collisions {}",
                    p.epoch, p.summary.mean_return, p.summary.collisions
                );
            }
            println!("artifacts in {}", common.out.display());
        }
        Command::Eval { common, checkpoint, episodes } => {
            let config = common.train_config()?;
            let s = harness::evaluate(&checkpoint, episodes, config.seed, &config)?;
            println!(
                "{} episodes: mean {:.2}, std {:.2}, min {:.2}, max {:.2}, collisions {}",
                s.episodes, s.mean_return, s.std_return, s.min_return, s.max_return, s.collisions
            );
        }
        Command::Compare { common } => {
            let config = common.train_config()?;
            let cmp = harness::compare(&config, &common.out)?;
            print!("{}", cmp.table());
            println!("written to {}", cmp.csv.display());
        }
        Command::Calibrate {
            common,
            data,
            restarts,
            iterations,
        } => {
            ensure_dir(&common.out)?;
            let fit = FitConfig {
                seed: common.seed.unwrap_or(0),
                restarts,
                max_iterations: iterations,
                ..FitConfig::default()
            };
            let out = common.out.join("calibration.json");
            let result = harness::calibrate(&data, &fit, &out)?;
            println!(
                "accuracy {:.4}, mean nll {:.6}, best restart {}",
                result.accuracy, result.nll, result.best_restart
            );
            println!("parameters written to {}", out.display());
        }
        Command::Elicit { common, count } => {
            if count == 0 {
                bail!("--count must be at least 1");
            }
            ensure_dir(&common.out)?;
            let out = common.out.join("decisions.csv");
            let stdin = io::stdin();
            let mut input = stdin.lock();
            let mut prompts = io::stderr();
            let records = harness::elicit(count, common.seed.unwrap_or(0), &mut input, &mut prompts, &out)?;
            prompts.flush().ok();
            println!("{} decisions written to {}", records.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
