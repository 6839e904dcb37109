//! Command-line driver for the construction pipeline.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use polar_rl::codec::Construction;
use polar_rl::construction::{code_from_sequence, NestedSequence};
use polar_rl::experiment::{
    dega_sequence, export_sequence, parse_grid, run_compare, run_eval, run_ga, run_train, Baseline,
    ExperimentConfig, Progress, SEQUENCE_FILE,
};

#[derive(Parser)]
#[command(name = "polar-rl", version, about = "Learn nested polar code constructions")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for simulation and evaluation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write the curve, checkpoint and greedy sequence.
    Train,
    /// Report the EsN0 gap to a baseline at the target BLER for each K.
    Compare {
        /// Learned nested sequence.
        #[arg(long)]
        sequence: PathBuf,
        /// Baseline construction.
        #[arg(long, value_enum, default_value = "dega")]
        baseline: BaselineArg,
        /// Baseline sequence file, with `--baseline sequence`.
        #[arg(long, required_if_eq("baseline", "sequence"))]
        baseline_sequence: Option<PathBuf>,
    },
    /// BLER versus EsN0 for one or more codes.
    Eval {
        /// Nested sequence; codes are taken at each `--k`.
        #[arg(long, conflicts_with = "mask", requires = "k")]
        sequence: Option<PathBuf>,
        /// Information lengths drawn from `--sequence`.
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        /// Frozen mask in hex.
        #[arg(long)]
        mask: Option<String>,
        /// `x`, `x1,x2,...` or `start:step:stop` in dB (default: the config EsN0).
        #[arg(long)]
        esn0: Option<String>,
    },
    /// Run the GA stage alone and write the population archive.
    Ga {
        /// Information lengths (default: the configured GA set).
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
    },
    /// Write a nested sequence from a checkpoint or from DE/GA.
    ExportSequence {
        #[arg(long, conflicts_with = "dega", required_unless_present = "dega")]
        checkpoint: Option<PathBuf>,
        /// DE/GA order at the config's EsN0 instead of a checkpoint.
        #[arg(long)]
        dega: bool,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum BaselineArg {
    Dega,
    Sequence,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let path = self.config.as_deref().context("--config is required for this command")?;
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Some(dir) = &self.output {
            cfg.output.dir = dir.clone();
        }
        Ok(cfg)
    }
}

fn read_sequence(path: &Path) -> Result<NestedSequence> {
    NestedSequence::read_file(path).with_context(|| format!("reading sequence {}", path.display()))
}

fn train(cfg: &ExperimentConfig) -> Result<()> {
    let mut next_report = 0;
    let mut report = |p: &Progress| {
        if p.timestep >= next_report || p.timestep == p.total_timesteps {
            let last = p.new_points.last().map_or(String::from("-"), |c| format!("{:.3}", c.episode_reward));
            eprintln!(
                "step {:>8}/{} episode reward {last} simulations {}",
                p.timestep, p.total_timesteps, p.simulations
            );
            next_report = p.timestep + (p.total_timesteps / 20).max(1);
        }
    };
    let summary = run_train(cfg, &mut report)?;
    let tail = summary.curve.iter().rev().take(10).map(|c| c.episode_reward).collect::<Vec<_>>();
    let mean = if tail.is_empty() { f64::NAN } else { tail.iter().sum::<f64>() / tail.len() as f64 };
    println!(
        "trained {} episodes; mean reward of last {}: {mean:.4}; {} simulations, {} trials, {} cache hits",
        summary.curve.len(),
        tail.len(),
        summary.simulations,
        summary.trials,
        summary.cache_hits
    );
    println!("artifacts in {}", cfg.output.dir.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(w) = cli.common.workers {
        if w == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().context("building the worker pool")?;
    }
    match &cli.command {
        Command::Train => train(&cli.common.load()?)?,
        Command::Compare { sequence, baseline, baseline_sequence } => {
            let cfg = cli.common.load()?;
            let learned = read_sequence(sequence)?;
            let baseline = match baseline {
                BaselineArg::Dega => Baseline::Dega,
                BaselineArg::Sequence => {
                    Baseline::Sequence(read_sequence(baseline_sequence.as_deref().expect("required by clap"))?)
                }
            };
            let report = run_compare(&cfg, &learned, &baseline)?;
            println!("K  learned_dB  baseline_dB  delta_dB  status");
            let cell = |x: Option<f64>| x.map_or("-".into(), |v| format!("{v:.3}"));
            for r in &report.rows {
                println!(
                    "{:<3}{:>10} {:>12} {:>9}  {}",
                    r.k,
                    cell(r.esn0_learned_db),
                    cell(r.esn0_baseline_db),
                    cell(r.delta_db),
                    r.status
                );
            }
        }
        Command::Eval { sequence, k, mask, esn0 } => {
            let cfg = cli.common.load()?;
            let codes: Vec<Construction> = match (sequence, mask) {
                (Some(path), _) => {
                    let seq = read_sequence(path)?;
                    k.iter().map(|&k| code_from_sequence(&seq, k)).collect::<polar_rl::Result<_>>()?
                }
                (None, Some(hex)) => vec![Construction::from_hex(hex, cfg.code.n)?],
                (None, None) => bail!("give --sequence with --k, or --mask"),
            };
            let grid = match esn0 {
                Some(g) => parse_grid(g)?,
                None => vec![cfg.channel.esn0_db],
            };
            for r in run_eval(&cfg, &codes, &grid)? {
                println!("K={} EsN0={} dB BLER={:.4e} ({} errors / {} trials)", r.k, r.esn0_db, r.bler, r.errors, r.trials);
            }
        }
        Command::Ga { k } => {
            let cfg = cli.common.load()?;
            let ks = (!k.is_empty()).then_some(k.as_slice());
            for p in run_ga(&cfg, ks)? {
                println!("K={} best fitness {:.4} mask {}", p.k, p.best().fitness, p.best().construction.to_hex());
            }
        }
        Command::ExportSequence { checkpoint, dega } => {
            let (seq, dir, name) = if *dega {
                let cfg = cli.common.load()?;
                (dega_sequence(cfg.code.n, cfg.channel.esn0_db)?, cfg.output.dir, "dega_sequence.txt")
            } else {
                let dir = match (&cli.common.output, &cli.common.config) {
                    (Some(d), _) => d.clone(),
                    (None, Some(_)) => cli.common.load()?.output.dir,
                    (None, None) => bail!("give --output or --config to choose where the sequence goes"),
                };
                (export_sequence(checkpoint.as_deref().expect("required by clap"))?, dir, SEQUENCE_FILE)
            };
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(name);
            seq.write_file(&path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
