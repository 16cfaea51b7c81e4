//! Command-line front end: full runs, ablation sweeps, re-evaluation and
//! re-analysis of finished run directories, and standalone world generation.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use searchlab_core::config::load_config;
use searchlab_core::report::{aggregate, analyze_run_dir, render_report_csv, render_report_text};
use searchlab_core::runner::{ablate, gen_world, load_run_dir, run};
use searchlab_core::trainer::evaluate;

#[derive(Parser)]
#[command(
    name = "searchlab",
    version,
    about = "Train and evaluate a search-tool agent on synthetic multi-hop questions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a fresh world, evaluate, and write a run directory.
    Run {
        /// TOML config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for run artifacts.
        #[arg(long)]
        out: PathBuf,
        /// Config override, e.g. --set train.epochs=1 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Train and evaluate every ablation variant across the configured seeds.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Re-run greedy evaluation of a finished run directory's policy.
    Evaluate {
        /// A directory previously written by `run`.
        #[arg(long)]
        run_dir: PathBuf,
        /// Include the learned experience bank in evaluation prompts.
        #[arg(long)]
        with_experience: bool,
    },
    /// Recompute the evaluation report of a finished run directory from its
    /// stored trajectories.
    Analyze {
        #[arg(long)]
        run_dir: PathBuf,
        /// Print the CSV report instead of the human-readable one.
        #[arg(long)]
        csv: bool,
    },
    /// Generate a world file without training.
    GenWorld {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output path of the world record file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn real_main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, set } => {
            let cfg = load_config(config.as_deref(), &set).context("loading config")?;
            let artifacts = run(&cfg, &out).context("running")?;
            print!("{}", render_report_text(&artifacts.metrics));
            println!("run directory: {}", artifacts.out_dir.display());
        }
        Command::Ablate { config, out, set } => {
            let cfg = load_config(config.as_deref(), &set).context("loading config")?;
            let artifacts = ablate(&cfg, &out).context("running ablation")?;
            print!(
                "{}",
                searchlab_core::report::render_ablation_text(&artifacts.summary)
            );
            println!("ablation directory: {}", artifacts.out_dir.display());
        }
        Command::Evaluate { run_dir, with_experience } => {
            let loaded = load_run_dir(&run_dir).context("loading run directory")?;
            let bank = if with_experience || loaded.config.train.experience_in_inference {
                Some(&loaded.bank)
            } else {
                None
            };
            let (outcomes, _) = evaluate(
                &loaded.world,
                &loaded.policy,
                bank,
                Some(&loaded.baselines),
                &loaded.config.reward,
                &loaded.config.train,
            );
            print!("{}", render_report_text(&aggregate(&outcomes)));
        }
        Command::Analyze { run_dir, csv } => {
            let metrics = analyze_run_dir(&run_dir).context("analyzing run directory")?;
            if csv {
                print!("{}", render_report_csv(&metrics));
            } else {
                print!("{}", render_report_text(&metrics));
            }
        }
        Command::GenWorld { config, out, set } => {
            let cfg = load_config(config.as_deref(), &set).context("loading config")?;
            let world = gen_world(&cfg.world, &out).context("generating world")?;
            println!(
                "wrote {} facts and {} queries to {}",
                world.kb.len(),
                world.queries.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
