//! End-to-end orchestration: trains and evaluates a configuration, writes
//! every artifact of a run directory, and drives the ablation matrix over a
//! shared world. Wall-clock timing is isolated in its own file so that rerun
//! directories can be compared byte for byte.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::config::{ConfigError, RunConfig, SummarizerConfig, SummarizerKind};
use crate::env::{generate_world, save_world, World, WorldConfig, WorldError};
use crate::experience::{RemoteSummarizer, RuleBasedSummarizer, Summarizer, SummarizerError};
use crate::jsonl::{write_jsonl, LogError};
use crate::report::{
    aggregate, render_ablation_csv, render_ablation_summary_csv, render_ablation_text,
    render_report_csv, render_report_text, EpisodeOutcome, Metrics, VariantOutcome,
};
use crate::trainer::{evaluate, train, TrainError, TrainReport};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize artifact: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error(transparent)]
    Summarizer(#[from] SummarizerError),
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| RunError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Instantiates the configured guideline summarizer.
pub fn build_summarizer(cfg: &SummarizerConfig) -> Result<Box<dyn Summarizer>, RunError> {
    match cfg.kind {
        SummarizerKind::RuleBased => Ok(Box::new(RuleBasedSummarizer)),
        SummarizerKind::Remote => {
            let endpoint = cfg.endpoint.clone().ok_or_else(|| {
                RunError::Config(ConfigError::Invalid(
                    "summarizer.kind = \"remote\" requires summarizer.endpoint".into(),
                ))
            })?;
            let remote = RemoteSummarizer::new(endpoint, Duration::from_secs(cfg.timeout_secs))?;
            Ok(Box::new(remote))
        }
    }
}

/// Outputs of one full run.
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub metrics: Metrics,
    pub eval_outcomes: Vec<EpisodeOutcome>,
    pub train_report: TrainReport,
}

/// Trains on a freshly generated world, evaluates greedily, and writes the
/// run directory: world, config snapshot, per-iteration metrics, train and
/// eval trajectories, eval records, learned policy/bank/baselines,
/// checkpoints, the report in CSV and text form, and timing.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<RunArtifacts, RunError> {
    let started = Instant::now();
    cfg.validate()?;
    let world = generate_world(&cfg.world)?;
    let summarizer = build_summarizer(&cfg.summarizer)?;
    let report = train(&world, &cfg.train, &cfg.reward, summarizer.as_ref())?;
    let bank_for_eval = if cfg.train.experience_in_inference {
        Some(&report.bank)
    } else {
        None
    };
    let (eval_outcomes, eval_trajectories) = evaluate(
        &world,
        &report.policy,
        bank_for_eval,
        Some(&report.baselines),
        &cfg.reward,
        &cfg.train,
    );
    let metrics = aggregate(&eval_outcomes);

    std::fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    save_world(&world, &out_dir.join("world.jsonl"))?;
    write_file(
        &out_dir.join("config.json"),
        &(serde_json::to_string_pretty(cfg)? + "\n"),
    )?;
    write_jsonl(&out_dir.join("metrics.jsonl"), &report.metrics)?;
    write_jsonl(&out_dir.join("train_trajectories.jsonl"), &report.train_trajectories)?;
    write_jsonl(&out_dir.join("eval_trajectories.jsonl"), &eval_trajectories)?;
    write_jsonl(&out_dir.join("eval_records.jsonl"), &eval_outcomes)?;
    write_file(
        &out_dir.join("policy.json"),
        &(serde_json::to_string_pretty(&report.policy)? + "\n"),
    )?;
    report.bank.save(&out_dir.join("bank.jsonl"))?;
    report.baselines.save(&out_dir.join("baselines.jsonl"))?;
    for snapshot in &report.snapshots {
        write_file(
            &out_dir.join(format!("checkpoints/iter_{:04}.json", snapshot.iteration)),
            &(serde_json::to_string_pretty(snapshot)? + "\n"),
        )?;
    }
    write_file(&out_dir.join("report.csv"), &render_report_csv(&metrics))?;
    write_file(&out_dir.join("report.txt"), &render_report_text(&metrics))?;
    // The only wall-clock-dependent artifact, kept separate on purpose.
    write_file(
        &out_dir.join("timing.txt"),
        &format!("wall_seconds={:.3}\n", started.elapsed().as_secs_f64()),
    )?;

    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        metrics,
        eval_outcomes,
        train_report: report,
    })
}

/// Ablation variants, in fixed row order.
pub const ABLATION_VARIANTS: [&str; 6] = [
    "full",
    "no-experience",
    "no-few-shot",
    "static-reward",
    "no-experience-few-shot",
    "plain-grpo",
];

/// Derives a variant's config from the base config. Unknown names panic:
/// the variant list is a compile-time constant.
pub fn variant_config(base: &RunConfig, variant: &str) -> RunConfig {
    let mut cfg = base.clone();
    match variant {
        "full" => {}
        "no-experience" => {
            cfg.train.experience_enabled = false;
        }
        "no-few-shot" => {
            cfg.train.few_shot_enabled = false;
        }
        "static-reward" => {
            // Answer quality keeps its weight; only the tool-efficiency term
            // is removed.
            cfg.reward.w_beta = 0.0;
        }
        "no-experience-few-shot" => {
            cfg.train.experience_enabled = false;
            cfg.train.few_shot_enabled = false;
        }
        "plain-grpo" => {
            cfg.train.experience_enabled = false;
            cfg.train.few_shot_enabled = false;
            cfg.reward.w_beta = 0.0;
        }
        other => panic!("unknown ablation variant {other}"),
    }
    cfg
}

/// Outputs of one ablation sweep.
pub struct AblationArtifacts {
    pub out_dir: PathBuf,
    /// One row per (variant, seed), variants in [`ABLATION_VARIANTS`] order.
    pub rows: Vec<VariantOutcome>,
    /// Per-variant metrics over the pooled outcomes of all seeds.
    pub summary: Vec<(String, Metrics)>,
}

/// Trains and evaluates every ablation variant on one shared world, once per
/// configured seed, and writes the per-seed table, the pooled summary, and a
/// human-readable rendering.
pub fn ablate(cfg: &RunConfig, out_dir: &Path) -> Result<AblationArtifacts, RunError> {
    let started = Instant::now();
    cfg.validate()?;
    let world = generate_world(&cfg.world)?;
    let summarizer = build_summarizer(&cfg.summarizer)?;

    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for variant in ABLATION_VARIANTS {
        let vcfg = variant_config(cfg, variant);
        let mut pooled: Vec<EpisodeOutcome> = Vec::new();
        for &seed in &cfg.seeds {
            let mut tcfg = vcfg.train.clone();
            tcfg.seed = seed;
            let report = train(&world, &tcfg, &vcfg.reward, summarizer.as_ref())?;
            let bank_for_eval = if tcfg.experience_in_inference {
                Some(&report.bank)
            } else {
                None
            };
            let (outcomes, _) = evaluate(
                &world,
                &report.policy,
                bank_for_eval,
                Some(&report.baselines),
                &vcfg.reward,
                &tcfg,
            );
            rows.push(VariantOutcome {
                variant: variant.to_string(),
                seed,
                metrics: aggregate(&outcomes),
            });
            pooled.extend(outcomes);
        }
        summary.push((variant.to_string(), aggregate(&pooled)));
    }

    std::fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    save_world(&world, &out_dir.join("world.jsonl"))?;
    write_file(
        &out_dir.join("config.json"),
        &(serde_json::to_string_pretty(cfg)? + "\n"),
    )?;
    write_file(&out_dir.join("ablation.csv"), &render_ablation_csv(&rows))?;
    write_file(
        &out_dir.join("ablation_summary.csv"),
        &render_ablation_summary_csv(&summary),
    )?;
    write_file(&out_dir.join("ablation.txt"), &render_ablation_text(&summary))?;
    write_file(
        &out_dir.join("timing.txt"),
        &format!("wall_seconds={:.3}\n", started.elapsed().as_secs_f64()),
    )?;

    Ok(AblationArtifacts { out_dir: out_dir.to_path_buf(), rows, summary })
}

/// Learned state reloaded from a finished run directory.
pub struct LoadedRun {
    pub config: RunConfig,
    pub world: World,
    pub policy: crate::policy::PolicyState,
    pub bank: crate::experience::ExperienceBank,
    pub baselines: crate::reward::BaselineTable,
}

/// Reloads the pieces of a run directory needed to evaluate its policy again.
pub fn load_run_dir(dir: &Path) -> Result<LoadedRun, RunError> {
    let read = |name: &str| -> Result<String, RunError> {
        std::fs::read_to_string(dir.join(name)).map_err(|source| RunError::Io {
            path: dir.join(name).display().to_string(),
            source,
        })
    };
    let config: RunConfig = serde_json::from_str(&read("config.json")?)?;
    let world = crate::env::load_world(&dir.join("world.jsonl"))?;
    let policy: crate::policy::PolicyState = serde_json::from_str(&read("policy.json")?)?;
    let bank = crate::experience::ExperienceBank::load(&dir.join("bank.jsonl"))?;
    let baselines = crate::reward::BaselineTable::load(&dir.join("baselines.jsonl"))?;
    Ok(LoadedRun { config, world, policy, bank, baselines })
}

/// Generates a world from the config and writes it as one record file.
pub fn gen_world(cfg: &WorldConfig, path: &Path) -> Result<World, RunError> {
    let world = generate_world(cfg)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| RunError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    save_world(&world, path)?;
    Ok(world)
}
