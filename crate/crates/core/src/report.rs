//! Evaluation outcomes, aggregate metrics, and report rendering. The same
//! aggregation path serves the live runner and the offline `analyze` command
//! so a re-analysis of a run directory reproduces its report byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::env::{load_world, WorldError};
use crate::jsonl::{read_jsonl, LogError};
use crate::reward::{overall_reward, BaselineTable, RewardConfig};
use crate::types::Trajectory;

/// Scored result of one evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub query_id: String,
    pub em: u8,
    pub f1: f64,
    pub tool_calls: u32,
    pub total: f64,
}

/// Re-scores a finished trajectory into an evaluation outcome.
pub fn score_trajectory(
    trajectory: &Trajectory,
    gold_answers: &[String],
    baseline: Option<u32>,
    cfg: &RewardConfig,
) -> EpisodeOutcome {
    let b = overall_reward(trajectory, gold_answers, baseline, cfg);
    EpisodeOutcome {
        query_id: trajectory.query_id.clone(),
        em: b.em,
        f1: b.f1,
        tool_calls: trajectory.tool_calls() as u32,
        total: b.total,
    }
}

/// Aggregate metrics over a set of evaluation outcomes. The tool-call means
/// are additionally split by exact-match success; either side is `None` when
/// its group is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub em: f64,
    pub f1: f64,
    pub mean_tool_calls: f64,
    pub mean_tc_em1: Option<f64>,
    pub mean_tc_em0: Option<f64>,
    pub delta_pct: Option<f64>,
    pub mean_reward: f64,
}

/// Relative tool-call saving of successful episodes over failed ones, in
/// percent: `100 * (tc_em0 - tc_em1) / tc_em0`. Undefined when the failed
/// group averages zero tool calls.
pub fn delta_pct(tc_em0: f64, tc_em1: f64) -> Option<f64> {
    if tc_em0 == 0.0 {
        None
    } else {
        Some(100.0 * (tc_em0 - tc_em1) / tc_em0)
    }
}

pub fn aggregate(outcomes: &[EpisodeOutcome]) -> Metrics {
    let n = outcomes.len();
    if n == 0 {
        return Metrics {
            n: 0,
            em: 0.0,
            f1: 0.0,
            mean_tool_calls: 0.0,
            mean_tc_em1: None,
            mean_tc_em0: None,
            delta_pct: None,
            mean_reward: 0.0,
        };
    }
    let nf = n as f64;
    let em = outcomes.iter().map(|o| f64::from(o.em)).sum::<f64>() / nf;
    let f1 = outcomes.iter().map(|o| o.f1).sum::<f64>() / nf;
    let mean_tool_calls = outcomes.iter().map(|o| f64::from(o.tool_calls)).sum::<f64>() / nf;
    let mean_reward = outcomes.iter().map(|o| o.total).sum::<f64>() / nf;
    let group_mean = |em_value: u8| -> Option<f64> {
        let group: Vec<f64> = outcomes
            .iter()
            .filter(|o| o.em == em_value)
            .map(|o| f64::from(o.tool_calls))
            .collect();
        if group.is_empty() {
            None
        } else {
            Some(group.iter().sum::<f64>() / group.len() as f64)
        }
    };
    let mean_tc_em1 = group_mean(1);
    let mean_tc_em0 = group_mean(0);
    let delta = match (mean_tc_em0, mean_tc_em1) {
        (Some(e0), Some(e1)) => delta_pct(e0, e1),
        _ => None,
    };
    Metrics {
        n,
        em,
        f1,
        mean_tool_calls,
        mean_tc_em1,
        mean_tc_em0,
        delta_pct: delta,
        mean_reward,
    }
}

fn opt6(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.6}"),
        None => String::new(),
    }
}

/// Single-run report, one `metric,value` row per line.
pub fn render_report_csv(m: &Metrics) -> String {
    let mut s = String::from("metric,value\n");
    s.push_str(&format!("n,{}\n", m.n));
    s.push_str(&format!("em,{:.6}\n", m.em));
    s.push_str(&format!("f1,{:.6}\n", m.f1));
    s.push_str(&format!("mean_tool_calls,{:.6}\n", m.mean_tool_calls));
    s.push_str(&format!("mean_tc_em1,{}\n", opt6(m.mean_tc_em1)));
    s.push_str(&format!("mean_tc_em0,{}\n", opt6(m.mean_tc_em0)));
    s.push_str(&format!("delta_pct,{}\n", opt6(m.delta_pct)));
    s.push_str(&format!("mean_reward,{:.6}\n", m.mean_reward));
    s
}

fn opt_text(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.4}"),
        None => "n/a".to_string(),
    }
}

/// Human-readable single-run report.
pub fn render_report_text(m: &Metrics) -> String {
    let mut s = String::new();
    s.push_str(&format!("episodes:                 {}\n", m.n));
    s.push_str(&format!("exact-match rate:         {:.4}\n", m.em));
    s.push_str(&format!("answer F1:                {:.4}\n", m.f1));
    s.push_str(&format!("mean tool calls:          {:.4}\n", m.mean_tool_calls));
    s.push_str(&format!("mean tool calls (EM=1):   {}\n", opt_text(m.mean_tc_em1)));
    s.push_str(&format!("mean tool calls (EM=0):   {}\n", opt_text(m.mean_tc_em0)));
    s.push_str(&format!("tool-call saving (pct):   {}\n", opt_text(m.delta_pct)));
    s.push_str(&format!("mean total reward:        {:.4}\n", m.mean_reward));
    s
}

/// One ablation measurement: a variant trained and evaluated with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub variant: String,
    pub seed: u64,
    pub metrics: Metrics,
}

const ABLATION_HEADER: &str =
    "variant,seed,n,em,f1,mean_tool_calls,mean_tc_em1,mean_tc_em0,delta_pct,mean_reward\n";

fn metrics_row(m: &Metrics) -> String {
    format!(
        "{},{:.6},{:.6},{:.6},{},{},{},{:.6}",
        m.n,
        m.em,
        m.f1,
        m.mean_tool_calls,
        opt6(m.mean_tc_em1),
        opt6(m.mean_tc_em0),
        opt6(m.delta_pct),
        m.mean_reward
    )
}

/// Per-seed ablation rows, in the given order.
pub fn render_ablation_csv(rows: &[VariantOutcome]) -> String {
    let mut s = String::from(ABLATION_HEADER);
    for row in rows {
        s.push_str(&format!("{},{},{}\n", row.variant, row.seed, metrics_row(&row.metrics)));
    }
    s
}

/// Cross-seed summary: for each variant the outcomes of all its seeds are
/// pooled and aggregated once.
pub fn render_ablation_summary_csv(summary: &[(String, Metrics)]) -> String {
    let mut s = String::from(
        "variant,n,em,f1,mean_tool_calls,mean_tc_em1,mean_tc_em0,delta_pct,mean_reward\n",
    );
    for (variant, m) in summary {
        s.push_str(&format!("{},{}\n", variant, metrics_row(m)));
    }
    s
}

/// Human-readable ablation summary table.
pub fn render_ablation_text(summary: &[(String, Metrics)]) -> String {
    let mut s = format!(
        "{:<26} {:>8} {:>8} {:>12} {:>10}\n",
        "variant", "em", "f1", "tool_calls", "delta_pct"
    );
    for (variant, m) in summary {
        s.push_str(&format!(
            "{:<26} {:>8.4} {:>8.4} {:>12.4} {:>10}\n",
            variant,
            m.em,
            m.f1,
            m.mean_tool_calls,
            opt_text(m.delta_pct),
        ));
    }
    s
}

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("run directory is missing {0}")]
    MissingFile(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("failed to read config snapshot: {0}")]
    Config(String),
    #[error("trajectory references unknown query id {0}")]
    UnknownQuery(String),
}

/// Re-derives the evaluation report of a finished run directory from its
/// stored world, config snapshot, baseline table, and evaluation
/// trajectories. The result matches the report the run itself wrote.
pub fn analyze_run_dir(dir: &Path) -> Result<Metrics, AnalyzeError> {
    let outcomes = rescore_run_dir(dir)?;
    Ok(aggregate(&outcomes))
}

/// The per-episode re-scoring behind [`analyze_run_dir`].
pub fn rescore_run_dir(dir: &Path) -> Result<Vec<EpisodeOutcome>, AnalyzeError> {
    for required in ["world.jsonl", "eval_trajectories.jsonl", "config.json"] {
        if !dir.join(required).exists() {
            return Err(AnalyzeError::MissingFile(required.to_string()));
        }
    }
    let world = load_world(&dir.join("world.jsonl"))?;
    let trajectories: Vec<Trajectory> = read_jsonl(&dir.join("eval_trajectories.jsonl"))?;
    let config_text = std::fs::read_to_string(dir.join("config.json"))
        .map_err(|e| AnalyzeError::Config(e.to_string()))?;
    let config: RunConfig =
        serde_json::from_str(&config_text).map_err(|e| AnalyzeError::Config(e.to_string()))?;
    let baselines = if dir.join("baselines.jsonl").exists() {
        BaselineTable::load(&dir.join("baselines.jsonl"))?
    } else {
        BaselineTable::new()
    };

    let by_id: std::collections::HashMap<&str, &crate::types::Query> =
        world.queries.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut outcomes = Vec::with_capacity(trajectories.len());
    for t in &trajectories {
        let query = by_id
            .get(t.query_id.as_str())
            .ok_or_else(|| AnalyzeError::UnknownQuery(t.query_id.clone()))?;
        outcomes.push(score_trajectory(
            t,
            &query.gold_answers,
            baselines.get(&t.query_id),
            &config.reward,
        ));
    }
    Ok(outcomes)
}
