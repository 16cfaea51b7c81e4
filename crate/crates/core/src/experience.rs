//! Contrastive experience memory: episodes are categorized by total reward,
//! summarized into compact text, distilled into three categories of prompt
//! guidance (success strategies, pitfalls, reasoning guidelines), and kept in
//! a bounded bank together with a FIFO pool of high-reward exemplars.

use std::collections::VecDeque;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::{RewardBreakdown, RewardConfig};
use crate::types::{Decision, Trajectory};

/// Category headers, in prompt order.
pub const CATEGORY_HEADERS: [&str; 3] = [
    "Success Strategies",
    "Pitfalls to Avoid",
    "Reasoning Guidelines",
];

/// Compact textual account of one scored episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub query_id: String,
    pub trajectory_digest: String,
    pub f1: f64,
    pub reward: f64,
    pub explanation: String,
}

/// One guideline batch produced by a summarizer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GuidelineSet {
    pub success_strategies: Vec<String>,
    pub pitfalls_to_avoid: Vec<String>,
    pub reasoning_guidelines: Vec<String>,
}

impl GuidelineSet {
    pub fn is_empty(&self) -> bool {
        self.success_strategies.is_empty()
            && self.pitfalls_to_avoid.is_empty()
            && self.reasoning_guidelines.is_empty()
    }
}

/// Bounded per-category guideline store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceBank {
    pub success_strategies: Vec<String>,
    pub pitfalls_to_avoid: Vec<String>,
    pub reasoning_guidelines: Vec<String>,
    pub last_update_step: u32,
    pub cadence: u32,
}

impl ExperienceBank {
    pub fn new(cadence: u32) -> Self {
        ExperienceBank {
            success_strategies: Vec::new(),
            pitfalls_to_avoid: Vec::new(),
            reasoning_guidelines: Vec::new(),
            last_update_step: 0,
            cadence,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.success_strategies.is_empty()
            && self.pitfalls_to_avoid.is_empty()
            && self.reasoning_guidelines.is_empty()
    }

    pub fn total_entries(&self) -> usize {
        self.success_strategies.len()
            + self.pitfalls_to_avoid.len()
            + self.reasoning_guidelines.len()
    }

    /// Merges a guideline batch: duplicates are skipped, new entries append,
    /// and the oldest entries are dropped to keep each category within
    /// `max_per_category`.
    pub fn apply(&mut self, new: &GuidelineSet, max_per_category: usize) {
        for (target, incoming) in [
            (&mut self.success_strategies, &new.success_strategies),
            (&mut self.pitfalls_to_avoid, &new.pitfalls_to_avoid),
            (&mut self.reasoning_guidelines, &new.reasoning_guidelines),
        ] {
            for g in incoming {
                if !target.contains(g) {
                    target.push(g.clone());
                }
            }
            while target.len() > max_per_category {
                target.remove(0);
            }
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), crate::jsonl::LogError> {
        crate::jsonl::write_jsonl(path, std::slice::from_ref(self))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, crate::jsonl::LogError> {
        let mut items: Vec<ExperienceBank> = crate::jsonl::read_jsonl(path)?;
        items.pop().ok_or_else(|| crate::jsonl::LogError::Io {
            path: path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, "empty bank checkpoint"),
        })
    }
}

/// FIFO pool of high-reward exemplar digests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotPool {
    entries: VecDeque<FewShotEntry>,
    pub capacity: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotEntry {
    pub digest: String,
    pub reward: f64,
}

impl FewShotPool {
    pub fn new(capacity: usize, threshold: f64) -> Self {
        FewShotPool { entries: VecDeque::new(), capacity, threshold }
    }

    /// Admits the digest only if its reward clears the threshold; at capacity
    /// the oldest entry is evicted.
    pub fn offer(&mut self, digest: String, reward: f64) {
        if reward < self.threshold {
            return;
        }
        self.entries.push_back(FewShotEntry { digest, reward });
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &FewShotEntry> {
        self.entries.iter()
    }

    /// Uniform draw; `None` on an empty pool.
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> Option<&FewShotEntry> {
        if self.entries.is_empty() {
            return None;
        }
        let idx = rng.gen_range(0..self.entries.len());
        self.entries.get(idx)
    }
}

/// Indices of a reward-categorized batch. Good demands a perfect total of 1,
/// bad is anything below `theta_r_bad` (format violations included), the rest
/// is neutral.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Categorized {
    pub good: Vec<usize>,
    pub bad: Vec<usize>,
    pub neutral: Vec<usize>,
}

/// Partitions scored trajectories by total reward.
pub fn categorize(breakdowns: &[RewardBreakdown], cfg: &RewardConfig) -> Categorized {
    let mut out = Categorized::default();
    for (i, b) in breakdowns.iter().enumerate() {
        if b.total == 1.0 {
            out.good.push(i);
        } else if b.total < cfg.theta_r_bad {
            out.bad.push(i);
        } else {
            out.neutral.push(i);
        }
    }
    out
}

/// Renders the step sequence as a compact digest, e.g.
/// `search[belara led-by] -> answer[morona]`, with a truncation marker when
/// the episode ended without an answer.
pub fn trajectory_digest(trajectory: &Trajectory) -> String {
    let mut parts: Vec<String> = trajectory
        .steps
        .iter()
        .map(|s| match s.decision {
            Decision::Search => format!("search[{}]", s.search_query.as_deref().unwrap_or("")),
            Decision::Continue => "continue".to_string(),
            Decision::Answer => format!(
                "answer[{}]",
                trajectory.final_answer.as_deref().unwrap_or("")
            ),
        })
        .collect();
    if trajectory.final_answer.is_none() {
        parts.push("(truncated)".to_string());
    }
    if parts.is_empty() {
        parts.push("(no steps)".to_string());
    }
    parts.join(" -> ")
}

/// Builds the textual summary of a scored episode. The explanation names
/// every reward component with its value so downstream summarizers (and
/// humans) can see exactly why the trajectory scored as it did.
pub fn summarize(
    trajectory: &Trajectory,
    breakdown: &RewardBreakdown,
    baseline: Option<u32>,
    cfg: &RewardConfig,
) -> TrajectorySummary {
    let m = trajectory.tool_calls();
    let baseline_text = match baseline {
        Some(n) => format!("baseline n={n}"),
        None => "no baseline".to_string(),
    };
    let explanation = if breakdown.format_score < 0 {
        format!(
            "format violation, total={:.2}; F1={:.2}, EM={}, tool calls m={}, {}, Tool={:.2}",
            breakdown.total, breakdown.f1, breakdown.em, m, baseline_text, breakdown.tool_score
        )
    } else {
        format!(
            "F1={:.2}, EM={}, format ok, tool calls m={}, {}, Tool={:.2}, total={:.2} ({:.2}*F1 + {:.2}*Tool)",
            breakdown.f1,
            breakdown.em,
            m,
            baseline_text,
            breakdown.tool_score,
            breakdown.total,
            cfg.w_alpha,
            cfg.w_beta
        )
    };
    TrajectorySummary {
        query_id: trajectory.query_id.clone(),
        trajectory_digest: trajectory_digest(trajectory),
        f1: breakdown.f1,
        reward: breakdown.total,
        explanation,
    }
}

#[derive(Debug, Error)]
pub enum SummarizerError {
    #[error("summarizer endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("summarizer returned an unusable response: {0}")]
    BadResponse(String),
}

impl SummarizerError {
    /// Transport-level failures are worth retrying at the next cadence point;
    /// a structurally bad reply is not.
    pub fn retryable(&self) -> bool {
        matches!(self, SummarizerError::Unreachable(_))
    }
}

/// Turns contrasting good/bad episode summaries into guideline batches.
pub trait Summarizer {
    fn generate(
        &self,
        good: &[TrajectorySummary],
        bad: &[TrajectorySummary],
    ) -> Result<GuidelineSet, SummarizerError>;
}

/// Distills guidelines from good vs. bad summaries via the given summarizer.
/// At least one side must be non-empty.
pub fn generate_experience(
    good: &[TrajectorySummary],
    bad: &[TrajectorySummary],
    summarizer: &dyn Summarizer,
) -> Result<GuidelineSet, SummarizerError> {
    debug_assert!(!good.is_empty() || !bad.is_empty());
    summarizer.generate(good, bad)
}

/// Aggregate statistics of one summary set, recovered from the digest and
/// explanation templates.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SetStats {
    mean_tool_calls: f64,
    mean_f1: f64,
    format_fail_rate: f64,
    truncated_rate: f64,
    search_then_answer_rate: f64,
}

fn set_stats(set: &[TrajectorySummary]) -> Option<SetStats> {
    if set.is_empty() {
        return None;
    }
    let n = set.len() as f64;
    let mut tool_calls = 0.0;
    let mut f1 = 0.0;
    let mut format_fails = 0.0;
    let mut truncated = 0.0;
    let mut search_then_answer = 0.0;
    for s in set {
        let tc = s.trajectory_digest.matches("search[").count();
        tool_calls += tc as f64;
        f1 += s.f1;
        if s.explanation.contains("format violation") {
            format_fails += 1.0;
        }
        if s.trajectory_digest.contains("(truncated)") {
            truncated += 1.0;
        } else if tc >= 1 && s.trajectory_digest.contains("answer[") {
            search_then_answer += 1.0;
        }
    }
    Some(SetStats {
        mean_tool_calls: tool_calls / n,
        mean_f1: f1 / n,
        format_fail_rate: format_fails / n,
        truncated_rate: truncated / n,
        search_then_answer_rate: search_then_answer / n,
    })
}

/// Deterministic summarizer: compares aggregate statistics of the good and
/// bad sets and emits a fixed template guideline for each contrast that
/// clears its margin. Statistically identical sets produce an empty batch.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedSummarizer;

const TC_MARGIN: f64 = 0.25;
const RATE_MARGIN: f64 = 0.1;
const F1_MARGIN: f64 = 0.2;

impl Summarizer for RuleBasedSummarizer {
    fn generate(
        &self,
        good: &[TrajectorySummary],
        bad: &[TrajectorySummary],
    ) -> Result<GuidelineSet, SummarizerError> {
        let gs = set_stats(good);
        let bs = set_stats(bad);
        let mut out = GuidelineSet::default();

        if let (Some(g), Some(b)) = (gs, bs) {
            if g.mean_tool_calls + TC_MARGIN < b.mean_tool_calls {
                out.success_strategies.push(format!(
                    "Use minimal function calls to directly answer the question (at most {} search calls).",
                    g.mean_tool_calls.ceil() as u32
                ));
            }
            if g.search_then_answer_rate > b.search_then_answer_rate + RATE_MARGIN {
                out.success_strategies.push(
                    "Search for the missing fact first, then answer as soon as the final entity is found."
                        .to_string(),
                );
            }
            if g.mean_f1 > b.mean_f1 + F1_MARGIN {
                out.reasoning_guidelines.push(
                    "Check that a retrieved fact states the exact relation asked before trusting its object."
                        .to_string(),
                );
                if b.mean_tool_calls > 0.2 {
                    out.reasoning_guidelines.push(
                        "You should always search for specific details after identifying key subjects."
                            .to_string(),
                    );
                }
            }
        }
        if let Some(b) = bs {
            let good_fail = gs.map(|g| g.format_fail_rate).unwrap_or(0.0);
            if b.format_fail_rate >= 0.2 && b.format_fail_rate > good_fail + RATE_MARGIN {
                out.pitfalls_to_avoid.push(
                    "Always use <think> pattern: wrap reasoning in <think>...</think> and end with exactly one <answer> or <tool_call> block."
                        .to_string(),
                );
            }
            let good_trunc = gs.map(|g| g.truncated_rate).unwrap_or(0.0);
            if b.truncated_rate > good_trunc + RATE_MARGIN {
                out.pitfalls_to_avoid.push(
                    "Do not run past the step budget: give the answer once the chain of facts is resolved."
                        .to_string(),
                );
            }
        }
        Ok(out)
    }
}

/// Wire request of the remote summarizer call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizeRequest {
    pub good_summaries: Vec<String>,
    pub bad_summaries: Vec<String>,
    pub categories: Vec<String>,
}

fn render_summary(s: &TrajectorySummary) -> String {
    format!("query {}: {} :: {}", s.query_id, s.trajectory_digest, s.explanation)
}

/// Remote summarizer: a single JSON request/response call against a
/// configurable endpoint. The response body must carry the three category
/// lists; transport failures are retryable.
pub struct RemoteSummarizer {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl RemoteSummarizer {
    pub fn new(endpoint: String, timeout: Duration) -> Result<Self, SummarizerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| SummarizerError::Unreachable(e.to_string()))?;
        Ok(RemoteSummarizer { endpoint, client })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn build_request(
        good: &[TrajectorySummary],
        bad: &[TrajectorySummary],
    ) -> SummarizeRequest {
        SummarizeRequest {
            good_summaries: good.iter().map(render_summary).collect(),
            bad_summaries: bad.iter().map(render_summary).collect(),
            categories: CATEGORY_HEADERS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Summarizer for RemoteSummarizer {
    fn generate(
        &self,
        good: &[TrajectorySummary],
        bad: &[TrajectorySummary],
    ) -> Result<GuidelineSet, SummarizerError> {
        let request = Self::build_request(good, bad);
        let response = self
            .client
            .post(&self.endpoint)
            .json(&request)
            .send()
            .map_err(|e| SummarizerError::Unreachable(e.to_string()))?;
        if !response.status().is_success() {
            return Err(SummarizerError::Unreachable(format!(
                "endpoint returned status {}",
                response.status()
            )));
        }
        response
            .json::<GuidelineSet>()
            .map_err(|e| SummarizerError::BadResponse(e.to_string()))
    }
}

/// Applies the cadence rule: on update steps (step divisible by the bank's
/// cadence) guidelines are regenerated from the given sets and merged;
/// otherwise the bank is left untouched. Returns whether an update happened.
/// Summarizer failures leave the bank unchanged and bubble up so the caller
/// can log the skip.
pub fn maybe_update(
    bank: &mut ExperienceBank,
    step: u32,
    good: &[TrajectorySummary],
    bad: &[TrajectorySummary],
    summarizer: &dyn Summarizer,
    max_per_category: usize,
) -> Result<bool, SummarizerError> {
    if bank.cadence == 0 || step % bank.cadence != 0 {
        return Ok(false);
    }
    if good.is_empty() && bad.is_empty() {
        return Ok(false);
    }
    let guidelines = generate_experience(good, bad, summarizer)?;
    bank.apply(&guidelines, max_per_category);
    bank.last_update_step = step;
    Ok(true)
}

/// Assembles the full prompt: instructions, the three experience sections in
/// fixed order (empty categories omitted), an optional exemplar digest under
/// an `Example` header, then the question.
pub fn assemble_prompt(
    instructions: &str,
    bank: Option<&ExperienceBank>,
    few_shot: Option<&str>,
    query_text: &str,
) -> String {
    let mut out = String::from(instructions);
    if let Some(bank) = bank {
        for (header, items) in [
            (CATEGORY_HEADERS[0], &bank.success_strategies),
            (CATEGORY_HEADERS[1], &bank.pitfalls_to_avoid),
            (CATEGORY_HEADERS[2], &bank.reasoning_guidelines),
        ] {
            if items.is_empty() {
                continue;
            }
            out.push_str("\n\n");
            out.push_str(header);
            out.push_str(":\n");
            for item in items {
                out.push_str("- ");
                out.push_str(item);
                out.push('\n');
            }
        }
    }
    if let Some(example) = few_shot {
        out.push_str("\n\nExample:\n");
        out.push_str(example);
        out.push('\n');
    }
    out.push_str("\n\nQuestion: ");
    out.push_str(query_text);
    out
}
