//! Reward shaping: token-level answer quality, a strict format gate, and an
//! adaptive tool-frugality term scored against per-query baselines of the
//! fewest tool calls seen to succeed.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::types::{parse_response, Trajectory};

/// Reward weights and thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Decay rate of the tool reward per extra call beyond the baseline.
    pub lambda: f64,
    /// Answer-quality threshold a trajectory must reach to earn tool reward
    /// and to update the baseline table.
    pub theta_t: f64,
    /// Weight of the answer-quality term in the total.
    pub w_alpha: f64,
    /// Weight of the tool-frugality term in the total.
    pub w_beta: f64,
    /// Total-reward threshold below which a trajectory is categorized as bad.
    pub theta_r_bad: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            lambda: 0.75,
            theta_t: 0.8,
            w_alpha: 0.5,
            w_beta: 0.5,
            theta_r_bad: 0.3,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("reward.lambda", self.lambda),
            ("reward.theta_t", self.theta_t),
            ("reward.w_alpha", self.w_alpha),
            ("reward.w_beta", self.w_beta),
            ("reward.theta_r_bad", self.theta_r_bad),
        ] {
            if !v.is_finite() {
                return Err(format!("{name} must be finite"));
            }
        }
        if self.lambda < 0.0 {
            return Err("reward.lambda must be non-negative".into());
        }
        if self.w_alpha < 0.0 || self.w_beta < 0.0 {
            return Err("reward weights must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.theta_t) {
            return Err("reward.theta_t must be within [0, 1]".into());
        }
        Ok(())
    }
}

/// Per-trajectory reward decomposition. When the format gate fails the total
/// is -1 regardless of the other components, which are still recorded for
/// diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub f1: f64,
    pub em: u8,
    pub format_score: i8,
    pub tool_score: f64,
    pub total: f64,
}

/// Lowercases, strips ASCII punctuation, and whitespace-tokenizes.
fn base_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    cleaned.split_whitespace().map(|t| t.to_string()).collect()
}

fn drop_articles(tokens: Vec<String>) -> Vec<String> {
    tokens
        .into_iter()
        .filter(|t| !matches!(t.as_str(), "a" | "an" | "the"))
        .collect()
}

fn multiset_overlap(a: &[String], b: &[String]) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in b {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut overlap = 0;
    for t in a {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    overlap
}

/// Token-level F1 of a prediction against the best-matching gold answer.
/// Both sides are lowercased, punctuation-stripped, and whitespace-tokenized;
/// overlap is multiset overlap. Empty predictions score 0.
pub fn token_f1(prediction: &str, golds: &[String]) -> f64 {
    let pred = base_tokens(prediction);
    if pred.is_empty() {
        return 0.0;
    }
    let mut best: f64 = 0.0;
    for gold in golds {
        let gold_tokens = base_tokens(gold);
        if gold_tokens.is_empty() {
            continue;
        }
        let overlap = multiset_overlap(&pred, &gold_tokens);
        if overlap == 0 {
            continue;
        }
        let p = overlap as f64 / pred.len() as f64;
        let r = overlap as f64 / gold_tokens.len() as f64;
        best = best.max(2.0 * p * r / (p + r));
    }
    best
}

/// Exact match under the same normalization as [`token_f1`] plus article
/// stripping ("a", "an", "the") on both sides: 1 iff the normalized
/// prediction equals any normalized gold.
pub fn exact_match(prediction: &str, golds: &[String]) -> u8 {
    let pred = drop_articles(base_tokens(prediction));
    if pred.is_empty() {
        return 0;
    }
    for gold in golds {
        if pred == drop_articles(base_tokens(gold)) {
            return 1;
        }
    }
    0
}

/// Format gate: 0 when the raw emission parses against the tag grammar,
/// otherwise -1.
pub fn format_reward(raw_text: &str) -> i8 {
    if parse_response(raw_text).well_formed {
        0
    } else {
        -1
    }
}

/// Adaptive tool reward: zero unless answer quality reaches `theta_t`; at or
/// under the per-query baseline it is 1; each extra call decays it by
/// `exp(-lambda)`. An absent baseline (query never solved before) scores 1.
pub fn tool_reward(tool_calls: u32, baseline: Option<u32>, f1: f64, cfg: &RewardConfig) -> f64 {
    if f1 < cfg.theta_t {
        return 0.0;
    }
    match baseline {
        None => 1.0,
        Some(n) => {
            let excess = tool_calls.saturating_sub(n) as f64;
            (-cfg.lambda * excess).exp()
        }
    }
}

/// Scores a trajectory: total = -1 on a format violation, otherwise
/// `w_alpha * F1 + w_beta * Tool`. F1/EM/tool components are recorded either
/// way.
pub fn overall_reward(
    trajectory: &Trajectory,
    golds: &[String],
    baseline: Option<u32>,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let prediction = trajectory.final_answer.as_deref().unwrap_or("");
    let f1 = token_f1(prediction, golds);
    let em = exact_match(prediction, golds);
    let format_score = format_reward(&trajectory.raw_text);
    let tool_score = tool_reward(trajectory.tool_calls() as u32, baseline, f1, cfg);
    let total = if format_score < 0 {
        -1.0
    } else {
        cfg.w_alpha * f1 + cfg.w_beta * tool_score
    };
    RewardBreakdown { f1, em, format_score, tool_score, total }
}

/// Per-query record of the fewest tool calls that achieved quality `theta_t`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineTable {
    entries: HashMap<String, u32>,
}

/// Checkpoint line format for the baseline table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub query_id: String,
    pub n: u32,
}

impl BaselineTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records an observation: only qualifying trajectories (f1 >= theta_t)
    /// update the entry, and entries only ever decrease.
    pub fn observe(&mut self, query_id: &str, tool_calls: u32, f1: f64, cfg: &RewardConfig) {
        if f1 < cfg.theta_t {
            return;
        }
        self.entries
            .entry(query_id.to_string())
            .and_modify(|n| *n = (*n).min(tool_calls))
            .or_insert(tool_calls);
    }

    pub fn get(&self, query_id: &str) -> Option<u32> {
        self.entries.get(query_id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by query id, the on-disk checkpoint order.
    pub fn to_entries(&self) -> Vec<BaselineEntry> {
        let mut rows: Vec<BaselineEntry> = self
            .entries
            .iter()
            .map(|(query_id, &n)| BaselineEntry { query_id: query_id.clone(), n })
            .collect();
        rows.sort_by(|a, b| a.query_id.cmp(&b.query_id));
        rows
    }

    pub fn from_entries(rows: Vec<BaselineEntry>) -> Self {
        let mut table = BaselineTable::new();
        for row in rows {
            table
                .entries
                .entry(row.query_id)
                .and_modify(|n| *n = (*n).min(row.n))
                .or_insert(row.n);
        }
        table
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), crate::jsonl::LogError> {
        crate::jsonl::write_jsonl(path, &self.to_entries())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, crate::jsonl::LogError> {
        Ok(Self::from_entries(crate::jsonl::read_jsonl(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Decision, Step};
    use proptest::prelude::*;

    fn answer_trajectory(answer: Option<&str>, raw: &str, searches: usize) -> Trajectory {
        let mut steps: Vec<Step> = (0..searches)
            .map(|i| Step {
                reasoning_text: format!("search {i}"),
                decision: Decision::Search,
                search_query: Some(format!("term{i}")),
                search_result: Some(crate::env::SearchResult { hits: vec![] }),
            })
            .collect();
        if answer.is_some() {
            steps.push(Step {
                reasoning_text: "answering".into(),
                decision: Decision::Answer,
                search_query: None,
                search_result: None,
            });
        }
        Trajectory {
            query_id: "q0001".into(),
            steps,
            final_answer: answer.map(|a| a.to_string()),
            raw_text: raw.to_string(),
            token_count: crate::types::count_tokens(raw),
        }
    }

    #[test]
    fn token_f1_partial_overlap() {
        // pred {blue, whale}, gold {the, blue, whale}: P = 2/2, R = 2/3,
        // F1 = 2 * 1 * (2/3) / (1 + 2/3) = 0.8.
        let f1 = token_f1("blue whale", &["the blue whale".to_string()]);
        assert!((f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn token_f1_exact_and_miss() {
        assert_eq!(token_f1("Paris", &["paris".to_string()]), 1.0);
        assert_eq!(token_f1("london", &["paris".to_string()]), 0.0);
        assert_eq!(token_f1("", &["paris".to_string()]), 0.0);
    }

    #[test]
    fn token_f1_takes_best_gold() {
        let golds = vec!["london".to_string(), "blue whale".to_string()];
        assert_eq!(token_f1("blue whale", &golds), 1.0);
    }

    #[test]
    fn token_f1_multiset_overlap_counts_duplicates() {
        // pred [very, very, big], gold [very, big]: overlap counts "very" once.
        // P = 2/3, R = 2/2, F1 = 2*(2/3)/(5/3) = 0.8.
        let f1 = token_f1("very very big", &["very big".to_string()]);
        assert!((f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn exact_match_strips_articles_and_punctuation() {
        assert_eq!(exact_match("the blue whale", &["blue whale".to_string()]), 1);
        assert_eq!(exact_match("Blue Whale!", &["blue whale".to_string()]), 1);
        assert_eq!(exact_match("blue whales", &["blue whale".to_string()]), 0);
        assert_eq!(exact_match("", &["blue whale".to_string()]), 0);
    }

    #[test]
    fn format_reward_gates_on_grammar() {
        assert_eq!(format_reward("<think>r</think><answer>x</answer>"), 0);
        assert_eq!(format_reward("<answer>x</answer>"), -1);
        assert_eq!(format_reward(""), -1);
    }

    #[test]
    fn tool_reward_decays_exponentially_past_baseline() {
        let cfg = RewardConfig::default();
        // One extra call beyond the baseline: exp(-0.75).
        let r = tool_reward(3, Some(2), 0.9, &cfg);
        assert!((r - (-0.75f64).exp()).abs() < 1e-15);
        assert!((r - 0.472366552741015).abs() < 1e-9);
    }

    #[test]
    fn tool_reward_edge_cases() {
        let cfg = RewardConfig::default();
        assert_eq!(tool_reward(2, Some(2), 1.0, &cfg), 1.0); // at baseline
        assert_eq!(tool_reward(1, Some(2), 1.0, &cfg), 1.0); // under baseline
        assert_eq!(tool_reward(5, Some(2), 0.5, &cfg), 0.0); // below theta_t
        assert_eq!(tool_reward(4, None, 1.0, &cfg), 1.0); // no baseline yet
    }

    #[test]
    fn overall_reward_perfect_case() {
        let cfg = RewardConfig::default();
        let t = answer_trajectory(Some("paris"), "<think>r</think><answer>paris</answer>", 1);
        let b = overall_reward(&t, &["paris".to_string()], Some(1), &cfg);
        assert_eq!(b.f1, 1.0);
        assert_eq!(b.em, 1);
        assert_eq!(b.format_score, 0);
        assert_eq!(b.tool_score, 1.0);
        assert_eq!(b.total, 1.0);
    }

    #[test]
    fn overall_reward_format_violation_dominates() {
        let cfg = RewardConfig::default();
        let t = answer_trajectory(Some("paris"), "<answer>paris</answer>", 0);
        let b = overall_reward(&t, &["paris".to_string()], None, &cfg);
        assert_eq!(b.total, -1.0);
        assert_eq!(b.format_score, -1);
        // Components are still recorded for diagnostics.
        assert_eq!(b.f1, 1.0);
        assert_eq!(b.em, 1);
    }

    #[test]
    fn overall_reward_mixes_weighted_terms() {
        let cfg = RewardConfig::default();
        // Nine of the gold's eleven tokens, no extras: P = 1, R = 9/11, F1 = 0.9.
        let gold = "t1 t2 t3 t4 t5 t6 t7 t8 t9 t10 t11".to_string();
        let pred = "t1 t2 t3 t4 t5 t6 t7 t8 t9";
        let raw = format!("<think>r</think><answer>{pred}</answer>");
        let t = answer_trajectory(Some(pred), &raw, 3);
        let b = overall_reward(&t, &[gold], Some(2), &cfg);
        assert!((b.f1 - 0.9).abs() < 1e-12);
        // total = 0.5 * 0.9 + 0.5 * exp(-0.75) = 0.686183...
        assert!((b.total - 0.686183).abs() < 1e-6);
        assert_eq!(b.total, cfg.w_alpha * b.f1 + cfg.w_beta * b.tool_score);
    }

    #[test]
    fn truncated_trajectory_scores_zero_quality() {
        let cfg = RewardConfig::default();
        let t = answer_trajectory(None, "<think>r</think><tool_call>x y</tool_call>", 6);
        let b = overall_reward(&t, &["paris".to_string()], None, &cfg);
        assert_eq!(b.f1, 0.0);
        assert_eq!(b.em, 0);
        assert_eq!(b.format_score, 0);
        assert_eq!(b.tool_score, 0.0);
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn baseline_observe_keeps_minimum_and_ignores_low_quality() {
        let cfg = RewardConfig::default();
        let mut table = BaselineTable::new();
        table.observe("q1", 3, 0.9, &cfg);
        assert_eq!(table.get("q1"), Some(3));
        table.observe("q1", 5, 0.95, &cfg); // worse m, ignored by min
        assert_eq!(table.get("q1"), Some(3));
        table.observe("q1", 1, 0.85, &cfg); // better m
        assert_eq!(table.get("q1"), Some(1));
        table.observe("q1", 0, 0.5, &cfg); // below theta_t, ignored
        assert_eq!(table.get("q1"), Some(1));
        assert_eq!(table.get("q2"), None);
        assert_eq!(table.len(), 1);
    }

    #[test]
    fn baseline_checkpoint_round_trips_sorted() {
        let cfg = RewardConfig::default();
        let mut table = BaselineTable::new();
        table.observe("q0002", 2, 1.0, &cfg);
        table.observe("q0001", 4, 1.0, &cfg);
        let rows = table.to_entries();
        assert_eq!(rows[0].query_id, "q0001");
        assert_eq!(rows[1].query_id, "q0002");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("baselines.jsonl");
        table.save(&path).unwrap();
        let loaded = BaselineTable::load(&path).unwrap();
        assert_eq!(loaded, table);
    }

    proptest! {
        #[test]
        fn token_f1_bounded(pred in "[a-c ]{0,12}", gold in "[a-c ]{0,12}") {
            let f1 = token_f1(&pred, &[gold]);
            prop_assert!((0.0..=1.0).contains(&f1));
        }

        #[test]
        fn tool_reward_non_increasing_in_calls(
            n in 0u32..6,
            m in 0u32..10,
            f1 in 0.8f64..1.0,
        ) {
            let cfg = RewardConfig::default();
            let r1 = tool_reward(m, Some(n), f1, &cfg);
            let r2 = tool_reward(m + 1, Some(n), f1, &cfg);
            prop_assert!(r2 <= r1 + 1e-15);
            prop_assert!((0.0..=1.0).contains(&r1));
            if m <= n {
                prop_assert_eq!(r1, 1.0);
            }
        }

        #[test]
        fn total_is_minus_one_or_in_unit_interval(
            f1 in 0.0f64..=1.0,
            searches in 0usize..6,
            malformed in proptest::bool::ANY,
        ) {
            let cfg = RewardConfig::default();
            let raw = if malformed { "no tags" } else { "<think>r</think><answer>x y z</answer>" };
            // Build a prediction achieving roughly the sampled f1 by mixing
            // overlapping and disjoint tokens against a fixed gold.
            let gold = "g1 g2 g3 g4".to_string();
            let keep = (f1 * 4.0).round() as usize;
            let mut pred_tokens: Vec<String> = (0..keep).map(|i| format!("g{}", i + 1)).collect();
            for i in keep..4 {
                pred_tokens.push(format!("x{i}"));
            }
            let pred = pred_tokens.join(" ");
            let t = answer_trajectory(Some(&pred), raw, searches);
            let b = overall_reward(&t, &[gold], Some(1), &cfg);
            if malformed {
                prop_assert_eq!(b.total, -1.0);
            } else {
                prop_assert!((0.0..=1.0).contains(&b.total));
                prop_assert_eq!(b.total, cfg.w_alpha * b.f1 + cfg.w_beta * b.tool_score);
            }
        }

        #[test]
        fn baseline_is_order_independent(
            observations in proptest::collection::vec((0u32..8, 0.8f64..1.0), 1..20).prop_shuffle()
        ) {
            let cfg = RewardConfig::default();
            let mut sorted_obs = observations.clone();
            sorted_obs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut t1 = BaselineTable::new();
            let mut t2 = BaselineTable::new();
            for (m, f1) in &observations {
                t1.observe("q", *m, *f1, &cfg);
            }
            for (m, f1) in &sorted_obs {
                t2.observe("q", *m, *f1, &cfg);
            }
            prop_assert_eq!(t1.get("q"), t2.get("q"));
        }

        #[test]
        fn baseline_never_increases(ms in proptest::collection::vec(0u32..8, 1..20)) {
            let cfg = RewardConfig::default();
            let mut table = BaselineTable::new();
            let mut prev: Option<u32> = None;
            for m in ms {
                table.observe("q", m, 1.0, &cfg);
                let now = table.get("q");
                if let (Some(p), Some(n)) = (prev, now) {
                    prop_assert!(n <= p);
                }
                prev = now;
            }
        }
    }
}
