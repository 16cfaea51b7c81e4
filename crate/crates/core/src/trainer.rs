//! Training loop: group rollouts per question, group-relative advantages,
//! REINFORCE updates on the softmax policy, reward-categorized summary
//! windows feeding the experience bank on a fixed cadence, and a few-shot
//! pool of high-reward exemplars. Also hosts the greedy evaluator.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::World;
use crate::experience::{
    assemble_prompt, categorize, maybe_update, summarize, trajectory_digest, ExperienceBank,
    FewShotPool, Summarizer, TrajectorySummary,
};
use crate::policy::PolicyState;
use crate::report::{score_trajectory, EpisodeOutcome};
use crate::reward::{BaselineTable, RewardConfig};
use crate::rollout::{rollout, rollout_group, RolloutGroup, RolloutParams};
use crate::seeds::derive_seed;
use crate::types::Trajectory;

/// Base prompt instructions shared by training and evaluation.
pub const INSTRUCTIONS: &str = "You answer questions about a closed world of facts using a search tool. \
Work step by step: reason, search when a needed fact is missing, and finish with one short answer. \
Wrap all reasoning in a single <think>...</think> block and end the response with exactly one \
<answer>...</answer> or <tool_call>...</tool_call> block. Search queries work best as \"entity relation\". \
Prefer the fewest searches that settle the question, and answer as soon as the chain of facts is resolved.";

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Episodes generated per question per iteration.
    pub group_size: usize,
    /// Distinct questions per iteration.
    pub batch_size: usize,
    pub epochs: u32,
    pub learning_rate: f64,
    pub max_steps: u32,
    pub search_k: usize,
    pub temperature: f64,
    /// Probability that a training episode drops its reasoning block.
    pub sloppy_emission_prob: f64,
    /// Disables sloppy emissions even in training.
    pub strict_format: bool,
    pub seed: u64,
    /// Bank refresh period, in iterations.
    pub cadence: u32,
    pub max_guidelines_per_category: usize,
    /// Cap on good/bad summaries handed to the summarizer per refresh.
    pub max_summary_per_side: usize,
    pub few_shot_capacity: usize,
    pub few_shot_threshold: f64,
    pub experience_enabled: bool,
    pub few_shot_enabled: bool,
    /// Whether evaluation prompts include the experience bank.
    pub experience_in_inference: bool,
    /// Snapshot period, in iterations.
    pub checkpoint_every: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            group_size: 12,
            batch_size: 16,
            epochs: 2,
            learning_rate: 0.05,
            max_steps: 6,
            search_k: 3,
            temperature: 1.0,
            sloppy_emission_prob: 0.25,
            strict_format: false,
            seed: 1,
            cadence: 5,
            max_guidelines_per_category: 5,
            max_summary_per_side: 8,
            few_shot_capacity: 64,
            few_shot_threshold: 0.8,
            experience_enabled: true,
            few_shot_enabled: true,
            experience_in_inference: false,
            checkpoint_every: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: String| Err(TrainError::InvalidConfig(msg));
        if self.group_size < 2 {
            return fail(format!(
                "group_size must be at least 2 so group-relative advantages exist, got {}",
                self.group_size
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.max_steps == 0 {
            return fail("max_steps must be positive".into());
        }
        if self.search_k == 0 {
            return fail("search_k must be positive".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(0.0..=1.0).contains(&self.sloppy_emission_prob) {
            return fail(format!(
                "sloppy_emission_prob must lie in [0, 1], got {}",
                self.sloppy_emission_prob
            ));
        }
        if self.cadence == 0 {
            return fail("cadence must be positive".into());
        }
        if self.max_guidelines_per_category == 0 {
            return fail("max_guidelines_per_category must be positive".into());
        }
        if self.max_summary_per_side == 0 {
            return fail("max_summary_per_side must be positive".into());
        }
        if self.checkpoint_every == 0 {
            return fail("checkpoint_every must be positive".into());
        }
        Ok(())
    }

    fn rollout_params(&self, greedy: bool, strict: bool) -> RolloutParams {
        RolloutParams {
            max_steps: self.max_steps,
            search_k: self.search_k,
            sloppy_emission_prob: if strict { 0.0 } else { self.sloppy_emission_prob },
            strict_format: strict || self.strict_format,
            greedy,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("world has no queries")]
    EmptyWorld,
}

/// Group-relative advantages: rewards centered on the group mean and scaled
/// by the population standard deviation. A (near-)constant group yields all
/// zeros rather than amplifying noise.
pub fn compute_advantages(rewards: &[f64]) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let variance = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = variance.sqrt();
    if std < 1e-12 {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}

/// REINFORCE update for one scored group: every step of an episode shares the
/// episode's advantage, and gradients are evaluated against the policy that
/// generated the episodes.
pub fn policy_update(
    policy: &mut PolicyState,
    gen_policy: &PolicyState,
    group: &RolloutGroup,
    advantages: &[f64],
    learning_rate: f64,
) {
    debug_assert_eq!(group.episodes.len(), advantages.len());
    for (episode, &advantage) in group.episodes.iter().zip(advantages) {
        if advantage == 0.0 {
            continue;
        }
        for step in &episode.trace {
            for ((feature, decision), g) in
                gen_policy.grad_log_prob(&step.features, step.decision)
            {
                policy.add_weight(feature, decision, learning_rate * advantage * g);
            }
        }
    }
}

/// Per-iteration training metrics, one line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: u32,
    pub mean_reward: f64,
    pub mean_f1: f64,
    pub em_rate: f64,
    pub mean_tool_calls: f64,
    pub format_failure_rate: f64,
    pub good_count: usize,
    pub bad_count: usize,
    pub bank_entries: usize,
    pub pool_size: usize,
    pub baseline_entries: usize,
    pub bank_updated: bool,
}

/// Periodic snapshot of the learned state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: u32,
    pub policy: PolicyState,
    pub bank: ExperienceBank,
}

/// Everything a finished training run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub iterations: u32,
    pub policy: PolicyState,
    pub bank: ExperienceBank,
    pub baselines: BaselineTable,
    pub pool: FewShotPool,
    pub bank_updates: u32,
    pub summarizer_failures: u32,
    pub metrics: Vec<IterationMetrics>,
    pub snapshots: Vec<Snapshot>,
    pub train_trajectories: Vec<Trajectory>,
}

/// Picks the most extreme summaries from a window: highest totals for the
/// good side, lowest for the bad side, preserving arrival order among ties.
fn select_extremes(
    window: &[(f64, TrajectorySummary)],
    take: usize,
    highest: bool,
) -> Vec<TrajectorySummary> {
    let mut indexed: Vec<(usize, f64)> =
        window.iter().enumerate().map(|(i, (total, _))| (i, *total)).collect();
    if highest {
        indexed.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    } else {
        indexed.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    }
    indexed
        .into_iter()
        .take(take)
        .map(|(i, _)| window[i].1.clone())
        .collect()
}

/// Runs the full training loop over the world's queries.
pub fn train(
    world: &World,
    train_cfg: &TrainConfig,
    reward_cfg: &RewardConfig,
    summarizer: &dyn Summarizer,
) -> Result<TrainReport, TrainError> {
    train_cfg.validate()?;
    reward_cfg
        .validate()
        .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
    if world.queries.is_empty() {
        return Err(TrainError::EmptyWorld);
    }

    let mut policy = PolicyState::new(train_cfg.temperature);
    let mut bank = ExperienceBank::new(train_cfg.cadence);
    let mut baselines = BaselineTable::new();
    let mut pool = FewShotPool::new(train_cfg.few_shot_capacity, train_cfg.few_shot_threshold);
    let mut good_window: Vec<(f64, TrajectorySummary)> = Vec::new();
    let mut bad_window: Vec<(f64, TrajectorySummary)> = Vec::new();

    let params = train_cfg.rollout_params(false, false);
    let mut metrics = Vec::new();
    let mut snapshots = Vec::new();
    let mut train_trajectories = Vec::new();
    let mut bank_updates = 0u32;
    let mut summarizer_failures = 0u32;
    let mut iteration = 0u32;

    for epoch in 0..train_cfg.epochs {
        let mut order: Vec<usize> = (0..world.queries.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(
            train_cfg.seed,
            "shuffle",
            "epoch",
            u64::from(epoch),
            0,
        ));
        order.shuffle(&mut shuffle_rng);

        for batch in order.chunks(train_cfg.batch_size) {
            iteration += 1;
            // Episodes are generated against the iteration-start policy;
            // updates accumulate on the live policy between groups.
            let gen_policy = policy.clone();
            let prompt_bank = if train_cfg.experience_enabled { Some(&bank) } else { None };
            let prompt_pool = if train_cfg.few_shot_enabled { Some(&pool) } else { None };

            let mut totals = Vec::new();
            let mut f1_sum = 0.0;
            let mut em_sum = 0.0;
            let mut tool_sum = 0.0;
            let mut format_failures = 0usize;
            let mut good_count = 0usize;
            let mut bad_count = 0usize;
            let mut offers: Vec<(String, f64)> = Vec::new();

            for &qi in batch {
                let query = &world.queries[qi];
                let group = rollout_group(
                    &world.kb,
                    query,
                    &gen_policy,
                    prompt_bank,
                    prompt_pool,
                    INSTRUCTIONS,
                    reward_cfg,
                    &mut baselines,
                    &params,
                    train_cfg.group_size,
                    train_cfg.seed,
                    u64::from(iteration),
                );
                let rewards: Vec<f64> = group.breakdowns.iter().map(|b| b.total).collect();
                let advantages = compute_advantages(&rewards);
                policy_update(&mut policy, &gen_policy, &group, &advantages, train_cfg.learning_rate);

                let categories = categorize(&group.breakdowns, reward_cfg);
                good_count += categories.good.len();
                bad_count += categories.bad.len();
                for &i in &categories.good {
                    good_window.push((
                        group.breakdowns[i].total,
                        summarize(
                            &group.episodes[i].trajectory,
                            &group.breakdowns[i],
                            group.baseline_before,
                            reward_cfg,
                        ),
                    ));
                }
                for &i in &categories.bad {
                    bad_window.push((
                        group.breakdowns[i].total,
                        summarize(
                            &group.episodes[i].trajectory,
                            &group.breakdowns[i],
                            group.baseline_before,
                            reward_cfg,
                        ),
                    ));
                }

                for (episode, breakdown) in group.episodes.iter().zip(&group.breakdowns) {
                    totals.push(breakdown.total);
                    f1_sum += breakdown.f1;
                    em_sum += f64::from(breakdown.em);
                    tool_sum += episode.trajectory.tool_calls() as f64;
                    if breakdown.format_score < 0 {
                        format_failures += 1;
                    }
                    offers.push((trajectory_digest(&episode.trajectory), breakdown.total));
                    train_trajectories.push(episode.trajectory.clone());
                }
            }

            if train_cfg.few_shot_enabled {
                for (digest, total) in offers {
                    pool.offer(digest, total);
                }
            }

            let mut bank_updated = false;
            if train_cfg.experience_enabled {
                let good = select_extremes(&good_window, train_cfg.max_summary_per_side, true);
                let bad = select_extremes(&bad_window, train_cfg.max_summary_per_side, false);
                match maybe_update(
                    &mut bank,
                    iteration,
                    &good,
                    &bad,
                    summarizer,
                    train_cfg.max_guidelines_per_category,
                ) {
                    Ok(true) => {
                        bank_updated = true;
                        bank_updates += 1;
                        good_window.clear();
                        bad_window.clear();
                    }
                    Ok(false) => {}
                    Err(_) => {
                        // The window is kept so the next refresh can retry.
                        summarizer_failures += 1;
                    }
                }
            }

            let n = totals.len() as f64;
            metrics.push(IterationMetrics {
                iteration,
                mean_reward: totals.iter().sum::<f64>() / n,
                mean_f1: f1_sum / n,
                em_rate: em_sum / n,
                mean_tool_calls: tool_sum / n,
                format_failure_rate: format_failures as f64 / n,
                good_count,
                bad_count,
                bank_entries: bank.total_entries(),
                pool_size: pool.len(),
                baseline_entries: baselines.len(),
                bank_updated,
            });

            if iteration % train_cfg.checkpoint_every == 0 {
                snapshots.push(Snapshot {
                    iteration,
                    policy: policy.clone(),
                    bank: bank.clone(),
                });
            }
        }
    }

    Ok(TrainReport {
        iterations: iteration,
        policy,
        bank,
        baselines,
        pool,
        bank_updates,
        summarizer_failures,
        metrics,
        snapshots,
        train_trajectories,
    })
}

/// Greedy, noise-free evaluation over all queries of a world: no sampling,
/// no sloppy emissions, no few-shot examples, and the experience bank only
/// when explicitly provided. Returns per-episode outcomes and the raw
/// trajectories.
pub fn evaluate(
    world: &World,
    policy: &PolicyState,
    bank: Option<&ExperienceBank>,
    baselines: Option<&BaselineTable>,
    reward_cfg: &RewardConfig,
    train_cfg: &TrainConfig,
) -> (Vec<EpisodeOutcome>, Vec<Trajectory>) {
    let params = train_cfg.rollout_params(true, true);
    let mut outcomes = Vec::with_capacity(world.queries.len());
    let mut trajectories = Vec::with_capacity(world.queries.len());
    // Greedy decisions with the noise channel closed never consult the RNG,
    // but rollout still wants one.
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(train_cfg.seed, "eval", "all", 0, 0));
    for query in &world.queries {
        let prompt = assemble_prompt(INSTRUCTIONS, bank, None, &query.text);
        let episode = rollout(&world.kb, query, policy, &prompt, &params, &mut rng);
        let baseline = baselines.and_then(|b| b.get(&query.id));
        outcomes.push(score_trajectory(
            &episode.trajectory,
            &query.gold_answers,
            baseline,
            reward_cfg,
        ));
        trajectories.push(episode.trajectory);
    }
    (outcomes, trajectories)
}
