//! Episode generation. An agent context tracks the state of one episode
//! (parsed question plan, retrieved evidence, search budget cues from the
//! prompt), the policy picks one decision per step, and the finished episode
//! is rendered as a single raw response whose format is scored downstream.
//! Groups of episodes for the same question share a pre-group snapshot of the
//! tool-count baseline so every member is scored against the same reference.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{search, terms, KnowledgeBase};
use crate::experience::{assemble_prompt, ExperienceBank, FewShotPool};
use crate::policy::{FeatureVec, PolicyState, NUM_FEATURES};
use crate::reward::{overall_reward, BaselineTable, RewardBreakdown, RewardConfig};
use crate::seeds::derive_seed;
use crate::types::{
    count_tokens, render_response, Decision, Query, Step, TerminalTag, Trajectory,
};

/// Signals the agent reads back out of its own prompt. Guidance injected into
/// the prompt changes behavior only through these couplings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PromptInfo {
    /// Search budget hint, from a "at most N search calls" guideline or,
    /// failing that, from the number of searches in the worked example.
    pub budget_hint: Option<u32>,
    /// Whether the prompt insists on the strict response pattern, which
    /// suppresses sloppy emissions.
    pub strict: bool,
}

impl PromptInfo {
    pub fn parse(prompt: &str) -> Self {
        let mut budget_hint = parse_budget_hint(prompt);
        if budget_hint.is_none() {
            budget_hint = example_search_count(prompt);
        }
        let strict = prompt.contains("Always use <think> pattern");
        PromptInfo { budget_hint, strict }
    }
}

fn parse_budget_hint(prompt: &str) -> Option<u32> {
    let mut rest = prompt;
    while let Some(pos) = rest.find("at most ") {
        let tail = &rest[pos + "at most ".len()..];
        let digits: String = tail.chars().take_while(|c| c.is_ascii_digit()).collect();
        if !digits.is_empty() && tail[digits.len()..].starts_with(" search call") {
            return digits.parse().ok();
        }
        rest = &rest[pos + "at most ".len()..];
    }
    None
}

/// Number of `search[` steps in the prompt's worked example, if one exists.
fn example_search_count(prompt: &str) -> Option<u32> {
    let start = prompt.find("Example:\n")?;
    let section = &prompt[start..];
    let end = section.find("\n\nQuestion:").unwrap_or(section.len());
    Some(section[..end].matches("search[").count() as u32)
}

/// What the agent understood the question to ask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPlan {
    /// Starting entity of the fact chain.
    pub anchor: String,
    /// Relations to follow, innermost first.
    pub relations: Vec<String>,
    /// Answer stated directly in the question, when present.
    pub embedded_answer: Option<String>,
}

impl QueryPlan {
    pub fn parse(query_text: &str) -> Self {
        if let Some(rest) = query_text.strip_prefix("The codeword in this question is ") {
            if let Some(dot) = rest.find('.') {
                let entity = rest[..dot].to_string();
                return QueryPlan {
                    anchor: entity.clone(),
                    relations: Vec::new(),
                    embedded_answer: Some(entity),
                };
            }
        }
        let mut relations: Vec<String> = query_text
            .split_whitespace()
            .filter(|t| t.contains('-'))
            .map(|t| t.to_string())
            .collect();
        relations.reverse(); // question lists the outermost relation first
        let anchor = query_text
            .split_whitespace()
            .last()
            .unwrap_or("")
            .trim_end_matches('?')
            .to_string();
        QueryPlan { anchor, relations, embedded_answer: None }
    }
}

/// Mutable state of one in-flight episode.
pub struct AgentContext<'a> {
    kb: &'a KnowledgeBase,
    pub plan: QueryPlan,
    query_terms: BTreeSet<String>,
    pub prompt_info: PromptInfo,
    pub max_steps: u32,
    pub steps_so_far: u32,
    pub searches_so_far: u32,
    chain_pos: usize,
    current_entity: String,
    pub candidate: Option<String>,
    last_top_object: Option<String>,
    retrieved_terms: BTreeSet<String>,
}

impl<'a> AgentContext<'a> {
    pub fn new(kb: &'a KnowledgeBase, query: &Query, prompt: &str, max_steps: u32) -> Self {
        let plan = QueryPlan::parse(&query.text);
        let candidate = plan.embedded_answer.clone();
        let current_entity = plan.anchor.clone();
        AgentContext {
            kb,
            plan,
            query_terms: terms(&query.text),
            prompt_info: PromptInfo::parse(prompt),
            max_steps,
            steps_so_far: 0,
            searches_so_far: 0,
            chain_pos: 0,
            current_entity,
            candidate,
            last_top_object: None,
            retrieved_terms: BTreeSet::new(),
        }
    }

    /// Current step features for the policy, aligned with
    /// [`crate::policy::FEATURES`].
    pub fn features(&self) -> FeatureVec {
        let mut x = [0.0; NUM_FEATURES];
        x[0] = if self.candidate.is_none() { 1.0 } else { 0.0 };
        x[1] = f64::from(self.steps_so_far) / f64::from(self.max_steps);
        x[2] = f64::from(self.searches_so_far) / f64::from(self.max_steps);
        x[3] = if self.query_terms.is_empty() {
            0.0
        } else {
            let overlap = self.query_terms.intersection(&self.retrieved_terms).count();
            overlap as f64 / self.query_terms.len() as f64
        };
        x[4] = if self.candidate.is_some() { 1.0 } else { 0.0 };
        x[5] = if self.plan.embedded_answer.is_some() { 1.0 } else { 0.0 };
        let hint = self.prompt_info.budget_hint.unwrap_or(self.max_steps);
        x[6] = if self.searches_so_far >= hint { 1.0 } else { 0.0 };
        x
    }

    /// Next focused search query: the entity whose outgoing fact is needed,
    /// plus the relation still to resolve. Once the chain is exhausted the
    /// last relation is re-queried; a plan with no relations queries the
    /// anchor alone.
    pub fn next_search_query(&self) -> String {
        match self
            .plan
            .relations
            .get(self.chain_pos)
            .or_else(|| self.plan.relations.last())
        {
            Some(rel) => format!("{} {}", self.current_entity, rel),
            None => self.plan.anchor.clone(),
        }
    }

    /// Executes one decision and returns the recorded step.
    pub fn act(&mut self, decision: Decision, search_k: usize) -> Step {
        self.steps_so_far += 1;
        let step = match decision {
            Decision::Search => {
                let query = self.next_search_query();
                let result = search(self.kb, &query, search_k);
                self.searches_so_far += 1;
                for hit in &result.hits {
                    self.retrieved_terms.extend(terms(&hit.text));
                }
                if let Some(top) = result.hits.first() {
                    if let [_, _, o] = top.text.split_whitespace().collect::<Vec<_>>().as_slice() {
                        self.last_top_object = Some(o.to_string());
                    }
                }
                // Verified extraction: only a fact whose subject and relation
                // match the pending chain position advances the chain.
                if let Some(expected_rel) = self.plan.relations.get(self.chain_pos).cloned() {
                    let advance = result.hits.iter().find_map(|h| {
                        let parts: Vec<&str> = h.text.split_whitespace().collect();
                        match parts.as_slice() {
                            [s, r, o] if *s == self.current_entity && *r == expected_rel => {
                                Some(o.to_string())
                            }
                            _ => None,
                        }
                    });
                    if let Some(object) = advance {
                        self.current_entity = object;
                        self.chain_pos += 1;
                        if self.chain_pos == self.plan.relations.len() {
                            self.candidate = Some(self.current_entity.clone());
                        }
                    }
                }
                Step {
                    reasoning_text: format!(
                        "step {}: searching \"{}\"",
                        self.steps_so_far, query
                    ),
                    decision,
                    search_query: Some(query),
                    search_result: Some(result),
                }
            }
            Decision::Continue => Step {
                reasoning_text: format!(
                    "step {}: reviewing what is known so far",
                    self.steps_so_far
                ),
                decision,
                search_query: None,
                search_result: None,
            },
            Decision::Answer => Step {
                reasoning_text: format!(
                    "step {}: committing to \"{}\"",
                    self.steps_so_far,
                    self.answer_text()
                ),
                decision,
                search_query: None,
                search_result: None,
            },
        };
        step
    }

    /// Best available answer: verified chain result, else the most recent
    /// top-ranked object, else the anchor itself.
    pub fn answer_text(&self) -> String {
        self.candidate
            .clone()
            .or_else(|| self.last_top_object.clone())
            .or_else(|| {
                if self.plan.anchor.is_empty() {
                    None
                } else {
                    Some(self.plan.anchor.clone())
                }
            })
            .unwrap_or_else(|| "unknown".to_string())
    }
}

/// Knobs of a single episode generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutParams {
    pub max_steps: u32,
    pub search_k: usize,
    /// Probability that an episode is emitted without its reasoning block.
    /// Suppressed when the prompt demands the strict pattern.
    pub sloppy_emission_prob: f64,
    /// Hard switch that disables sloppy emissions regardless of prompts
    /// (used for evaluation).
    pub strict_format: bool,
    /// Pick the argmax decision instead of sampling (used for evaluation).
    pub greedy: bool,
}

/// One step of the policy-visible trace: what the policy saw and chose.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub features: FeatureVec,
    pub decision: Decision,
}

/// A finished episode plus the trace needed for policy updates.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub trajectory: Trajectory,
    pub trace: Vec<TraceStep>,
}

/// Runs one episode of at most `max_steps` decisions and renders it as a
/// single raw response: one reasoning block followed by one terminal block.
/// An episode cut off right after a search emits the pending tool call; one
/// cut off while deliberating emits no terminal block at all.
pub fn rollout<R: Rng>(
    kb: &KnowledgeBase,
    query: &Query,
    policy: &PolicyState,
    prompt: &str,
    params: &RolloutParams,
    rng: &mut R,
) -> EpisodeTrace {
    let mut ctx = AgentContext::new(kb, query, prompt, params.max_steps);
    // Episode-level noise draw happens first so step sampling is unaffected.
    let sloppy = !params.strict_format
        && !ctx.prompt_info.strict
        && params.sloppy_emission_prob > 0.0
        && rng.gen_range(0.0..1.0) < params.sloppy_emission_prob;

    let mut steps: Vec<Step> = Vec::new();
    let mut trace: Vec<TraceStep> = Vec::new();
    let mut final_answer: Option<String> = None;
    for _ in 0..params.max_steps {
        let features = ctx.features();
        let decision = if params.greedy {
            policy.greedy(&features)
        } else {
            policy.sample(&features, rng)
        };
        trace.push(TraceStep { features, decision });
        let step = ctx.act(decision, params.search_k);
        let answered = decision == Decision::Answer;
        steps.push(step);
        if answered {
            final_answer = Some(ctx.answer_text());
            break;
        }
    }

    let think_text = steps
        .iter()
        .map(|s| s.reasoning_text.as_str())
        .collect::<Vec<_>>()
        .join("; ");
    let terminal: Option<(TerminalTag, String)> = match (&final_answer, steps.last()) {
        (Some(ans), _) => Some((TerminalTag::Answer, ans.clone())),
        (None, Some(last)) if last.decision == Decision::Search => Some((
            TerminalTag::ToolCall,
            last.search_query.clone().unwrap_or_default(),
        )),
        _ => None,
    };
    let raw_text = match (&terminal, sloppy) {
        (Some((tag, payload)), false) => render_response(&think_text, *tag, payload),
        (Some((tag, payload)), true) => {
            format!("<{0}>{1}</{0}>", tag.tag_name(), payload)
        }
        (None, false) => format!("<think>{think_text}</think>"),
        (None, true) => String::new(),
    };
    let token_count = count_tokens(&raw_text) as u64;

    EpisodeTrace {
        trajectory: Trajectory {
            query_id: query.id.clone(),
            steps,
            final_answer,
            raw_text,
            token_count,
        },
        trace,
    }
}

/// A scored group of episodes for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub query_id: String,
    pub episodes: Vec<EpisodeTrace>,
    pub breakdowns: Vec<RewardBreakdown>,
    /// Baseline snapshot every member was scored against.
    pub baseline_before: Option<u32>,
}

/// Generates and scores a group of episodes for one question. The tool-count
/// baseline is snapshotted before the group starts; every member is scored
/// against that snapshot, and only afterwards do qualifying members (answer
/// quality at or above the tool threshold) lower the stored baseline.
#[allow(clippy::too_many_arguments)]
pub fn rollout_group(
    kb: &KnowledgeBase,
    query: &Query,
    policy: &PolicyState,
    bank: Option<&ExperienceBank>,
    pool: Option<&FewShotPool>,
    instructions: &str,
    reward_cfg: &RewardConfig,
    baselines: &mut BaselineTable,
    params: &RolloutParams,
    group_size: usize,
    master_seed: u64,
    iteration: u64,
) -> RolloutGroup {
    let baseline_before = baselines.get(&query.id);
    let mut episodes = Vec::with_capacity(group_size);
    let mut breakdowns = Vec::with_capacity(group_size);
    for g in 0..group_size {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            master_seed,
            "rollout",
            &query.id,
            iteration,
            g as u64,
        ));
        let example = pool
            .and_then(|p| p.sample(&mut rng))
            .map(|e| e.digest.clone());
        let prompt = assemble_prompt(instructions, bank, example.as_deref(), &query.text);
        let episode = rollout(kb, query, policy, &prompt, params, &mut rng);
        let breakdown =
            overall_reward(&episode.trajectory, &query.gold_answers, baseline_before, reward_cfg);
        episodes.push(episode);
        breakdowns.push(breakdown);
    }
    for (episode, breakdown) in episodes.iter().zip(&breakdowns) {
        baselines.observe(
            &query.id,
            episode.trajectory.tool_calls() as u32,
            breakdown.f1,
            reward_cfg,
        );
    }
    RolloutGroup {
        query_id: query.id.clone(),
        episodes,
        breakdowns,
        baseline_before,
    }
}
