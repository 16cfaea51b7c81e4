//! Synthetic multi-hop QA world: a fact base with a lexical-overlap search
//! tool, plus a deterministic generator for queries whose answers require
//! 0..=3 chained lookups.
//!
//! Facts render as `"subject relation object"` with single-token entity names
//! and hyphenated single-token relations, so whitespace tokenization recovers
//! the triple exactly and focused searches (`"subject relation"`) rank the
//! matching fact first.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Query;

/// One retrieved fact with its overlap score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub fact_id: String,
    pub text: String,
    pub score: f64,
}

/// Ranked search output: scores non-increasing, ties by ascending fact id,
/// at most `k` hits, zero-score facts excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub hits: Vec<SearchHit>,
}

/// A (subject, relation, object) triple and its rendered text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub id: String,
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub text: String,
}

/// Fact store with an inverted term index (term -> fact positions).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeBase {
    pub facts: Vec<Fact>,
    index: HashMap<String, Vec<usize>>,
}

impl KnowledgeBase {
    pub fn from_facts(facts: Vec<Fact>) -> Self {
        let mut kb = KnowledgeBase { facts, index: HashMap::new() };
        kb.rebuild_index();
        kb
    }

    /// Rebuilds the inverted index from the fact list alone.
    pub fn rebuild_index(&mut self) {
        self.index.clear();
        for (pos, fact) in self.facts.iter().enumerate() {
            for term in terms(&fact.text) {
                self.index.entry(term).or_default().push(pos);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

/// Weight of one hop count in the query mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopWeight {
    pub hops: u8,
    pub weight: f64,
}

/// Generator configuration for a synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub num_entities: u32,
    pub num_queries: u32,
    pub hop_distribution: Vec<HopWeight>,
    pub seed: u64,
    pub distractor_facts: u32,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            num_entities: 50,
            num_queries: 100,
            hop_distribution: vec![
                HopWeight { hops: 0, weight: 0.5 },
                HopWeight { hops: 2, weight: 0.5 },
            ],
            seed: 7,
            distractor_facts: 60,
        }
    }
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("infeasible world config: {0}")]
    Infeasible(String),
    #[error("world file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("world file parse error: {0}")]
    Parse(String),
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.num_entities == 0 {
            return Err(WorldError::InvalidConfig("num_entities must be positive".into()));
        }
        if self.num_queries == 0 {
            return Err(WorldError::InvalidConfig("num_queries must be positive".into()));
        }
        if self.hop_distribution.is_empty() {
            return Err(WorldError::InvalidConfig("hop_distribution must not be empty".into()));
        }
        let mut seen = HashSet::new();
        let mut total = 0.0;
        for hw in &self.hop_distribution {
            if hw.hops > 3 {
                return Err(WorldError::InvalidConfig(format!(
                    "hop_distribution: hops must be in 0..=3, got {}",
                    hw.hops
                )));
            }
            if !hw.weight.is_finite() || hw.weight <= 0.0 {
                return Err(WorldError::InvalidConfig(format!(
                    "hop_distribution: weight for {} hops must be positive",
                    hw.hops
                )));
            }
            if !seen.insert(hw.hops) {
                return Err(WorldError::InvalidConfig(format!(
                    "hop_distribution: duplicate entry for {} hops",
                    hw.hops
                )));
            }
            total += hw.weight;
        }
        if total <= 0.0 {
            return Err(WorldError::InvalidConfig("hop_distribution weights must sum to a positive value".into()));
        }
        let max_hops = self.hop_distribution.iter().map(|h| h.hops).max().unwrap_or(0) as u32;
        if self.num_entities < max_hops + 1 {
            return Err(WorldError::Infeasible(format!(
                "{}-hop chains need at least {} entities, config has {}",
                max_hops,
                max_hops + 1,
                self.num_entities
            )));
        }
        Ok(())
    }
}

/// A generated world: the config that produced it, the fact base, and the
/// query set in generation order.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub kb: KnowledgeBase,
    pub queries: Vec<Query>,
}

const RELATIONS: [&str; 16] = [
    "capital-of",
    "led-by",
    "located-in",
    "member-of",
    "founded-by",
    "part-of",
    "famous-for",
    "allied-with",
    "named-after",
    "home-of",
    "built-by",
    "ruled-by",
    "source-of",
    "known-for",
    "guarded-by",
    "linked-to",
];

const ONSETS: [&str; 20] = [
    "bel", "dor", "fen", "gal", "hul", "jor", "kam", "lin", "mor", "nav", "pol", "quin", "ras",
    "sel", "tor", "vex", "wil", "yar", "zan", "bru",
];
const TAILS: [&str; 12] = ["ara", "eno", "ika", "ovo", "una", "ari", "elo", "iso", "ona", "uma", "axi", "ede"];

/// Lowercased whitespace-split term set of a text.
pub fn terms(text: &str) -> BTreeSet<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

fn entity_names(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut used = HashSet::new();
    let mut names = Vec::with_capacity(n);
    let mut counter = 0usize;
    while names.len() < n {
        let mut candidate = String::new();
        for _ in 0..10 {
            let onset = ONSETS[rng.gen_range(0..ONSETS.len())];
            let tail = TAILS[rng.gen_range(0..TAILS.len())];
            candidate = format!("{onset}{tail}");
            if !used.contains(&candidate) {
                break;
            }
        }
        while used.contains(&candidate) {
            counter += 1;
            candidate = format!("{candidate}{counter}");
        }
        used.insert(candidate.clone());
        names.push(candidate);
    }
    names
}

/// Tracks constraints that keep retrieval unambiguous:
/// - (subject, relation) pairs are unique, so chains have unique answers;
/// - per relation, the subject and object sets stay disjoint, so the query
///   `"subject relation"` matches exactly one fact with full overlap.
#[derive(Default)]
struct FactPlacer {
    facts: Vec<Fact>,
    by_subject_relation: HashMap<(String, String), usize>,
    rel_subjects: HashMap<String, HashSet<String>>,
    rel_objects: HashMap<String, HashSet<String>>,
}

impl FactPlacer {
    fn can_place(&self, s: &str, r: &str, o: &str) -> bool {
        s != o
            && !self.by_subject_relation.contains_key(&(s.to_string(), r.to_string()))
            && !self.rel_objects.get(r).map_or(false, |set| set.contains(s))
            && !self.rel_subjects.get(r).map_or(false, |set| set.contains(o))
    }

    fn place(&mut self, s: &str, r: &str, o: &str) -> usize {
        let id = format!("f{:06}", self.facts.len());
        let fact = Fact {
            id,
            subject: s.to_string(),
            relation: r.to_string(),
            object: o.to_string(),
            text: format!("{s} {r} {o}"),
        };
        let pos = self.facts.len();
        self.facts.push(fact);
        self.by_subject_relation.insert((s.to_string(), r.to_string()), pos);
        self.rel_subjects.entry(r.to_string()).or_default().insert(s.to_string());
        self.rel_objects.entry(r.to_string()).or_default().insert(o.to_string());
        pos
    }

    fn existing_object(&self, s: &str, r: &str) -> Option<&str> {
        self.by_subject_relation
            .get(&(s.to_string(), r.to_string()))
            .map(|&pos| self.facts[pos].object.as_str())
    }
}

fn hop0_text(entity: &str) -> String {
    format!("The codeword in this question is {entity}. What is the codeword?")
}

fn chain_text(relations: &[String], anchor: &str) -> String {
    // Innermost relation is applied first: "What is the r2 of the r1 of e0?"
    let mut out = String::from("What is the ");
    for (i, rel) in relations.iter().rev().enumerate() {
        if i > 0 {
            out.push_str("the ");
        }
        out.push_str(rel);
        out.push_str(" of ");
    }
    out.push_str(anchor);
    out.push('?');
    out
}

/// Generates a world deterministically from the config. Every query is
/// answerable: following its fact chain with one focused search per hop
/// keeps the needed fact in the top-k for k >= 1, and the chained objects
/// end at the unique gold answer.
pub fn generate_world(config: &WorldConfig) -> Result<World, WorldError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let entities = entity_names(config.num_entities as usize, &mut rng);

    let hop_counts: Vec<u8> = (0..config.num_queries)
        .map(|_| {
            let total: f64 = config.hop_distribution.iter().map(|h| h.weight).sum();
            let mut draw = rng.gen::<f64>() * total;
            for hw in &config.hop_distribution {
                draw -= hw.weight;
                if draw <= 0.0 {
                    return hw.hops;
                }
            }
            config.hop_distribution.last().expect("validated non-empty").hops
        })
        .collect();

    let mut placer = FactPlacer::default();
    let mut queries = Vec::with_capacity(hop_counts.len());

    for (qi, &hops) in hop_counts.iter().enumerate() {
        let id = format!("q{:04}", qi);
        if hops == 0 {
            let entity = entities[rng.gen_range(0..entities.len())].clone();
            queries.push(Query {
                id,
                text: hop0_text(&entity),
                gold_answers: vec![entity],
                required_hops: 0,
            });
            continue;
        }

        let mut placed = false;
        'attempts: for _ in 0..500 {
            let start = entities[rng.gen_range(0..entities.len())].clone();
            let mut chain_entities = vec![start.clone()];
            let mut relations: Vec<String> = Vec::new();
            let mut new_facts: Vec<(String, String, String)> = Vec::new();

            for hop in 0..hops {
                let subject = chain_entities.last().expect("chain non-empty").clone();
                let mut advanced = false;
                for _ in 0..60 {
                    let relation = RELATIONS[rng.gen_range(0..RELATIONS.len())].to_string();
                    if hop > 0 && relations.last() == Some(&relation) {
                        continue;
                    }
                    // Reuse an existing edge when one exists; otherwise place a
                    // fresh fact under the ambiguity constraints.
                    if let Some(obj) = placer.existing_object(&subject, &relation) {
                        let obj = obj.to_string();
                        if chain_entities.contains(&obj) {
                            continue;
                        }
                        chain_entities.push(obj);
                        relations.push(relation);
                        advanced = true;
                        break;
                    }
                    let object = entities[rng.gen_range(0..entities.len())].clone();
                    if chain_entities.contains(&object) {
                        continue;
                    }
                    let pending_conflicts = new_facts.iter().any(|(s, r, o)| {
                        (s == &subject && r == &relation)
                            || (r == &relation && (o == &subject || s == &object))
                    });
                    if pending_conflicts || !placer.can_place(&subject, &relation, &object) {
                        continue;
                    }
                    new_facts.push((subject.clone(), relation.clone(), object.clone()));
                    chain_entities.push(object);
                    relations.push(relation);
                    advanced = true;
                    break;
                }
                if !advanced {
                    continue 'attempts;
                }
            }

            for (s, r, o) in &new_facts {
                placer.place(s, r, o);
            }
            let gold = chain_entities.last().expect("chain has hops+1 entities").clone();
            queries.push(Query {
                id: id.clone(),
                text: chain_text(&relations, &start),
                gold_answers: vec![gold],
                required_hops: hops as u32,
            });
            placed = true;
            break;
        }
        if !placed {
            return Err(WorldError::Infeasible(format!(
                "could not place a {hops}-hop chain for query {qi}; raise num_entities"
            )));
        }
    }

    let mut distractors_placed = 0;
    let mut attempts = 0;
    while distractors_placed < config.distractor_facts && attempts < config.distractor_facts * 200 {
        attempts += 1;
        let s = &entities[rng.gen_range(0..entities.len())];
        let r = RELATIONS[rng.gen_range(0..RELATIONS.len())];
        let o = &entities[rng.gen_range(0..entities.len())];
        if placer.can_place(s, r, o) {
            placer.place(s, r, o);
            distractors_placed += 1;
        }
    }

    Ok(World {
        config: config.clone(),
        kb: KnowledgeBase::from_facts(placer.facts),
        queries,
    })
}

/// Ranks facts by lexical overlap with the query: score =
/// |query terms ∩ fact terms| / |query terms| over lowercased
/// whitespace-split term sets. Zero-score facts are excluded, ties break by
/// ascending fact id, and at most `k` hits are returned. An empty query
/// yields an empty result.
pub fn search(kb: &KnowledgeBase, query_text: &str, k: usize) -> SearchResult {
    let query_terms = terms(query_text);
    if query_terms.is_empty() || k == 0 {
        return SearchResult { hits: vec![] };
    }
    let mut candidates: BTreeSet<usize> = BTreeSet::new();
    for term in &query_terms {
        if let Some(positions) = kb.index.get(term) {
            candidates.extend(positions.iter().copied());
        }
    }
    let mut scored: Vec<(f64, &Fact)> = candidates
        .into_iter()
        .map(|pos| {
            let fact = &kb.facts[pos];
            let overlap = terms(&fact.text).intersection(&query_terms).count();
            (overlap as f64 / query_terms.len() as f64, fact)
        })
        .filter(|(score, _)| *score > 0.0)
        .collect();
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("scores are finite")
            .then_with(|| a.1.id.cmp(&b.1.id))
    });
    scored.truncate(k);
    SearchResult {
        hits: scored
            .into_iter()
            .map(|(score, fact)| SearchHit {
                fact_id: fact.id.clone(),
                text: fact.text.clone(),
                score,
            })
            .collect(),
    }
}

/// Minimum number of tool calls a perfect agent needs for this query.
pub fn oracle_min_tools(query: &Query) -> u32 {
    query.required_hops
}

/// Line records of the world dump file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorldRecord {
    Config(WorldConfig),
    Fact(Fact),
    Query(Query),
}

/// Serializes the world as line-delimited records: one config line, then all
/// facts, then all queries.
pub fn world_to_records(world: &World) -> Vec<WorldRecord> {
    let mut records = Vec::with_capacity(1 + world.kb.facts.len() + world.queries.len());
    records.push(WorldRecord::Config(world.config.clone()));
    records.extend(world.kb.facts.iter().cloned().map(WorldRecord::Fact));
    records.extend(world.queries.iter().cloned().map(WorldRecord::Query));
    records
}

/// Rebuilds a world from dump records; requires exactly one config line.
pub fn world_from_records(records: Vec<WorldRecord>) -> Result<World, WorldError> {
    let mut config = None;
    let mut facts = Vec::new();
    let mut queries = Vec::new();
    for record in records {
        match record {
            WorldRecord::Config(c) => {
                if config.replace(c).is_some() {
                    return Err(WorldError::Parse("world dump has more than one config record".into()));
                }
            }
            WorldRecord::Fact(f) => facts.push(f),
            WorldRecord::Query(q) => queries.push(q),
        }
    }
    let config = config.ok_or_else(|| WorldError::Parse("world dump has no config record".into()))?;
    Ok(World {
        config,
        kb: KnowledgeBase::from_facts(facts),
        queries,
    })
}

pub fn save_world(world: &World, path: &std::path::Path) -> Result<(), WorldError> {
    crate::jsonl::write_jsonl(path, &world_to_records(world))
        .map_err(|e| WorldError::Parse(e.to_string()))
}

pub fn load_world(path: &std::path::Path) -> Result<World, WorldError> {
    let records = crate::jsonl::read_jsonl(path).map_err(|e| WorldError::Parse(e.to_string()))?;
    world_from_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny_kb() -> KnowledgeBase {
        KnowledgeBase::from_facts(vec![
            Fact {
                id: "f000000".into(),
                subject: "paris".into(),
                relation: "capital-of".into(),
                object: "france".into(),
                text: "paris capital-of france".into(),
            },
            Fact {
                id: "f000001".into(),
                subject: "lyon".into(),
                relation: "located-in".into(),
                object: "france".into(),
                text: "lyon located-in france".into(),
            },
            Fact {
                id: "f000002".into(),
                subject: "paris".into(),
                relation: "named-after".into(),
                object: "parisii".into(),
                text: "paris named-after parisii".into(),
            },
        ])
    }

    #[test]
    fn search_scores_overlap_fraction() {
        let kb = tiny_kb();
        // Query terms {capital, of, france}: under whitespace tokenization the
        // hyphenated relation "capital-of" is a single distinct token, so only
        // "france" overlaps -> 1/3 for both france facts, tie broken by id.
        let result = search(&kb, "capital of france", 3);
        assert_eq!(result.hits.len(), 2);
        assert_eq!(result.hits[0].fact_id, "f000000");
        assert!((result.hits[0].score - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(result.hits[1].fact_id, "f000001");
        assert!((result.hits[1].score - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn focused_query_ranks_exact_fact_first_with_full_overlap() {
        let kb = tiny_kb();
        let result = search(&kb, "paris capital-of", 3);
        assert_eq!(result.hits[0].fact_id, "f000000");
        assert!((result.hits[0].score - 1.0).abs() < 1e-12);
        // The other paris fact shares one of two terms.
        assert_eq!(result.hits[1].fact_id, "f000002");
        assert!((result.hits[1].score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_query_returns_empty_result() {
        let kb = tiny_kb();
        assert!(search(&kb, "", 3).hits.is_empty());
        assert!(search(&kb, "   ", 3).hits.is_empty());
    }

    #[test]
    fn zero_overlap_is_excluded_and_k_truncates() {
        let kb = tiny_kb();
        assert!(search(&kb, "zanuma", 3).hits.is_empty());
        let result = search(&kb, "france", 1);
        assert_eq!(result.hits.len(), 1);
        assert_eq!(result.hits[0].fact_id, "f000000");
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = WorldConfig::default();
        let w1 = generate_world(&cfg).unwrap();
        let w2 = generate_world(&cfg).unwrap();
        assert_eq!(w1.kb.facts, w2.kb.facts);
        assert_eq!(w1.queries, w2.queries);
    }

    #[test]
    fn hop_distribution_all_zero_yields_embedded_answers() {
        let cfg = WorldConfig {
            hop_distribution: vec![HopWeight { hops: 0, weight: 1.0 }],
            num_queries: 20,
            ..WorldConfig::default()
        };
        let world = generate_world(&cfg).unwrap();
        for q in &world.queries {
            assert_eq!(q.required_hops, 0);
            assert!(q.text.contains(&q.gold_answers[0]));
        }
    }

    #[test]
    fn reference_split_regression() {
        // Frozen output of the generator for the 50/50 hop mix at seed 1.
        let cfg = WorldConfig {
            num_entities: 50,
            num_queries: 100,
            hop_distribution: vec![
                HopWeight { hops: 0, weight: 0.5 },
                HopWeight { hops: 2, weight: 0.5 },
            ],
            seed: 1,
            distractor_facts: 60,
        };
        let world = generate_world(&cfg).unwrap();
        let hop0 = world.queries.iter().filter(|q| q.required_hops == 0).count();
        let hop2 = world.queries.iter().filter(|q| q.required_hops == 2).count();
        assert_eq!((hop0, hop2), (51, 49));
    }

    #[test]
    fn infeasible_config_is_rejected() {
        let cfg = WorldConfig {
            num_entities: 2,
            hop_distribution: vec![HopWeight { hops: 3, weight: 1.0 }],
            ..WorldConfig::default()
        };
        match generate_world(&cfg) {
            Err(WorldError::Infeasible(_)) => {}
            other => panic!("expected infeasible config error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad_weight = WorldConfig {
            hop_distribution: vec![HopWeight { hops: 0, weight: 0.0 }],
            ..WorldConfig::default()
        };
        assert!(matches!(bad_weight.validate(), Err(WorldError::InvalidConfig(_))));
        let dup = WorldConfig {
            hop_distribution: vec![
                HopWeight { hops: 2, weight: 0.5 },
                HopWeight { hops: 2, weight: 0.5 },
            ],
            ..WorldConfig::default()
        };
        assert!(matches!(dup.validate(), Err(WorldError::InvalidConfig(_))));
        let zero = WorldConfig { num_queries: 0, ..WorldConfig::default() };
        assert!(matches!(zero.validate(), Err(WorldError::InvalidConfig(_))));
    }

    /// Scripted perfect agent: answers embedded queries directly, otherwise
    /// follows the chain with one focused search per hop.
    fn scripted_answer(world: &World, q: &Query, k: usize) -> Option<String> {
        if q.required_hops == 0 {
            let rest = q.text.strip_prefix("The codeword in this question is ")?;
            return Some(rest[..rest.find('.')?].to_string());
        }
        let mut relations: Vec<String> = q
            .text
            .split_whitespace()
            .filter(|t| t.contains('-'))
            .map(|t| t.to_string())
            .collect();
        relations.reverse(); // innermost first
        let anchor = q.text.split_whitespace().last()?.trim_end_matches('?');
        let mut current = anchor.to_string();
        for rel in &relations {
            let result = search(&world.kb, &format!("{current} {rel}"), k);
            let hit = result.hits.iter().find_map(|h| {
                let parts: Vec<&str> = h.text.split_whitespace().collect();
                match parts.as_slice() {
                    [s, r, o] if *s == current && r == rel => Some(o.to_string()),
                    _ => None,
                }
            })?;
            current = hit;
        }
        Some(current)
    }

    #[test]
    fn every_query_is_answerable_with_oracle_tool_budget() {
        let cfg = WorldConfig {
            num_entities: 60,
            num_queries: 120,
            hop_distribution: vec![
                HopWeight { hops: 0, weight: 0.25 },
                HopWeight { hops: 1, weight: 0.25 },
                HopWeight { hops: 2, weight: 0.25 },
                HopWeight { hops: 3, weight: 0.25 },
            ],
            seed: 3,
            distractor_facts: 120,
        };
        let world = generate_world(&cfg).unwrap();
        for q in &world.queries {
            let answer = scripted_answer(&world, q, 3)
                .unwrap_or_else(|| panic!("query {} unanswerable", q.id));
            assert_eq!(answer, q.gold_answers[0], "query {}: {}", q.id, q.text);
            assert_eq!(oracle_min_tools(q), q.required_hops);
        }
    }

    #[test]
    fn index_rebuild_matches_search_results() {
        let cfg = WorldConfig::default();
        let world = generate_world(&cfg).unwrap();
        let mut rebuilt = world.kb.clone();
        rebuilt.rebuild_index();
        for q in world.queries.iter().take(10) {
            assert_eq!(search(&world.kb, &q.text, 3), search(&rebuilt, &q.text, 3));
        }
    }

    #[test]
    fn world_dump_round_trips() {
        let world = generate_world(&WorldConfig::default()).unwrap();
        let records = world_to_records(&world);
        let lines: Vec<String> = records.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
        let back: Vec<WorldRecord> = lines
            .iter()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let restored = world_from_records(back).unwrap();
        assert_eq!(restored.config, world.config);
        assert_eq!(restored.kb.facts, world.kb.facts);
        assert_eq!(restored.queries, world.queries);
    }

    #[test]
    fn dump_without_config_is_rejected() {
        let world = generate_world(&WorldConfig::default()).unwrap();
        let records: Vec<WorldRecord> =
            world.kb.facts.iter().cloned().map(WorldRecord::Fact).collect();
        assert!(matches!(world_from_records(records), Err(WorldError::Parse(_))));
        let mut doubled = world_to_records(&world);
        doubled.push(WorldRecord::Config(world.config.clone()));
        assert!(matches!(world_from_records(doubled), Err(WorldError::Parse(_))));
    }

    proptest! {
        #[test]
        fn scores_are_in_unit_interval_and_sorted(query in "[a-z ]{0,30}", k in 1usize..6) {
            let kb = tiny_kb();
            let result = search(&kb, &query, k);
            prop_assert!(result.hits.len() <= k);
            for pair in result.hits.windows(2) {
                prop_assert!(pair[0].score >= pair[1].score);
                if (pair[0].score - pair[1].score).abs() < 1e-15 {
                    prop_assert!(pair[0].fact_id < pair[1].fact_id);
                }
            }
            for hit in &result.hits {
                prop_assert!(hit.score > 0.0 && hit.score <= 1.0);
            }
        }
    }
}
