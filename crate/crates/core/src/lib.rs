//! Desk-scale laboratory for training search-tool agents with reinforcement
//! learning. A synthetic multi-hop QA world provides a fact base and a search
//! tool; a tiny softmax policy decides when to search, keep thinking, or
//! answer; rewards combine answer quality with an adaptive tool-frugality
//! term; and a contrastive experience memory distills good/bad episodes into
//! prompt guidance the agent actually reads.
//!
//! Everything is deterministic for a fixed configuration: same config, same
//! logs, byte for byte.

pub mod config;
pub mod env;
pub mod experience;
pub mod jsonl;
pub mod policy;
pub mod report;
pub mod reward;
pub mod rollout;
pub mod runner;
pub mod seeds;
pub mod trainer;
pub mod types;
