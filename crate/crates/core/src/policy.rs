//! Tabular-softmax decision policy. Each step is summarized as a small,
//! named feature vector; the policy keeps one weight per (feature, decision)
//! pair and selects among the three step decisions via a temperature-scaled
//! softmax. Log-probability gradients are exact, which lets tests validate
//! them against finite differences.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::types::Decision;

/// Feature names, in vector order. `chain_unresolved` and `answer_candidate`
/// are complements: exactly one of them fires at every step, so no single
/// feature is active in every state. That keeps credit assignment separated
/// between "still gathering facts" and "ready to answer" states.
pub const FEATURES: [&str; 7] = [
    "chain_unresolved",
    "steps_frac",
    "searches_frac",
    "coverage",
    "answer_candidate",
    "hop0_cue",
    "budget_satisfied",
];

pub const NUM_FEATURES: usize = FEATURES.len();

/// Decisions in the fixed order used for distributions and tie-breaking.
pub const DECISIONS: [Decision; 3] = [Decision::Search, Decision::Continue, Decision::Answer];

/// One step's feature values, aligned with [`FEATURES`].
pub type FeatureVec = [f64; NUM_FEATURES];

/// Softmax policy over step decisions with per-(feature, decision) weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PolicyStateRepr", into = "PolicyStateRepr")]
pub struct PolicyState {
    weights: BTreeMap<(String, Decision), f64>,
    pub temperature: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WeightEntry {
    feature: String,
    decision: Decision,
    value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PolicyStateRepr {
    temperature: f64,
    weights: Vec<WeightEntry>,
}

impl From<PolicyState> for PolicyStateRepr {
    fn from(p: PolicyState) -> Self {
        PolicyStateRepr {
            temperature: p.temperature,
            weights: p
                .weights
                .into_iter()
                .map(|((feature, decision), value)| WeightEntry { feature, decision, value })
                .collect(),
        }
    }
}

impl From<PolicyStateRepr> for PolicyState {
    fn from(r: PolicyStateRepr) -> Self {
        PolicyState {
            weights: r
                .weights
                .into_iter()
                .map(|e| ((e.feature, e.decision), e.value))
                .collect(),
            temperature: r.temperature,
        }
    }
}

impl PolicyState {
    /// Fresh policy. All weights start at zero except a built-in prior on the
    /// search-budget feature: once the episode has made at least the hinted
    /// number of searches, answering is favored and further searching is
    /// discouraged. Training reshapes or overrides this prior.
    pub fn new(temperature: f64) -> Self {
        assert!(temperature > 0.0, "temperature must be positive");
        let mut weights = BTreeMap::new();
        weights.insert(("budget_satisfied".to_string(), Decision::Answer), 1.0);
        weights.insert(("budget_satisfied".to_string(), Decision::Search), -1.0);
        PolicyState { weights, temperature }
    }

    pub fn weight(&self, feature: &str, decision: Decision) -> f64 {
        self.weights
            .get(&(feature.to_string(), decision))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set_weight(&mut self, feature: &str, decision: Decision, value: f64) {
        self.weights.insert((feature.to_string(), decision), value);
    }

    pub fn add_weight(&mut self, feature: &str, decision: Decision, delta: f64) {
        *self
            .weights
            .entry((feature.to_string(), decision))
            .or_insert(0.0) += delta;
    }

    /// Iterates stored weights in deterministic (sorted) order.
    pub fn weights(&self) -> impl Iterator<Item = (&(String, Decision), &f64)> {
        self.weights.iter()
    }

    fn logits(&self, x: &FeatureVec) -> [f64; 3] {
        let mut z = [0.0f64; 3];
        for (di, &d) in DECISIONS.iter().enumerate() {
            let mut dot = 0.0;
            for (fi, &fname) in FEATURES.iter().enumerate() {
                let w = self.weight(fname, d);
                if w != 0.0 {
                    dot += w * x[fi];
                }
            }
            z[di] = dot / self.temperature;
        }
        z
    }

    /// Probabilities over [`DECISIONS`], in that order. Always sums to 1.
    pub fn distribution(&self, x: &FeatureVec) -> [f64; 3] {
        let z = self.logits(x);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut exp = [0.0f64; 3];
        let mut sum = 0.0;
        for i in 0..3 {
            exp[i] = (z[i] - max).exp();
            sum += exp[i];
        }
        for p in &mut exp {
            *p /= sum;
        }
        exp
    }

    pub fn log_prob(&self, x: &FeatureVec, decision: Decision) -> f64 {
        let z = self.logits(x);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        let di = DECISIONS.iter().position(|&d| d == decision).unwrap();
        z[di] - lse
    }

    /// Exact gradient of `log p(decision | x)` with respect to every
    /// (feature, decision) weight: `x_f / T * (1{d' = decision} - p(d'))`.
    /// Entries with zero feature value are omitted.
    pub fn grad_log_prob(
        &self,
        x: &FeatureVec,
        decision: Decision,
    ) -> Vec<((&'static str, Decision), f64)> {
        let p = self.distribution(x);
        let mut grad = Vec::with_capacity(NUM_FEATURES * 3);
        for (fi, &fname) in FEATURES.iter().enumerate() {
            if x[fi] == 0.0 {
                continue;
            }
            for (di, &d) in DECISIONS.iter().enumerate() {
                let indicator = if d == decision { 1.0 } else { 0.0 };
                grad.push(((fname, d), x[fi] / self.temperature * (indicator - p[di])));
            }
        }
        grad
    }

    /// Samples a decision from the softmax distribution.
    pub fn sample<R: Rng>(&self, x: &FeatureVec, rng: &mut R) -> Decision {
        let p = self.distribution(x);
        let u: f64 = rng.gen_range(0.0..1.0);
        let mut acc = 0.0;
        for (di, &d) in DECISIONS.iter().enumerate() {
            acc += p[di];
            if u < acc {
                return d;
            }
        }
        *DECISIONS.last().unwrap()
    }

    /// Highest-probability decision; ties resolve to the earlier entry in
    /// [`DECISIONS`].
    pub fn greedy(&self, x: &FeatureVec) -> Decision {
        let p = self.distribution(x);
        let mut best = 0;
        for i in 1..3 {
            if p[i] > p[best] {
                best = i;
            }
        }
        DECISIONS[best]
    }
}
