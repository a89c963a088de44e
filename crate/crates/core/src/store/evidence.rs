//! Lexical evidence ranking with curated term weights.
//!
//! A snippet's score for a question is the sum, over the distinct
//! lowercase terms the two share, of the term's frequency in the snippet
//! times the snippet's weight for that term. Curation nudges those weights
//! up (relevant) or down (irrelevant) for the shared terms.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::id::Id;

pub const MIN_TERM_WEIGHT: f64 = 0.1;
pub const MAX_TERM_WEIGHT: f64 = 10.0;
pub const RELEVANT_FACTOR: f64 = 1.1;
pub const IRRELEVANT_FACTOR: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub id: Id,
    pub text: String,
    pub source: String,
    /// Terms absent from the map weigh 1.0.
    #[serde(default)]
    pub term_weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Relevant,
    Irrelevant,
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl EvidenceItem {
    pub fn new(id: Id, text: impl Into<String>, source: impl Into<String>) -> Self {
        Self {
            id,
            text: text.into(),
            source: source.into(),
            term_weights: BTreeMap::new(),
        }
    }

    pub fn weight(&self, term: &str) -> f64 {
        self.term_weights.get(term).copied().unwrap_or(1.0)
    }

    fn shared_terms(&self, question: &str) -> BTreeSet<String> {
        let q: BTreeSet<String> = tokenize(question).into_iter().collect();
        tokenize(&self.text).into_iter().filter(|t| q.contains(t)).collect()
    }

    pub fn score(&self, question: &str) -> f64 {
        let q: BTreeSet<String> = tokenize(question).into_iter().collect();
        let mut tf: BTreeMap<String, usize> = BTreeMap::new();
        for t in tokenize(&self.text) {
            if q.contains(&t) {
                *tf.entry(t).or_default() += 1;
            }
        }
        tf.iter().map(|(t, &n)| n as f64 * self.weight(t)).sum()
    }

    /// Applies one curation verdict for `question` in place.
    pub fn curate(&mut self, question: &str, verdict: Verdict) {
        let factor = match verdict {
            Verdict::Relevant => RELEVANT_FACTOR,
            Verdict::Irrelevant => IRRELEVANT_FACTOR,
        };
        for term in self.shared_terms(question) {
            let w = (self.weight(&term) * factor).clamp(MIN_TERM_WEIGHT, MAX_TERM_WEIGHT);
            self.term_weights.insert(term, w);
        }
    }
}

/// Ranks `items` for `question`; zero-score items are omitted, ties are
/// broken by ascending id, and at most `k` items are returned.
pub fn rank_evidence<'a>(
    items: impl IntoIterator<Item = &'a EvidenceItem>,
    question: &str,
    k: usize,
) -> Vec<(&'a EvidenceItem, f64)> {
    let mut scored: Vec<(&EvidenceItem, f64)> = items
        .into_iter()
        .map(|item| (item, item.score(question)))
        .filter(|(_, s)| *s > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.id.cmp(&b.0.id)));
    scored.truncate(k);
    scored
}
