//! Adjudication sessions: SMEs answer one merit question per candidate.
//!
//! The session header and the individual labels are persisted separately
//! (labels have a stable id per session, candidate and expert, so a relabel
//! supersedes the earlier line). [`AdjudicationSession`] is the assembled
//! view.

use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::TriageError;
use crate::id::{Id, Timestamp};

pub const DEFAULT_QUESTION: &str = "Does this candidate merit further exploration?";

pub fn default_choices() -> Vec<String> {
    ["No", "Uncertain", "Yes"].map(String::from).to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: Id,
    pub dataset_id: Id,
    pub question: String,
    /// Ordered from least to most favourable.
    pub choices: Vec<String>,
    pub status: SessionStatus,
}

impl SessionInfo {
    pub fn new(
        id: Id,
        dataset_id: Id,
        question: Option<String>,
        choices: Option<Vec<String>>,
    ) -> Result<Self, TriageError> {
        let choices = choices.unwrap_or_else(default_choices);
        if choices.len() < 2 {
            return Err(TriageError::InvalidChoices("at least two choices are required".into()));
        }
        let distinct: HashSet<&String> = choices.iter().collect();
        if distinct.len() != choices.len() {
            return Err(TriageError::InvalidChoices("choices must be distinct".into()));
        }
        Ok(Self {
            id,
            dataset_id,
            question: question.unwrap_or_else(|| DEFAULT_QUESTION.to_string()),
            choices,
            status: SessionStatus::Open,
        })
    }

    pub fn choice_index(&self, choice: &str) -> Option<usize> {
        self.choices.iter().position(|c| c == choice)
    }

    /// Soft training target of a choice: its index scaled to `[0, 1]`, so
    /// the defaults map to No 0.0, Uncertain 0.5, Yes 1.0.
    pub fn target(&self, choice: &str) -> Option<f64> {
        self.choice_index(choice)
            .map(|i| i as f64 / (self.choices.len() - 1) as f64)
    }

    /// The most favourable choice, which counts as acceptance.
    pub fn accepting_choice(&self) -> &str {
        self.choices.last().map(String::as_str).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub id: Id,
    pub session_id: Id,
    pub candidate: Id,
    pub expert: String,
    pub choice: String,
    pub at: Timestamp,
}

impl Label {
    pub fn label_id(session: Id, candidate: Id, expert: &str) -> Id {
        Id::derive(&["label", &session.to_string(), &candidate.to_string(), expert])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicationSession {
    #[serde(flatten)]
    pub info: SessionInfo,
    /// One entry per (candidate, expert), in first-answer order.
    pub labels: Vec<Label>,
}

impl AdjudicationSession {
    pub fn new(info: SessionInfo) -> Self {
        Self {
            info,
            labels: Vec::new(),
        }
    }

    pub fn id(&self) -> Id {
        self.info.id
    }

    pub fn is_open(&self) -> bool {
        self.info.status == SessionStatus::Open
    }

    /// Validates and stores one answer. `members` is the member set of the
    /// session's dataset. Returns the stored label.
    pub fn record(
        &mut self,
        members: &HashSet<Id>,
        candidate: Id,
        expert: &str,
        choice: &str,
        at: Timestamp,
    ) -> Result<Label, TriageError> {
        let label = self.check_label(members, candidate, expert, choice, at)?;
        match self.labels.iter_mut().find(|l| l.id == label.id) {
            Some(existing) => *existing = label.clone(),
            None => self.labels.push(label.clone()),
        }
        Ok(label)
    }

    /// Builds the label `record` would store without storing it.
    pub fn check_label(
        &self,
        members: &HashSet<Id>,
        candidate: Id,
        expert: &str,
        choice: &str,
        at: Timestamp,
    ) -> Result<Label, TriageError> {
        if !self.is_open() {
            return Err(TriageError::SessionClosed(self.id()));
        }
        if !members.contains(&candidate) {
            return Err(TriageError::UnknownCandidate(candidate));
        }
        if self.info.choice_index(choice).is_none() {
            return Err(TriageError::UnknownChoice(choice.to_string()));
        }
        if expert.trim().is_empty() {
            return Err(TriageError::InvalidChoices("expert id must not be empty".into()));
        }
        Ok(Label {
            id: Label::label_id(self.id(), candidate, expert),
            session_id: self.id(),
            candidate,
            expert: expert.to_string(),
            choice: choice.to_string(),
            at,
        })
    }

    pub fn close(&mut self) {
        self.info.status = SessionStatus::Closed;
    }

    /// Mean soft target per candidate over all experts' labels.
    pub fn targets(&self) -> BTreeMap<Id, f64> {
        let mut sums: BTreeMap<Id, (f64, usize)> = BTreeMap::new();
        for l in &self.labels {
            if let Some(t) = self.info.target(&l.choice) {
                let e = sums.entry(l.candidate).or_default();
                e.0 += t;
                e.1 += 1;
            }
        }
        sums.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub total: usize,
    /// Label counts in choice order.
    pub counts: IndexMap<String, usize>,
    pub acceptance_fraction: f64,
}

/// Share of labels carrying the accepting choice; every other choice,
/// Uncertain included, counts as not accepted.
pub fn acceptance_fraction(session: &AdjudicationSession) -> Result<SessionMetrics, TriageError> {
    if session.labels.is_empty() {
        return Err(TriageError::NoLabels);
    }
    let mut counts: IndexMap<String, usize> = session.info.choices.iter().map(|c| (c.clone(), 0)).collect();
    for l in &session.labels {
        *counts.entry(l.choice.clone()).or_default() += 1;
    }
    let total = session.labels.len();
    let accepted = counts[session.info.accepting_choice()];
    Ok(SessionMetrics {
        total,
        acceptance_fraction: accepted as f64 / total as f64,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub candidate_id: Id,
    pub expert_id: String,
    pub choice: String,
}

/// Parses a `candidate_id,expert_id,choice` batch file (header required).
pub fn parse_label_csv(text: &str) -> Result<Vec<LabelRow>, TriageError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| TriageError::InvalidBatch(format!("row {}: {e}", i + 1))))
        .collect()
}

pub fn write_label_csv(rows: &[LabelRow]) -> String {
    let mut out = String::from("candidate_id,expert_id,choice\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.candidate_id, r.expert_id, r.choice));
    }
    out
}
