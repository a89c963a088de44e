//! Risk-factor questionnaires and their vector encoding.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::KaraError;
use crate::id::Id;
use crate::store::similarity::{CharVector, Segment, VectorLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AnswerKind {
    /// Ordered levels, lowest first.
    Ordinal {
        levels: Vec<String>,
    },
    Categorical {
        vocabulary: Vec<String>,
    },
    Numeric {
        min: f64,
        max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub prompt: String,
    pub kind: AnswerKind,
    #[serde(default)]
    pub evidence_ids: Vec<Id>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskFactor {
    pub id: Id,
    pub name: String,
    pub questions: Vec<Question>,
}

impl RiskFactor {
    pub fn validate(&self) -> Result<(), KaraError> {
        let bad = |m: String| Err(KaraError::InvalidQuestionnaire(m));
        if self.name.trim().is_empty() {
            return bad("risk factor name must not be empty".into());
        }
        if self.questions.is_empty() {
            return bad(format!("risk factor {} has no questions", self.name));
        }
        let mut ids = HashSet::new();
        for q in &self.questions {
            if !ids.insert(q.id.as_str()) {
                return bad(format!("duplicate question id {}", q.id));
            }
            match &q.kind {
                AnswerKind::Ordinal { levels } if levels.len() < 2 => {
                    return bad(format!("question {}: ordinal needs at least two levels", q.id))
                }
                AnswerKind::Categorical { vocabulary } if vocabulary.is_empty() => {
                    return bad(format!("question {}: empty vocabulary", q.id))
                }
                AnswerKind::Numeric { min, max } if !(min.is_finite() && max.is_finite() && min < max) => {
                    return bad(format!("question {}: numeric range must be finite and non-empty", q.id))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> VectorLayout {
        VectorLayout {
            segments: self
                .questions
                .iter()
                .map(|q| match &q.kind {
                    AnswerKind::Categorical { vocabulary } => Segment::OneHot(vocabulary.len()),
                    _ => Segment::Scaled,
                })
                .collect(),
        }
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub id: Id,
    pub candidate: Id,
    pub risk_factor: Id,
    pub expert: String,
    pub answers: BTreeMap<String, Answer>,
    #[serde(default)]
    pub evidence_ids: Vec<Id>,
    /// LOK settled by an earlier, peer-reviewed assessment. Answer sets
    /// carrying one form the reference corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessed_lok: Option<f64>,
}

impl AnswerSet {
    pub fn answer_set_id(candidate: Id, risk_factor: Id, expert: &str) -> Id {
        Id::derive(&["answers", &candidate.to_string(), &risk_factor.to_string(), expert])
    }
}

/// Encodes a complete answer set: ordinal answers as `index / (levels − 1)`,
/// numeric answers min-max scaled by the question range (clamped), and
/// categorical answers one-hot.
pub fn encode_answers(factor: &RiskFactor, answers: &AnswerSet) -> Result<CharVector, KaraError> {
    for key in answers.answers.keys() {
        if factor.question(key).is_none() {
            return Err(KaraError::InvalidAnswer {
                question: key.clone(),
                reason: "not part of the questionnaire".into(),
            });
        }
    }
    let mut out = Vec::with_capacity(factor.layout().dim());
    for q in &factor.questions {
        let answer = answers
            .answers
            .get(&q.id)
            .ok_or_else(|| KaraError::IncompleteAnswers(q.id.clone()))?;
        let invalid = |reason: &str| KaraError::InvalidAnswer {
            question: q.id.clone(),
            reason: reason.to_string(),
        };
        match (&q.kind, answer) {
            (AnswerKind::Ordinal { levels }, Answer::Text(t)) => {
                let i = levels
                    .iter()
                    .position(|l| l == t)
                    .ok_or_else(|| invalid("unknown level"))?;
                out.push(Some(i as f64 / (levels.len() - 1) as f64));
            }
            (AnswerKind::Categorical { vocabulary }, Answer::Text(t)) => {
                let i = vocabulary
                    .iter()
                    .position(|l| l == t)
                    .ok_or_else(|| invalid("unknown option"))?;
                out.extend((0..vocabulary.len()).map(|j| Some(if j == i { 1.0 } else { 0.0 })));
            }
            (AnswerKind::Numeric { min, max }, Answer::Number(v)) if v.is_finite() => {
                out.push(Some(((v - min) / (max - min)).clamp(0.0, 1.0)));
            }
            _ => return Err(invalid("answer does not match the question kind")),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factor() -> RiskFactor {
        let q = |id: &str, kind| Question {
            id: id.into(),
            prompt: format!("{id}?"),
            kind,
            evidence_ids: vec![],
        };
        let levels = |n: &[&str]| n.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        RiskFactor {
            id: Id::from_u128(1),
            name: "toxicity".into(),
            questions: vec![
                q(
                    "data",
                    AnswerKind::Ordinal {
                        levels: levels(&["none", "some", "ample"]),
                    },
                ),
                q(
                    "source",
                    AnswerKind::Categorical {
                        vocabulary: levels(&["lab", "paper", "model", "patent"]),
                    },
                ),
                q("ld50", AnswerKind::Numeric { min: 0.0, max: 2000.0 }),
                q(
                    "analogs",
                    AnswerKind::Ordinal {
                        levels: levels(&["unknown", "few", "several", "many", "all"]),
                    },
                ),
                q(
                    "method",
                    AnswerKind::Categorical {
                        vocabulary: levels(&["assay", "simulation"]),
                    },
                ),
            ],
        }
    }

    fn answers(pairs: &[(&str, Answer)]) -> AnswerSet {
        AnswerSet {
            id: Id::from_u128(9),
            candidate: Id::from_u128(2),
            risk_factor: Id::from_u128(1),
            expert: "e1".into(),
            answers: pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            evidence_ids: vec![],
            assessed_lok: None,
        }
    }

    fn t(s: &str) -> Answer {
        Answer::Text(s.into())
    }

    #[test]
    fn hand_encoding_table() {
        let f = factor();
        f.validate().unwrap();
        let a = answers(&[
            ("data", t("some")),
            ("source", t("paper")),
            ("ld50", Answer::Number(500.0)),
            ("analogs", t("many")),
            ("method", t("assay")),
        ]);
        let v = encode_answers(&f, &a).unwrap();
        let expected = [0.5, 0.0, 1.0, 0.0, 0.0, 0.25, 0.75, 1.0, 0.0];
        assert_eq!(v, expected.iter().map(|&x| Some(x)).collect::<Vec<_>>());
        assert_eq!(f.layout().dim(), 9);
    }

    #[test]
    fn incomplete_and_invalid() {
        let f = factor();
        assert!(matches!(
            encode_answers(&f, &answers(&[("data", t("some"))])),
            Err(KaraError::IncompleteAnswers(q)) if q == "source"
        ));
        let bad = answers(&[
            ("data", t("lots")),
            ("source", t("paper")),
            ("ld50", Answer::Number(1.0)),
            ("analogs", t("many")),
            ("method", t("assay")),
        ]);
        assert!(matches!(encode_answers(&f, &bad), Err(KaraError::InvalidAnswer { .. })));
    }

    #[test]
    fn questionnaire_validation() {
        let mut f = factor();
        f.questions[1].id = "data".into();
        assert!(f.validate().is_err());
        let mut f = factor();
        f.questions[0].kind = AnswerKind::Ordinal {
            levels: vec!["only".into()],
        };
        assert!(f.validate().is_err());
        let mut f = factor();
        f.questions.clear();
        assert!(f.validate().is_err());
    }
}
