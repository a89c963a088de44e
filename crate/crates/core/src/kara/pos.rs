//! POS submissions, peer-review consensus and the per-candidate rollup.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::horn::{allowed_pos_region, HornPlotConfig};
use super::KaraError;
use crate::id::{Id, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosAssessment {
    pub id: Id,
    pub expert: String,
    pub candidate: Id,
    pub risk_factor: Id,
    pub pos: f64,
    pub lok_used: f64,
    pub valid: bool,
    /// The admissible intervals the submission fell outside of.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violated: Vec<(f64, f64)>,
    pub at: Timestamp,
}

impl PosAssessment {
    pub fn assessment_id(expert: &str, candidate: Id, risk_factor: Id) -> Id {
        Id::derive(&["pos", expert, &candidate.to_string(), &risk_factor.to_string()])
    }
}

/// Validates `pos` against the region at the expert's own LOK. Out-of-region
/// values are still returned (flagged invalid) so they can be recorded.
pub fn submit_pos(
    expert: &str,
    candidate: Id,
    risk_factor: Id,
    pos: f64,
    expert_lok: Option<f64>,
    config: &HornPlotConfig,
    at: Timestamp,
) -> Result<PosAssessment, KaraError> {
    let lok = expert_lok.ok_or(KaraError::UnknownCandidate(candidate))?;
    if !(0.0..=1.0).contains(&pos) {
        return Err(KaraError::InvalidPos(pos));
    }
    let region = allowed_pos_region(lok, config)?;
    let valid = region.contains(pos);
    Ok(PosAssessment {
        id: PosAssessment::assessment_id(expert, candidate, risk_factor),
        expert: expert.to_string(),
        candidate,
        risk_factor,
        pos,
        lok_used: lok,
        valid,
        violated: if valid { Vec::new() } else { region.intervals },
        at,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalPos {
    pub id: Id,
    pub candidate: Id,
    pub risk_factor: Id,
    pub global_lok: f64,
    pub median: f64,
    pub final_pos: f64,
    pub n_experts: usize,
    pub projected: bool,
}

impl FinalPos {
    pub fn final_id(candidate: Id, risk_factor: Id) -> Id {
        Id::derive(&["final-pos", &candidate.to_string(), &risk_factor.to_string()])
    }
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Median of the valid submissions, projected onto the region at the global
/// LOK.
pub fn consensus_pos(
    assessments: &[PosAssessment],
    global_lok: f64,
    config: &HornPlotConfig,
) -> Result<FinalPos, KaraError> {
    let valid: Vec<&PosAssessment> = assessments.iter().filter(|a| a.valid).collect();
    let first = valid.first().ok_or(KaraError::NoValidAssessments)?;
    let mut values: Vec<f64> = valid.iter().map(|a| a.pos).collect();
    let m = median(&mut values).ok_or(KaraError::NoValidAssessments)?;
    let region = allowed_pos_region(global_lok, config)?;
    let final_pos = region.project(m);
    Ok(FinalPos {
        id: FinalPos::final_id(first.candidate, first.risk_factor),
        candidate: first.candidate,
        risk_factor: first.risk_factor,
        global_lok,
        median: m,
        final_pos,
        n_experts: valid.len(),
        projected: final_pos != m,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RollupMode {
    #[default]
    Product,
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosRollup {
    pub overall: f64,
    pub mode: RollupMode,
    pub factors: BTreeMap<String, f64>,
}

pub fn candidate_pos_rollup(factors: &BTreeMap<String, f64>, mode: RollupMode) -> Result<PosRollup, KaraError> {
    if factors.is_empty() {
        return Err(KaraError::NoValidAssessments);
    }
    let overall = match mode {
        RollupMode::Product => factors.values().product(),
        RollupMode::Min => factors.values().copied().fold(1.0, f64::min),
    };
    Ok(PosRollup {
        overall,
        mode,
        factors: factors.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assessment(pos: f64, valid: bool) -> PosAssessment {
        PosAssessment {
            id: Id::from_u128(1),
            expert: "e".into(),
            candidate: Id::from_u128(2),
            risk_factor: Id::from_u128(3),
            pos,
            lok_used: 0.0,
            valid,
            violated: vec![],
            at: Timestamp::from_unix(0),
        }
    }

    #[test]
    fn submissions() {
        let c = HornPlotConfig::default();
        let at = Timestamp::from_unix(0);
        let (cand, f) = (Id::from_u128(2), Id::from_u128(3));
        assert!(submit_pos("e", cand, f, 0.5, Some(0.0), &c, at).unwrap().valid);
        let bad = submit_pos("e", cand, f, 0.5, Some(1.0), &c, at).unwrap();
        assert!(!bad.valid);
        assert_eq!(bad.violated.len(), 2);
        assert!(!submit_pos("e", cand, f, 0.9, Some(0.5), &c, at).unwrap().valid);
        assert_eq!(
            submit_pos("e", cand, f, 0.5, None, &c, at),
            Err(KaraError::UnknownCandidate(cand))
        );
    }

    #[test]
    fn consensus_examples() {
        let c = HornPlotConfig::default();
        let one = consensus_pos(&[assessment(0.45, true)], 0.0, &c).unwrap();
        assert_eq!((one.final_pos, one.projected), (0.45, false));
        let three: Vec<_> = [0.4, 0.5, 0.6].map(|p| assessment(p, true)).to_vec();
        assert_eq!(consensus_pos(&three, 0.0, &c).unwrap().final_pos, 0.5);
        let two = [assessment(0.55, true), assessment(0.6, true), assessment(0.01, false)];
        let out = consensus_pos(&two, 1.0, &c).unwrap();
        assert!((out.median - 0.575).abs() < 1e-12);
        assert!((out.final_pos - 0.95).abs() < 1e-12);
        assert!(out.projected);
        assert_eq!(out.n_experts, 2);
        assert_eq!(
            consensus_pos(&[assessment(0.5, false)], 0.0, &c),
            Err(KaraError::NoValidAssessments)
        );
    }

    #[test]
    fn rollups() {
        let f =
            |v: &[f64]| -> BTreeMap<String, f64> { v.iter().enumerate().map(|(i, &x)| (format!("f{i}"), x)).collect() };
        assert_eq!(
            candidate_pos_rollup(&f(&[0.8]), RollupMode::Product).unwrap().overall,
            0.8
        );
        assert_eq!(
            candidate_pos_rollup(&f(&[1.0, 1.0, 0.5]), RollupMode::Product)
                .unwrap()
                .overall,
            0.5
        );
        assert!(
            (candidate_pos_rollup(&f(&[0.9, 0.8, 0.5]), RollupMode::Product)
                .unwrap()
                .overall
                - 0.36)
                .abs()
                < 1e-12
        );
        assert_eq!(
            candidate_pos_rollup(&f(&[0.9, 0.8, 0.5]), RollupMode::Min)
                .unwrap()
                .overall,
            0.5
        );
        assert!(candidate_pos_rollup(&f(&[]), RollupMode::Product).is_err());
    }
}
