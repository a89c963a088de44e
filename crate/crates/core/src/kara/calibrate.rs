//! LOK scale calibration: the smallest total (L1) change to the reference
//! LOK values that satisfies every comparison.
//!
//! For candidates `c` with reference value `r_c` the LP has variables
//! `x_c, d_c ∈ [0, 1]` and reads
//!
//! ```text
//! minimize  Σ d_c
//! s.t.      d_c − x_c ≥ −r_c,   d_c + x_c ≥ r_c
//!           x_a − x_b ≥ ε            for a ≻ b
//!           −ε ≤ x_a − x_b ≤ ε       for a ≈ b
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::comparisons::{contract, longest_strict_chain, Judgement, LokRelation};
use super::KaraError;
use crate::id::{Id, Timestamp};
use crate::optim::{solve_lp, Constraint, LinearProgram, LpStatus, Relation, FEASIBILITY_TOL};

pub const DEFAULT_EPSILON: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "expert", rename_all = "lowercase")]
pub enum ScaleScope {
    Expert(String),
    Global,
}

impl ScaleScope {
    pub fn key(&self) -> String {
        match self {
            ScaleScope::Expert(e) => format!("expert:{e}"),
            ScaleScope::Global => "global".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub values: BTreeMap<Id, f64>,
    pub total_adjustment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LokScale {
    pub id: Id,
    pub risk_factor: Id,
    pub scope: ScaleScope,
    pub values: BTreeMap<Id, f64>,
    /// Reference LOK snapshot the calibration started from.
    pub reference: BTreeMap<Id, f64>,
    pub comparisons: Vec<Judgement>,
    pub epsilon: f64,
    pub total_adjustment: f64,
    pub created: Timestamp,
}

impl LokScale {
    pub fn scale_id(risk_factor: Id, scope: &ScaleScope) -> Id {
        Id::derive(&["scale", &risk_factor.to_string(), &scope.key()])
    }

    pub fn lok(&self, candidate: Id) -> Option<f64> {
        self.values.get(&candidate).copied()
    }
}

/// Builds the calibration LP. Variable `2i` is `x` and `2i + 1` is `d` for
/// the `i`-th candidate of `order`.
pub fn calibration_lp(
    reference: &BTreeMap<Id, f64>,
    comparisons: &[Judgement],
    epsilon: f64,
) -> (LinearProgram, Vec<Id>) {
    let order: Vec<Id> = reference.keys().copied().collect();
    let index: BTreeMap<Id, usize> = order.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let n = 2 * order.len();
    let mut lp = LinearProgram::new(n);
    for (i, c) in order.iter().enumerate() {
        let r = reference[c];
        lp.objective[2 * i + 1] = 1.0;
        lp.add_constraint(Constraint::sparse(
            n,
            &[(2 * i + 1, 1.0), (2 * i, -1.0)],
            Relation::Ge,
            -r,
        ));
        lp.add_constraint(Constraint::sparse(
            n,
            &[(2 * i + 1, 1.0), (2 * i, 1.0)],
            Relation::Ge,
            r,
        ));
    }
    for j in comparisons {
        let (a, b) = (2 * index[&j.a], 2 * index[&j.b]);
        let diff = [(a, 1.0), (b, -1.0)];
        match j.relation {
            LokRelation::MoreLok => lp.add_constraint(Constraint::sparse(n, &diff, Relation::Ge, epsilon)),
            LokRelation::AboutEqual => {
                lp.add_constraint(Constraint::sparse(n, &diff, Relation::Le, epsilon));
                lp.add_constraint(Constraint::sparse(n, &diff, Relation::Ge, -epsilon));
            }
        }
    }
    (lp, order)
}

/// Solves the calibration LP. Every candidate named in `comparisons` needs a
/// reference value. A strict chain of `m` steps needs `m · ε` of room
/// strictly inside `[0, 1]`, so chains with `m · ε ≥ 1` are refused up front
/// as saturated, as are instances whose LP turns out infeasible.
pub fn calibrate_scale(
    reference: &BTreeMap<Id, f64>,
    comparisons: &[Judgement],
    epsilon: f64,
) -> Result<Calibration, KaraError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(KaraError::InvalidConfig(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if let Some((c, r)) = reference.iter().find(|(_, r)| !(0.0..=1.0).contains(*r)) {
        return Err(KaraError::InvalidConfig(format!(
            "reference LOK {r} of {c} is outside [0, 1]"
        )));
    }
    for j in comparisons {
        for c in [j.a, j.b] {
            if !reference.contains_key(&c) {
                return Err(KaraError::UnknownCandidate(c));
            }
        }
    }
    if contract(comparisons).is_none() {
        return Err(KaraError::InvalidComparison(
            "comparison set is not internally consistent".into(),
        ));
    }
    let chain = longest_strict_chain(comparisons);
    let saturated = |max_chain: usize| KaraError::ScaleSaturation {
        max_chain,
        epsilon,
        suggested_epsilon: if max_chain == 0 {
            epsilon
        } else {
            1.0 / (max_chain as f64 + 1.0)
        },
    };
    if chain as f64 * epsilon >= 1.0 - 1e-9 {
        return Err(saturated(chain));
    }

    let (lp, order) = calibration_lp(reference, comparisons, epsilon);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(saturated(chain)),
        LpStatus::Unbounded => {
            return Err(KaraError::Optim(crate::optim::OptimError::NumericalBreakdown(
                "calibration LP reported unbounded".into(),
            )))
        }
    }
    let values: BTreeMap<Id, f64> = order
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, sol.x[2 * i].clamp(0.0, 1.0)))
        .collect();
    let total_adjustment = order.iter().map(|c| (values[c] - reference[c]).abs()).sum();
    let cal = Calibration {
        values,
        total_adjustment,
    };
    verify_scale(&cal.values, comparisons, epsilon)?;
    Ok(cal)
}

/// Re-checks a solved scale against the raw comparisons.
pub fn verify_scale(values: &BTreeMap<Id, f64>, comparisons: &[Judgement], epsilon: f64) -> Result<(), KaraError> {
    for j in comparisons {
        let d = values[&j.a] - values[&j.b];
        let ok = match j.relation {
            LokRelation::MoreLok => d >= epsilon - FEASIBILITY_TOL,
            LokRelation::AboutEqual => d.abs() <= epsilon + FEASIBILITY_TOL,
        };
        if !ok {
            return Err(KaraError::Optim(crate::optim::OptimError::NumericalBreakdown(format!(
                "calibrated scale violates {j}"
            ))));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u128) -> Id {
        Id::from_u128(n)
    }

    #[test]
    fn satisfied_comparisons_change_nothing() {
        let r = BTreeMap::from([(id(1), 0.7), (id(2), 0.3)]);
        let cal = calibrate_scale(&r, &[Judgement::new(id(1), id(2), LokRelation::MoreLok)], 0.02).unwrap();
        assert!(cal.total_adjustment.abs() < 1e-9);
        assert!((cal.values[&id(1)] - 0.7).abs() < 1e-9);
    }

    #[test]
    fn tied_reference_split() {
        let r = BTreeMap::from([(id(1), 0.3), (id(2), 0.3)]);
        let cal = calibrate_scale(&r, &[Judgement::new(id(1), id(2), LokRelation::MoreLok)], 0.02).unwrap();
        assert!((cal.total_adjustment - 0.02).abs() < 1e-9);
        assert!((cal.values[&id(1)] - cal.values[&id(2)] - 0.02).abs() < 1e-9);
    }

    #[test]
    fn equivalence_pulls_together() {
        let r = BTreeMap::from([(id(1), 0.9), (id(2), 0.1)]);
        let cal = calibrate_scale(&r, &[Judgement::new(id(1), id(2), LokRelation::AboutEqual)], 0.02).unwrap();
        assert!((cal.total_adjustment - 0.78).abs() < 1e-9);
    }

    #[test]
    fn long_chain_saturates() {
        let r: BTreeMap<Id, f64> = (0..51).map(|i| (id(i), 0.5)).collect();
        let chain: Vec<Judgement> = (0..50)
            .map(|i| Judgement::new(id(i), id(i + 1), LokRelation::MoreLok))
            .collect();
        match calibrate_scale(&r, &chain, 0.02) {
            Err(KaraError::ScaleSaturation { max_chain, .. }) => assert_eq!(max_chain, 50),
            other => panic!("{other:?}"),
        }
        assert!(calibrate_scale(&r, &chain[..40], 0.02).is_ok());
    }

    #[test]
    fn unknown_candidate() {
        let r = BTreeMap::from([(id(1), 0.3)]);
        assert_eq!(
            calibrate_scale(&r, &[Judgement::new(id(1), id(2), LokRelation::MoreLok)], 0.02),
            Err(KaraError::UnknownCandidate(id(2)))
        );
    }
}
