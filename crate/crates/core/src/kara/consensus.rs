//! Consensus comparisons across experts as a binary IP.
//!
//! Each unordered pair `{lo, hi}` (ordered by id) that received votes gets
//! one of four choices, numbered 0 `lo ≻ hi`, 1 `hi ≻ lo`, 2 `lo ≈ hi`,
//! 3 none. A choice costs the pair's votes that disagree with it. The
//! selected relations must contract to an acyclic strict order; cycles are
//! cut lazily with `Σ_{edges in cycle} y ≤ len − 1`.
//!
//! Among optimal selections the one whose choice sequence (pairs in
//! order) is lexicographically smallest wins. The solver returns the
//! lexicographically smallest optimal 0/1 vector, so each pair's four
//! variables are laid out in reverse choice order: variable `4p + 3 − k`
//! stands for choice `k` of pair `p`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::comparisons::{ConsistencyState, Judgement, LokRelation};
use super::KaraError;
use crate::id::Id;
use crate::optim::{BranchAndBound, Constraint, IntegerProgram, LinearProgram, Relation, DEFAULT_NODE_LIMIT};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairVotes {
    /// Votes for `lo ≻ hi`, `hi ≻ lo` and `lo ≈ hi`.
    pub lo_more: u64,
    pub hi_more: u64,
    pub equal: u64,
}

impl PairVotes {
    pub fn total(&self) -> u64 {
        self.lo_more + self.hi_more + self.equal
    }

    /// Disagreeing votes for choice `k`.
    pub fn cost(&self, k: usize) -> u64 {
        self.total()
            - match k {
                0 => self.lo_more,
                1 => self.hi_more,
                2 => self.equal,
                _ => 0,
            }
    }
}

pub const NO_RELATION: usize = 3;

/// Vote tallies keyed by `(lo, hi)` with `lo < hi`.
pub fn tally(judgements: &[Judgement]) -> Result<BTreeMap<(Id, Id), PairVotes>, KaraError> {
    let mut votes: BTreeMap<(Id, Id), PairVotes> = BTreeMap::new();
    for j in judgements {
        if j.a == j.b {
            return Err(KaraError::InvalidComparison(
                "a candidate cannot be compared with itself".into(),
            ));
        }
        let (lo, hi) = if j.a < j.b { (j.a, j.b) } else { (j.b, j.a) };
        let v = votes.entry((lo, hi)).or_default();
        match (j.relation, j.a == lo) {
            (LokRelation::AboutEqual, _) => v.equal += 1,
            (LokRelation::MoreLok, true) => v.lo_more += 1,
            (LokRelation::MoreLok, false) => v.hi_more += 1,
        }
    }
    Ok(votes)
}

/// The relation selected by choice `k` for pair `(lo, hi)`.
pub fn choice_judgement(lo: Id, hi: Id, k: usize) -> Option<Judgement> {
    match k {
        0 => Some(Judgement::new(lo, hi, LokRelation::MoreLok)),
        1 => Some(Judgement::new(hi, lo, LokRelation::MoreLok)),
        2 => Some(Judgement::new(lo, hi, LokRelation::AboutEqual)),
        _ => None,
    }
}

fn choice_of(lo: Id, j: &Judgement) -> usize {
    match j.relation {
        LokRelation::AboutEqual => 2,
        LokRelation::MoreLok if j.a == lo => 0,
        LokRelation::MoreLok => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusOutcome {
    /// Selected relations in pair order.
    pub selected: Vec<Judgement>,
    /// Chosen option per pair, `(lo, hi, choice)`.
    pub choices: Vec<(Id, Id, usize)>,
    pub cost: u64,
    pub nodes: usize,
    pub cuts: usize,
}

/// First contradiction met when the selection is added in pair order,
/// as the set of `(pair index, choice)` edges forming the cycle.
fn find_cycle(pairs: &[(Id, Id)], index: &BTreeMap<(Id, Id), usize>, chosen: &[usize]) -> Option<Vec<(usize, usize)>> {
    let mut state = ConsistencyState::new();
    for (p, &(lo, hi)) in pairs.iter().enumerate() {
        let Some(j) = choice_judgement(lo, hi, chosen[p]) else {
            continue;
        };
        if let Err(KaraError::Contradiction { explanation, .. }) = state.add(j) {
            let mut edges = vec![(p, chosen[p])];
            for s in &explanation.steps {
                let key = if s.a < s.b { (s.a, s.b) } else { (s.b, s.a) };
                let q = index[&key];
                edges.push((q, choice_of(key.0, s)));
            }
            return Some(edges);
        }
    }
    None
}

pub fn consensus_comparisons(judgements: &[Judgement]) -> Result<ConsensusOutcome, KaraError> {
    consensus_with_limit(judgements, DEFAULT_NODE_LIMIT)
}

pub fn consensus_with_limit(judgements: &[Judgement], node_limit: usize) -> Result<ConsensusOutcome, KaraError> {
    if judgements.is_empty() {
        return Err(KaraError::InvalidComparison(
            "at least one comparison is required".into(),
        ));
    }
    let votes = tally(judgements)?;
    let pairs: Vec<(Id, Id)> = votes.keys().copied().collect();
    let index: BTreeMap<(Id, Id), usize> = pairs.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let var = |p: usize, k: usize| 4 * p + 3 - k;
    let n = 4 * pairs.len();

    let mut lp = LinearProgram::new(n);
    for (p, key) in pairs.iter().enumerate() {
        for k in 0..4 {
            lp.objective[var(p, k)] = votes[key].cost(k) as f64;
        }
        let terms: Vec<(usize, f64)> = (0..4).map(|k| (var(p, k), 1.0)).collect();
        lp.add_constraint(Constraint::sparse(n, &terms, Relation::Eq, 1.0));
    }
    let ip = IntegerProgram::binary(lp);

    let decode = |x: &[f64]| -> Vec<usize> {
        (0..pairs.len())
            .map(|p| (0..4).find(|&k| x[var(p, k)] > 0.5).unwrap_or(NO_RELATION))
            .collect()
    };
    let (sol, stats) = BranchAndBound::new()
        .node_limit(node_limit)
        .lazy_constraints(|x| {
            let chosen = decode(x);
            match find_cycle(&pairs, &index, &chosen) {
                Some(edges) => {
                    let terms: Vec<(usize, f64)> = edges.iter().map(|&(p, k)| (var(p, k), 1.0)).collect();
                    vec![Constraint::sparse(n, &terms, Relation::Le, edges.len() as f64 - 1.0)]
                }
                None => Vec::new(),
            }
        })
        .solve(&ip)?;
    if !sol.is_optimal() {
        return Err(KaraError::Optim(crate::optim::OptimError::NumericalBreakdown(
            "consensus IP has no optimal solution".into(),
        )));
    }

    let chosen = decode(&sol.x);
    let mut outcome = ConsensusOutcome {
        selected: Vec::new(),
        choices: Vec::new(),
        cost: 0,
        nodes: stats.nodes,
        cuts: stats.lazy_constraints,
    };
    for (p, &(lo, hi)) in pairs.iter().enumerate() {
        let k = chosen[p];
        outcome.cost += votes[&(lo, hi)].cost(k);
        outcome.choices.push((lo, hi, k));
        outcome.selected.extend(choice_judgement(lo, hi, k));
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(n: u128) -> Id {
        Id::from_u128(n)
    }

    fn more(a: u128, b: u128) -> Judgement {
        Judgement::new(id(a), id(b), LokRelation::MoreLok)
    }

    #[test]
    fn single_comparison() {
        let out = consensus_comparisons(&[more(1, 2)]).unwrap();
        assert_eq!(out.selected, vec![more(1, 2)]);
        assert_eq!(out.cost, 0);
    }

    #[test]
    fn majority_wins() {
        let out = consensus_comparisons(&[more(2, 1), more(2, 1), more(1, 2)]).unwrap();
        assert_eq!(out.selected, vec![more(2, 1)]);
        assert_eq!(out.cost, 1);
    }

    #[test]
    fn tie_prefers_lower_choice_index() {
        let out = consensus_comparisons(&[more(2, 1), more(1, 2)]).unwrap();
        assert_eq!(out.selected, vec![more(1, 2)]);
        assert_eq!(out.cost, 1);
    }

    #[test]
    fn cyclic_majorities() {
        let js = [
            more(1, 2),
            more(1, 2),
            more(2, 3),
            more(2, 3),
            more(3, 1),
            more(3, 1),
            more(2, 1),
        ];
        let out = consensus_comparisons(&js).unwrap();
        // Pair 1-2 costs at least 1 either way. Reversing it to 2 ≻ 1 costs
        // 2 and leaves 2 ≻ 3 ≻ 1 acyclic; every other repair costs 3.
        assert_eq!(out.cost, 2);
        assert!(out.selected.contains(&more(2, 1)));
        assert!(out.cuts >= 1);
    }
}
