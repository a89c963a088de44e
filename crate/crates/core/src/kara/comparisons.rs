//! Pairwise LOK comparisons and per-expert consistency.
//!
//! The stated relations form a mixed graph: `a ≻ b` is a directed edge and
//! `a ≈ b` an undirected one. In the closure, `x ≻ y` holds exactly when a
//! path from `x` to `y` uses at least one directed edge, and `x ≈ y` when an
//! undirected-only path joins them. A set is contradictory when some
//! candidate ends up strictly above itself, which covers both a `≻` cycle
//! and a pair that is both `≻` and `≈`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::KaraError;
use crate::id::{Id, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LokRelation {
    /// The first candidate has more LOK.
    MoreLok,
    /// About equal LOK.
    AboutEqual,
}

impl LokRelation {
    pub fn symbol(self) -> &'static str {
        match self {
            LokRelation::MoreLok => "≻",
            LokRelation::AboutEqual => "≈",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Judgement {
    pub a: Id,
    pub b: Id,
    pub relation: LokRelation,
}

impl Judgement {
    pub fn new(a: Id, b: Id, relation: LokRelation) -> Self {
        Self { a, b, relation }
    }
}

impl fmt::Display for Judgement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.a, self.relation.symbol(), self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub id: Id,
    pub risk_factor: Id,
    pub expert: String,
    pub a: Id,
    pub b: Id,
    pub relation: LokRelation,
    pub at: Timestamp,
}

impl PairwiseComparison {
    pub fn judgement(&self) -> Judgement {
        Judgement::new(self.a, self.b, self.relation)
    }
}

/// The derivation that makes a new judgement contradictory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub rejected: Judgement,
    /// Consecutive stated relations along the offending path.
    pub steps: Vec<Judgement>,
}

impl Explanation {
    /// Renders the chain as `x ≻ y ≈ z`, with each step oriented along the
    /// path.
    pub fn chain(&self) -> String {
        let mut out = String::new();
        let Some(first) = self.steps.first() else {
            return out;
        };
        out.push_str(&first.a.to_string());
        for s in &self.steps {
            out.push_str(&format!(" {} {}", s.relation.symbol(), s.b));
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConsistencyState {
    /// Outgoing stated edges; `≈` edges are stored in both directions.
    edges: BTreeMap<Id, BTreeSet<(Id, LokRelation)>>,
    accepted: Vec<Judgement>,
}

impl ConsistencyState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replays judgements already known to be consistent.
    pub fn from_accepted(judgements: impl IntoIterator<Item = Judgement>) -> Result<Self, KaraError> {
        let mut s = Self::new();
        for j in judgements {
            s.add(j)?;
        }
        Ok(s)
    }

    pub fn accepted(&self) -> &[Judgement] {
        &self.accepted
    }

    /// Shortest path from `from` to `to` over stated edges (neighbours in
    /// ascending id order), returned as oriented steps. `None` if `to` is
    /// unreachable.
    fn path(&self, from: Id, to: Id) -> Option<Vec<Judgement>> {
        let mut prev: BTreeMap<Id, (Id, LokRelation)> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        let mut seen = BTreeSet::from([from]);
        while let Some(x) = queue.pop_front() {
            if x == to {
                let mut steps = Vec::new();
                let mut cur = to;
                while cur != from {
                    let (p, rel) = prev[&cur];
                    steps.push(Judgement::new(p, cur, rel));
                    cur = p;
                }
                steps.reverse();
                return Some(steps);
            }
            for &(y, rel) in self.edges.get(&x).into_iter().flatten() {
                if seen.insert(y) {
                    prev.insert(y, (x, rel));
                    queue.push_back(y);
                }
            }
        }
        None
    }

    /// Checks `j` against the current closure without recording it.
    pub fn check(&self, j: Judgement) -> Result<(), KaraError> {
        if j.a == j.b {
            return Err(KaraError::InvalidComparison(
                "a candidate cannot be compared with itself".into(),
            ));
        }
        let contradiction = |steps: Vec<Judgement>| {
            let e = Explanation { rejected: j, steps };
            KaraError::Contradiction {
                chain: e.chain(),
                explanation: Box::new(e),
            }
        };
        match j.relation {
            // a ≻ b contradicts any path b ⇝ a: either it already contains a
            // strict step (a cycle) or it is all ≈ (a pair both ≻ and ≈).
            LokRelation::MoreLok => match self.path(j.b, j.a) {
                Some(steps) => Err(contradiction(steps)),
                None => Ok(()),
            },
            LokRelation::AboutEqual => {
                for (x, y) in [(j.a, j.b), (j.b, j.a)] {
                    if let Some(steps) = self.path(x, y) {
                        if steps.iter().any(|s| s.relation == LokRelation::MoreLok) {
                            return Err(contradiction(steps));
                        }
                        // Already equivalent through ≈ steps only.
                        return Ok(());
                    }
                }
                Ok(())
            }
        }
    }

    pub fn add(&mut self, j: Judgement) -> Result<(), KaraError> {
        self.check(j)?;
        self.edges.entry(j.a).or_default().insert((j.b, j.relation));
        if j.relation == LokRelation::AboutEqual {
            self.edges.entry(j.b).or_default().insert((j.a, j.relation));
        }
        self.accepted.push(j);
        Ok(())
    }
}

/// Equivalence classes of the `≈` judgements and the strict edges between
/// classes. Returns `None` if the strict edges close a cycle (including a
/// strict edge inside one class).
pub fn contract(judgements: &[Judgement]) -> Option<(BTreeMap<Id, Id>, BTreeSet<(Id, Id)>)> {
    let mut parent: BTreeMap<Id, Id> = BTreeMap::new();
    fn find(parent: &mut BTreeMap<Id, Id>, x: Id) -> Id {
        let p = *parent.entry(x).or_insert(x);
        if p == x {
            return x;
        }
        let r = find(parent, p);
        parent.insert(x, r);
        r
    }
    for j in judgements {
        let (ra, rb) = (find(&mut parent, j.a), find(&mut parent, j.b));
        if j.relation == LokRelation::AboutEqual && ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent.insert(hi, lo);
        }
    }
    let nodes: Vec<Id> = parent.keys().copied().collect();
    let class: BTreeMap<Id, Id> = nodes.iter().map(|&n| (n, find(&mut parent, n))).collect();
    let strict: BTreeSet<(Id, Id)> = judgements
        .iter()
        .filter(|j| j.relation == LokRelation::MoreLok)
        .map(|j| (class[&j.a], class[&j.b]))
        .collect();
    if strict.iter().any(|(x, y)| x == y) {
        return None;
    }
    // Kahn's algorithm on the class graph.
    let mut indeg: BTreeMap<Id, usize> = class.values().map(|&c| (c, 0)).collect();
    for (_, y) in &strict {
        *indeg.get_mut(y)? += 1;
    }
    let mut ready: Vec<Id> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&c, _)| c).collect();
    let mut visited = 0;
    while let Some(c) = ready.pop() {
        visited += 1;
        for (_, y) in strict.range((c, Id::from_u128(0))..=(c, Id::from_u128(u128::MAX))) {
            let d = indeg.get_mut(y)?;
            *d -= 1;
            if *d == 0 {
                ready.push(*y);
            }
        }
    }
    (visited == indeg.len()).then_some((class, strict))
}

/// Number of strict edges on the longest path of the contracted graph.
/// Only meaningful for consistent judgement sets.
pub fn longest_strict_chain(judgements: &[Judgement]) -> usize {
    let Some((_, strict)) = contract(judgements) else {
        return usize::MAX;
    };
    let mut memo: BTreeMap<Id, usize> = BTreeMap::new();
    fn depth(c: Id, strict: &BTreeSet<(Id, Id)>, memo: &mut BTreeMap<Id, usize>) -> usize {
        if let Some(&d) = memo.get(&c) {
            return d;
        }
        let d = strict
            .range((c, Id::from_u128(0))..=(c, Id::from_u128(u128::MAX)))
            .map(|&(_, y)| 1 + depth(y, strict, memo))
            .max()
            .unwrap_or(0);
        memo.insert(c, d);
        d
    }
    let starts: BTreeSet<Id> = strict.iter().map(|e| e.0).collect();
    starts
        .into_iter()
        .map(|c| depth(c, &strict, &mut memo))
        .max()
        .unwrap_or(0)
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

    fn eq(a: u128, b: u128) -> Judgement {
        Judgement::new(id(a), id(b), LokRelation::AboutEqual)
    }

    #[test]
    fn cycle_reports_chain() {
        let mut s = ConsistencyState::new();
        s.add(more(1, 2)).unwrap();
        s.add(more(2, 3)).unwrap();
        match s.add(more(3, 1)) {
            Err(KaraError::Contradiction { chain, explanation }) => {
                assert_eq!(chain, format!("{} ≻ {} ≻ {}", id(1), id(2), id(3)));
                assert_eq!(explanation.rejected, more(3, 1));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(s.accepted().len(), 2);
    }

    #[test]
    fn equivalence_is_idempotent_and_propagates() {
        let mut s = ConsistencyState::new();
        s.add(eq(1, 2)).unwrap();
        s.add(eq(2, 1)).unwrap();
        s.add(more(2, 3)).unwrap();
        // 1 ≈ 2 ≻ 3, so 3 ≻ 1 and 1 ≈ 3 are both contradictions.
        assert!(s.check(more(3, 1)).is_err());
        assert!(s.check(eq(3, 1)).is_err());
        assert!(s.check(more(1, 3)).is_ok());
        // ≻ on an equivalent pair.
        assert!(matches!(s.check(more(1, 2)), Err(KaraError::Contradiction { .. })));
        assert!(matches!(s.check(more(4, 4)), Err(KaraError::InvalidComparison(_))));
    }

    #[test]
    fn contraction_and_chain_length() {
        let js = [more(1, 2), eq(2, 3), more(3, 4), more(1, 4)];
        let (class, strict) = contract(&js).unwrap();
        assert_eq!(class[&id(3)], id(2));
        assert_eq!(strict.len(), 3);
        assert_eq!(longest_strict_chain(&js), 2);
        assert!(contract(&[more(1, 2), eq(2, 1)]).is_none());
        assert!(contract(&[more(1, 2), more(2, 3), more(3, 1)]).is_none());
        let chain: Vec<Judgement> = (0..50).map(|i| more(i, i + 1)).collect();
        assert_eq!(longest_strict_chain(&chain), 50);
    }
}
