//! Best-first branch-and-bound for programs with binary variables.
//!
//! Among optimal integral points the solver returns the lexicographically
//! smallest one (comparing the integral variables in index order). This is
//! done by keeping nodes whose bound ties the incumbent alive when they may
//! still contain a lexicographically smaller point, and by splitting an
//! integral node into the sub-boxes that hold every lexicographically
//! smaller completion.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::lp::{solve_lp, Constraint, LinearProgram, LpSolution, LpStatus};
use super::{OptimError, INTEGRALITY_TOL};

pub const DEFAULT_NODE_LIMIT: usize = 100_000;

/// Objective values within this distance are considered tied.
const TIE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegerProgram {
    pub lp: LinearProgram,
    /// `true` for binary variables; their bounds must be `[0, 1]`.
    pub integral: Vec<bool>,
}

impl IntegerProgram {
    /// Every variable binary.
    pub fn binary(lp: LinearProgram) -> Self {
        let integral = vec![true; lp.n_vars()];
        Self { lp, integral }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        self.lp.validate()?;
        if self.integral.len() != self.lp.n_vars() {
            return Err(OptimError::InvalidProblem(
                "integrality flags do not match the variable count".into(),
            ));
        }
        for (j, (&int, &(lo, hi))) in self.integral.iter().zip(&self.lp.bounds).enumerate() {
            if int && (lo != 0.0 || hi != 1.0) {
                return Err(OptimError::InvalidProblem(format!(
                    "integral variable {j} must have bounds [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IpStats {
    pub nodes: usize,
    pub lazy_constraints: usize,
}

/// Solves `ip` with default settings and no lazy constraints.
pub fn solve_binary_ip(ip: &IntegerProgram) -> Result<LpSolution, OptimError> {
    BranchAndBound::new().solve(ip).map(|(sol, _)| sol)
}

type LazyCallback<'a> = Box<dyn FnMut(&[f64]) -> Vec<Constraint> + 'a>;

/// Configurable branch-and-bound run.
pub struct BranchAndBound<'a> {
    node_limit: usize,
    lazy: Option<LazyCallback<'a>>,
}

impl Default for BranchAndBound<'_> {
    fn default() -> Self {
        Self::new()
    }
}

struct Node {
    bounds: Vec<(f64, f64)>,
    bound: f64,
    seq: u64,
}

impl Node {
    fn lower_corner(&self) -> impl Iterator<Item = f64> + '_ {
        self.bounds.iter().map(|b| b.0)
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: the "greatest" node is the one with the
    // lowest bound, then the lexicographically smallest lower corner, then
    // the oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| {
                let a = self.lower_corner();
                let b = other.lower_corner();
                lex_cmp(b, a)
            })
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn lex_cmp(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> Ordering {
    for (x, y) in a.zip(b) {
        match x.total_cmp(&y) {
            Ordering::Equal => continue,
            ord => return ord,
        }
    }
    Ordering::Equal
}

struct Incumbent {
    x: Vec<f64>,
    objective: f64,
}

impl<'a> BranchAndBound<'a> {
    pub fn new() -> Self {
        Self {
            node_limit: DEFAULT_NODE_LIMIT,
            lazy: None,
        }
    }

    pub fn node_limit(mut self, limit: usize) -> Self {
        self.node_limit = limit;
        self
    }

    /// Registers a callback invoked on every integral candidate. Constraints
    /// it returns are added to every node and the search resumes; an empty
    /// return accepts the candidate.
    pub fn lazy_constraints(mut self, callback: impl FnMut(&[f64]) -> Vec<Constraint> + 'a) -> Self {
        self.lazy = Some(Box::new(callback));
        self
    }

    pub fn solve(mut self, ip: &IntegerProgram) -> Result<(LpSolution, IpStats), OptimError> {
        ip.validate()?;
        let n = ip.lp.n_vars();
        let int_vars: Vec<usize> = (0..n).filter(|&j| ip.integral[j]).collect();
        let mut pool: Vec<Constraint> = Vec::new();
        let mut stats = IpStats::default();
        let mut incumbent: Option<Incumbent> = None;
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        heap.push(Node {
            bounds: ip.lp.bounds.clone(),
            bound: f64::NEG_INFINITY,
            seq,
        });

        let may_improve = |incumbent: &Option<Incumbent>, bound: f64, node_bounds: &[(f64, f64)]| {
            let Some(inc) = incumbent else { return true };
            if bound < inc.objective - TIE_TOL {
                return true;
            }
            if bound > inc.objective + TIE_TOL {
                return false;
            }
            let corner = int_vars.iter().map(|&j| node_bounds[j].0);
            let best = int_vars.iter().map(|&j| inc.x[j]);
            lex_cmp(corner, best) == Ordering::Less
        };

        while let Some(node) = heap.pop() {
            if !may_improve(&incumbent, node.bound, &node.bounds) {
                continue;
            }
            stats.nodes += 1;
            if stats.nodes > self.node_limit {
                return Err(OptimError::NodeLimitExceeded(self.node_limit));
            }

            let mut relaxed = ip.lp.clone();
            relaxed.bounds = node.bounds.clone();
            relaxed.constraints.extend(pool.iter().cloned());
            let sol = solve_lp(&relaxed)?;
            match sol.status {
                LpStatus::Infeasible => continue,
                LpStatus::Unbounded => return Ok((sol, stats)),
                LpStatus::Optimal => {}
            }
            if !may_improve(&incumbent, sol.objective_value, &node.bounds) {
                continue;
            }

            let fractional = int_vars
                .iter()
                .map(|&j| (j, (sol.x[j] - sol.x[j].round()).abs()))
                .filter(|&(_, f)| f > INTEGRALITY_TOL)
                .fold(None, |best: Option<(usize, f64)>, (j, f)| match best {
                    Some((_, bf)) if bf >= f => best,
                    _ => Some((j, f)),
                });

            if let Some((j, _)) = fractional {
                for value in [0.0, 1.0] {
                    let mut bounds = node.bounds.clone();
                    bounds[j] = (value, value);
                    seq += 1;
                    heap.push(Node {
                        bounds,
                        bound: sol.objective_value,
                        seq,
                    });
                }
                continue;
            }

            let mut x = sol.x.clone();
            for &j in &int_vars {
                x[j] = x[j].round();
            }
            if let Some(cb) = self.lazy.as_mut() {
                let cuts = cb(&x);
                if !cuts.is_empty() {
                    stats.lazy_constraints += cuts.len();
                    pool.extend(cuts);
                    seq += 1;
                    heap.push(Node {
                        bounds: node.bounds,
                        bound: sol.objective_value,
                        seq,
                    });
                    continue;
                }
            }

            let objective = ip.lp.objective_at(&x);
            let accept = match &incumbent {
                None => true,
                Some(inc) => {
                    objective < inc.objective - TIE_TOL
                        || (objective <= inc.objective + TIE_TOL
                            && lex_cmp(int_vars.iter().map(|&j| x[j]), int_vars.iter().map(|&j| inc.x[j]))
                                == Ordering::Less)
                }
            };

            // Every lexicographically smaller point in this box agrees with
            // `x` on a prefix of the free integral variables and has a 0
            // where `x` has a 1.
            let mut prefix = node.bounds.clone();
            for &j in &int_vars {
                let free = node.bounds[j] == (0.0, 1.0);
                if free && x[j] == 1.0 {
                    let mut bounds = prefix.clone();
                    bounds[j] = (0.0, 0.0);
                    seq += 1;
                    heap.push(Node {
                        bounds,
                        bound: sol.objective_value,
                        seq,
                    });
                }
                if free {
                    prefix[j] = (x[j], x[j]);
                }
            }

            if accept {
                incumbent = Some(Incumbent { x, objective });
            }
        }

        let solution = match incumbent {
            Some(inc) => LpSolution {
                status: LpStatus::Optimal,
                objective_value: inc.objective,
                x: inc.x,
            },
            None => LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective_value: f64::INFINITY,
            },
        };
        Ok((solution, stats))
    }
}
