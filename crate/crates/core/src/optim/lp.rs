//! Bounded-variable primal simplex on a dense tableau.
//!
//! Every structural variable carries finite bounds `[lo, hi]`; it is shifted
//! to `[0, hi - lo]` and handled by the bounded ratio test, so no explicit
//! bound rows are generated. Phase I minimises the sum of artificial
//! variables, phase II the user objective. Pricing is Dantzig (largest
//! reduced cost) and switches permanently to Bland's rule after a run of
//! degenerate pivots.

use serde::{Deserialize, Serialize};

use super::{OptimError, BOUND_TOL, FEASIBILITY_TOL, ZERO_PIVOT};

const OPTIMALITY_TOL: f64 = 1e-9;
/// Entries below this are skipped in the ratio test.
const RATIO_TOL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 50;
const MAX_ITERATIONS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }

    /// Whether `lhs (rel) rhs` holds within `tol`.
    pub fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        match self {
            Relation::Le => lhs <= rhs + tol,
            Relation::Eq => (lhs - rhs).abs() <= tol,
            Relation::Ge => lhs >= rhs - tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self { coeffs, relation, rhs }
    }

    /// Builds a constraint from sparse `(index, coefficient)` terms.
    pub fn sparse(n_vars: usize, terms: &[(usize, f64)], relation: Relation, rhs: f64) -> Self {
        let mut coeffs = vec![0.0; n_vars];
        for &(j, a) in terms {
            coeffs[j] += a;
        }
        Self::new(coeffs, relation, rhs)
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum()
    }

    pub fn is_satisfied(&self, x: &[f64], tol: f64) -> bool {
        self.relation.holds(self.lhs(x), self.rhs, tol)
    }
}

/// `minimize objective·x` subject to `constraints` and `bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    /// A program over `n_vars` variables, each bounded to `[0, 1]`, with a
    /// zero objective.
    pub fn new(n_vars: usize) -> Self {
        Self {
            objective: vec![0.0; n_vars],
            bounds: vec![(0.0, 1.0); n_vars],
            constraints: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, constraint: Constraint) {
        self.constraints.push(constraint);
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let n = self.n_vars();
        if self.bounds.len() != n {
            return Err(OptimError::InvalidProblem(format!(
                "{} bounds for {} variables",
                self.bounds.len(),
                n
            )));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(OptimError::InvalidProblem("non-finite objective coefficient".into()));
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(OptimError::InvalidProblem(format!(
                    "variable {j} has an infinite bound"
                )));
            }
            if lo > hi {
                return Err(OptimError::InvalidProblem(format!("variable {j} has lo > hi")));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(OptimError::InvalidProblem(format!(
                    "constraint {i} has {} coefficients, expected {n}",
                    c.coeffs.len()
                )));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(OptimError::InvalidProblem(format!("constraint {i} is not finite")));
            }
        }
        Ok(())
    }

    /// Checks bounds within [`BOUND_TOL`] and constraints within
    /// [`FEASIBILITY_TOL`].
    pub fn is_feasible(&self, x: &[f64]) -> bool {
        x.len() == self.n_vars()
            && self
                .bounds
                .iter()
                .zip(x)
                .all(|(&(lo, hi), &v)| v >= lo - BOUND_TOL && v <= hi + BOUND_TOL)
            && self.constraints.iter().all(|c| c.is_satisfied(x, FEASIBILITY_TOL))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
}

impl LpSolution {
    fn infeasible() -> Self {
        Self {
            status: LpStatus::Infeasible,
            x: Vec::new(),
            objective_value: f64::INFINITY,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Solves `lp` to optimality, or reports infeasibility / unboundedness.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, OptimError> {
    lp.validate()?;
    let mut tableau = Tableau::build(lp);

    let phase_one = tableau.phase_one_costs();
    tableau.optimize(&phase_one)?;
    let infeasibility: f64 = tableau
        .basis
        .iter()
        .zip(&tableau.beta)
        .filter(|(&col, _)| tableau.is_artificial(col))
        .map(|(_, &v)| v)
        .sum();
    if infeasibility > FEASIBILITY_TOL {
        return Ok(LpSolution::infeasible());
    }
    tableau.expel_artificials();

    let phase_two = tableau.phase_two_costs(&lp.objective);
    if !tableau.optimize(&phase_two)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            objective_value: f64::NEG_INFINITY,
        });
    }

    let x = tableau.structural_values(lp);
    if !lp.is_feasible(&x) {
        return Err(OptimError::NumericalBreakdown(
            "optimal basis fails the feasibility re-check".into(),
        ));
    }
    Ok(LpSolution {
        objective_value: lp.objective_at(&x),
        status: LpStatus::Optimal,
        x,
    })
}

struct Tableau {
    n_struct: usize,
    /// First artificial column; columns `n_struct..first_art` are slacks.
    first_art: usize,
    /// Row-major `m x n_cols` coefficients, kept as `B^-1 A`.
    rows: Vec<Vec<f64>>,
    /// Values of the basic variables.
    beta: Vec<f64>,
    basis: Vec<usize>,
    upper: Vec<f64>,
    at_upper: Vec<bool>,
    is_basic: Vec<bool>,
    bland: bool,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.n_vars();
        let m = lp.constraints.len();
        let n_slack = lp.constraints.iter().filter(|c| c.relation != Relation::Eq).count();

        // Shifted rows: a·y (rel) b - a·lo, flipped so that the rhs is >= 0.
        let mut shifted = Vec::with_capacity(m);
        let mut slack_col = n;
        for c in &lp.constraints {
            let rhs = c.rhs - c.coeffs.iter().zip(&lp.bounds).map(|(a, b)| a * b.0).sum::<f64>();
            let slack = match c.relation {
                Relation::Le => Some((slack_col, 1.0)),
                Relation::Ge => Some((slack_col, -1.0)),
                Relation::Eq => None,
            };
            if slack.is_some() {
                slack_col += 1;
            }
            let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
            shifted.push((sign, rhs * sign, slack));
        }

        let n_art = shifted
            .iter()
            .filter(|(sign, _, slack)| !matches!(slack, Some((_, s)) if s * sign > 0.0))
            .count();
        let n_cols = n + n_slack + n_art;
        let first_art = n + n_slack;

        let mut rows = Vec::with_capacity(m);
        let mut beta = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut art_col = first_art;
        for (c, &(sign, rhs, slack)) in lp.constraints.iter().zip(&shifted) {
            let mut row = vec![0.0; n_cols];
            for (j, a) in c.coeffs.iter().enumerate() {
                row[j] = a * sign;
            }
            let mut basic = None;
            if let Some((col, s)) = slack {
                row[col] = s * sign;
                if s * sign > 0.0 {
                    basic = Some(col);
                }
            }
            let basic = basic.unwrap_or_else(|| {
                row[art_col] = 1.0;
                art_col += 1;
                art_col - 1
            });
            rows.push(row);
            beta.push(rhs);
            basis.push(basic);
        }

        let mut upper = vec![f64::INFINITY; n_cols];
        for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
            upper[j] = hi - lo;
        }
        let mut is_basic = vec![false; n_cols];
        for &b in &basis {
            is_basic[b] = true;
        }

        Self {
            n_struct: n,
            first_art,
            rows,
            beta,
            basis,
            upper,
            at_upper: vec![false; n_cols],
            is_basic,
            bland: false,
        }
    }

    fn n_cols(&self) -> usize {
        self.upper.len()
    }

    fn is_artificial(&self, col: usize) -> bool {
        col >= self.first_art
    }

    fn phase_one_costs(&self) -> Vec<f64> {
        (0..self.n_cols())
            .map(|j| if self.is_artificial(j) { 1.0 } else { 0.0 })
            .collect()
    }

    fn phase_two_costs(&self, objective: &[f64]) -> Vec<f64> {
        let mut costs = vec![0.0; self.n_cols()];
        costs[..self.n_struct].copy_from_slice(objective);
        costs
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.upper[j]
        } else {
            0.0
        }
    }

    fn reduced_costs(&self, costs: &[f64]) -> Vec<f64> {
        let mut d = costs.to_vec();
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = costs[b];
            if cb != 0.0 {
                for (dj, a) in d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
        d
    }

    fn choose_entering(&self, d: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.n_cols() {
            if self.is_basic[j] || self.upper[j] <= 0.0 {
                continue;
            }
            let improving = if self.at_upper[j] {
                d[j] > OPTIMALITY_TOL
            } else {
                d[j] < -OPTIMALITY_TOL
            };
            if !improving {
                continue;
            }
            if self.bland {
                return Some(j);
            }
            if best.is_none_or(|(_, score)| d[j].abs() > score) {
                best = Some((j, d[j].abs()));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Runs simplex iterations for `costs`. Returns `false` when the
    /// objective is unbounded below.
    fn optimize(&mut self, costs: &[f64]) -> Result<bool, OptimError> {
        let mut degenerate = 0usize;
        for _ in 0..MAX_ITERATIONS {
            let d = self.reduced_costs(costs);
            let Some(entering) = self.choose_entering(&d) else {
                return Ok(true);
            };
            let dir = if self.at_upper[entering] { -1.0 } else { 1.0 };

            // Bounded ratio test. `None` as the row means a bound flip.
            let mut step = self.upper[entering];
            let mut leaving: Option<(usize, bool)> = None;
            let mut pivot_mag = 0.0;
            for (i, row) in self.rows.iter().enumerate() {
                let alpha = row[entering];
                if alpha.abs() <= RATIO_TOL {
                    continue;
                }
                // Basic value moves by -alpha * dir per unit step.
                let rate = -alpha * dir;
                let b = self.basis[i];
                let (limit, to_upper) = if rate < 0.0 {
                    (self.beta[i].max(0.0) / -rate, false)
                } else if self.upper[b].is_finite() {
                    ((self.upper[b] - self.beta[i]).max(0.0) / rate, true)
                } else {
                    continue;
                };
                let better = match leaving {
                    _ if limit < step - ZERO_PIVOT => true,
                    _ if limit > step + ZERO_PIVOT => false,
                    // Ties against the bound flip keep the flip.
                    None => false,
                    Some((r, _)) => {
                        if self.bland {
                            b < self.basis[r]
                        } else {
                            alpha.abs() > pivot_mag || (alpha.abs() == pivot_mag && b < self.basis[r])
                        }
                    }
                };
                if better {
                    step = limit;
                    leaving = Some((i, to_upper));
                    pivot_mag = alpha.abs();
                }
            }

            if step.is_infinite() {
                return Ok(false);
            }

            if step <= ZERO_PIVOT {
                degenerate += 1;
                if degenerate >= DEGENERATE_STREAK {
                    self.bland = true;
                }
            } else {
                degenerate = 0;
            }

            for (i, row) in self.rows.iter().enumerate() {
                self.beta[i] -= row[entering] * dir * step;
            }
            match leaving {
                None => self.at_upper[entering] = !self.at_upper[entering],
                Some((r, to_upper)) => {
                    if self.rows[r][entering].abs() <= ZERO_PIVOT {
                        return Err(OptimError::NumericalBreakdown(format!(
                            "pivot magnitude {:e} at column {entering}",
                            self.rows[r][entering]
                        )));
                    }
                    let entering_value = self.nonbasic_value(entering) + dir * step;
                    let leaving_col = self.basis[r];
                    self.pivot(r, entering);
                    self.beta[r] = entering_value;
                    self.at_upper[leaving_col] = to_upper;
                    self.at_upper[entering] = false;
                }
            }
        }
        Err(OptimError::NumericalBreakdown(format!(
            "no convergence after {MAX_ITERATIONS} iterations"
        )))
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let inv = 1.0 / self.rows[r][col];
        for a in self.rows[r].iter_mut() {
            *a *= inv;
        }
        self.rows[r][col] = 1.0;
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[col];
            if factor != 0.0 {
                for (a, p) in row.iter_mut().zip(&pivot_row) {
                    *a -= factor * p;
                }
                row[col] = 0.0;
            }
        }
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.is_basic[col] = true;
        self.basis[r] = col;
    }

    /// After phase I: pivot zero-valued artificials out of the basis where
    /// possible and pin every artificial to zero.
    fn expel_artificials(&mut self) {
        for r in 0..self.rows.len() {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let candidate = (0..self.first_art)
                .filter(|&j| !self.is_basic[j])
                .max_by(|&a, &b| self.rows[r][a].abs().total_cmp(&self.rows[r][b].abs()).then(b.cmp(&a)));
            if let Some(j) = candidate {
                if self.rows[r][j].abs() > RATIO_TOL {
                    let value = self.nonbasic_value(j);
                    let leaving = self.basis[r];
                    self.pivot(r, j);
                    // Degenerate pivot: the artificial sits at zero, so the
                    // other basic values are unchanged.
                    self.beta[r] = value;
                    self.at_upper[leaving] = false;
                    self.at_upper[j] = false;
                }
            }
        }
        for j in self.first_art..self.n_cols() {
            self.upper[j] = 0.0;
        }
    }

    fn structural_values(&self, lp: &LinearProgram) -> Vec<f64> {
        let mut y: Vec<f64> = (0..self.n_struct).map(|j| self.nonbasic_value(j)).collect();
        for (&b, &v) in self.basis.iter().zip(&self.beta) {
            if b < self.n_struct {
                y[b] = v;
            }
        }
        y.iter()
            .zip(&lp.bounds)
            .map(|(&v, &(lo, hi))| {
                let x = lo + v;
                if (x - lo).abs() <= BOUND_TOL || x < lo {
                    lo
                } else if (x - hi).abs() <= BOUND_TOL || x > hi {
                    hi
                } else {
                    x
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(lo: f64, hi: f64) -> LinearProgram {
        LinearProgram {
            objective: vec![1.0],
            bounds: vec![(lo, hi)],
            constraints: Vec::new(),
        }
    }

    #[test]
    fn single_variable_lower_cut() {
        let mut lp = single(0.0, 10.0);
        lp.add_constraint(Constraint::new(vec![1.0], Relation::Ge, 3.0));
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-9);
        assert!((sol.objective_value - 3.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut lp = single(0.0, 10.0);
        lp.add_constraint(Constraint::new(vec![1.0], Relation::Ge, 2.0));
        lp.add_constraint(Constraint::new(vec![1.0], Relation::Le, 1.0));
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn equality_rows_and_negative_bounds() {
        // min x - y, x + y = 1, x in [-2, 2], y in [-1, 3]
        let lp = LinearProgram {
            objective: vec![1.0, -1.0],
            bounds: vec![(-2.0, 2.0), (-1.0, 3.0)],
            constraints: vec![Constraint::new(vec![1.0, 1.0], Relation::Eq, 1.0)],
        };
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.x[0] + 2.0).abs() < 1e-9);
        assert!((sol.x[1] - 3.0).abs() < 1e-9);
        assert!((sol.objective_value + 5.0).abs() < 1e-9);
    }

    #[test]
    fn redundant_equalities_keep_artificial_pinned() {
        let lp = LinearProgram {
            objective: vec![-1.0, -1.0],
            bounds: vec![(0.0, 5.0), (0.0, 5.0)],
            constraints: vec![
                Constraint::new(vec![1.0, 1.0], Relation::Eq, 4.0),
                Constraint::new(vec![2.0, 2.0], Relation::Eq, 8.0),
            ],
        };
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value + 4.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_infinite_bounds() {
        let lp = single(0.0, f64::INFINITY);
        assert!(matches!(solve_lp(&lp), Err(OptimError::InvalidProblem(_))));
    }

    #[test]
    fn fixed_variable_is_respected() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -1.0];
        lp.bounds[0] = (0.25, 0.25);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.x, vec![0.25, 1.0]);
    }
}
