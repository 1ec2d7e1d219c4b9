//! Small dense linear-program solver.
//!
//! Two-phase primal simplex on a dense tableau with Bland's rule, which keeps
//! pivoting deterministic and cycle-free. Problems in this crate have at most
//! a few dozen variables, so a dense tableau is the right tool: every solve
//! is exact-feasible by wide margins and reproducible bit for bit.

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Constraint { coeffs, relation, rhs }
    }
}

/// Lower-bound kind for a decision variable. Upper bounds, when needed, are
/// expressed as explicit constraint rows by the caller.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    NonNegative,
    Free,
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub objective: Vec<f64>,
    pub maximize: bool,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<Bound>,
    pub tol: f64,
}

impl Problem {
    pub fn minimize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Problem {
            objective,
            maximize: false,
            constraints: Vec::new(),
            bounds: vec![Bound::NonNegative; n],
            tol: 1e-9,
        }
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Problem { maximize: true, ..Problem::minimize(objective) }
    }
}

#[derive(Clone, Debug)]
pub enum Solution {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl Solution {
    pub fn optimal(&self) -> Option<(&[f64], f64)> {
        match self {
            Solution::Optimal { x, value } => Some((x, *value)),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("constraint has {got} coefficients, expected {expected}")]
    BadConstraint { expected: usize, got: usize },
    #[error("simplex iteration limit reached")]
    IterationLimit,
}

const MAX_PIVOTS: usize = 20_000;

struct Tableau {
    rows: usize,
    cols: usize, // structural + slack + artificial columns
    data: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    tol: f64,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn pivot(&mut self, prow: usize, pcol: usize) {
        let piv = self.at(prow, pcol);
        let inv = 1.0 / piv;
        for j in 0..self.cols {
            self.data[prow * self.cols + j] *= inv;
        }
        self.rhs[prow] *= inv;
        for i in 0..self.rows {
            if i == prow {
                continue;
            }
            let f = self.at(i, pcol);
            if f == 0.0 {
                continue;
            }
            for j in 0..self.cols {
                let v = self.at(prow, j);
                self.data[i * self.cols + j] -= f * v;
            }
            self.rhs[i] -= f * self.rhs[prow];
        }
        self.basis[prow] = pcol;
    }

    /// Runs simplex iterations for cost vector `cost` over the allowed
    /// columns. Returns false if the problem is unbounded in this phase.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<bool, LpError> {
        for _ in 0..MAX_PIVOTS {
            // reduced costs r_j = c_j - c_B^T B^{-1} A_j; Bland: first negative
            let mut entering = None;
            for j in 0..self.cols {
                if !allowed[j] {
                    continue;
                }
                let mut r = cost[j];
                for i in 0..self.rows {
                    let cb = cost[self.basis[i]];
                    if cb != 0.0 {
                        r -= cb * self.at(i, j);
                    }
                }
                if r < -self.tol {
                    entering = Some(j);
                    break;
                }
            }
            let Some(pcol) = entering else {
                return Ok(true);
            };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, pcol);
                if a > self.tol {
                    let ratio = self.rhs[i] / a;
                    match leaving {
                        None => leaving = Some((i, ratio)),
                        Some((_, best)) if ratio < best - self.tol => {
                            leaving = Some((i, ratio));
                        }
                        Some((bi, best)) if (ratio - best).abs() <= self.tol => {
                            // Bland tie-break: lowest basis index leaves
                            if self.basis[i] < self.basis[bi] {
                                leaving = Some((i, best.min(ratio)));
                            }
                        }
                        _ => {}
                    }
                }
            }
            let Some((prow, _)) = leaving else {
                return Ok(false);
            };
            self.pivot(prow, pcol);
        }
        Err(LpError::IterationLimit)
    }

    fn objective_value(&self, cost: &[f64]) -> f64 {
        (0..self.rows).map(|i| cost[self.basis[i]] * self.rhs[i]).sum()
    }
}

/// Solves the problem with a two-phase dense simplex.
pub fn solve(p: &Problem) -> Result<Solution, LpError> {
    let n = p.objective.len();
    assert_eq!(p.bounds.len(), n, "bounds length mismatch");
    for c in &p.constraints {
        if c.coeffs.len() != n {
            return Err(LpError::BadConstraint { expected: n, got: c.coeffs.len() });
        }
    }
    let tol = p.tol;
    let m = p.constraints.len();

    // Map original variables to standard-form columns: NonNegative -> one
    // column, Free -> difference of two columns.
    let mut col_of = Vec::with_capacity(n);
    let mut n_struct = 0usize;
    for b in &p.bounds {
        col_of.push(n_struct);
        n_struct += match b {
            Bound::NonNegative => 1,
            Bound::Free => 2,
        };
    }
    let n_slack = p
        .constraints
        .iter()
        .filter(|c| c.relation != Relation::Eq)
        .count();
    let cols = n_struct + n_slack + m; // artificial column per row
    let mut data = vec![0.0; m * cols];
    let mut rhs = vec![0.0; m];
    let mut slack_idx = n_struct;
    for (i, c) in p.constraints.iter().enumerate() {
        let flip = if c.rhs < 0.0 { -1.0 } else { 1.0 };
        for (v, (&coef, bound)) in c.coeffs.iter().zip(&p.bounds).enumerate() {
            let col = col_of[v];
            data[i * cols + col] = flip * coef;
            if *bound == Bound::Free {
                data[i * cols + col + 1] = -flip * coef;
            }
        }
        match c.relation {
            Relation::Le => {
                data[i * cols + slack_idx] = flip;
                slack_idx += 1;
            }
            Relation::Ge => {
                data[i * cols + slack_idx] = -flip;
                slack_idx += 1;
            }
            Relation::Eq => {}
        }
        data[i * cols + n_struct + n_slack + i] = 1.0;
        rhs[i] = flip * c.rhs;
    }

    let mut t = Tableau {
        rows: m,
        cols,
        data,
        rhs,
        basis: (0..m).map(|i| n_struct + n_slack + i).collect(),
        tol,
    };

    // Phase 1: drive artificials to zero.
    let mut phase1_cost = vec![0.0; cols];
    for j in (n_struct + n_slack)..cols {
        phase1_cost[j] = 1.0;
    }
    let allowed_all = vec![true; cols];
    if !t.optimize(&phase1_cost, &allowed_all)? {
        // phase-1 objective is bounded below by 0, so this cannot happen
        return Ok(Solution::Infeasible);
    }
    if t.objective_value(&phase1_cost) > tol.max(1e-12) * (1.0 + t.rhs.iter().map(|v| v.abs()).sum::<f64>()) {
        return Ok(Solution::Infeasible);
    }

    // Pivot lingering artificials out of the basis where possible; rows that
    // cannot be pivoted are redundant and harmless at zero level.
    for i in 0..m {
        if t.basis[i] >= n_struct + n_slack {
            let pcol = (0..n_struct + n_slack).find(|&j| t.at(i, j).abs() > tol);
            if let Some(j) = pcol {
                t.pivot(i, j);
            }
        }
    }

    // Phase 2 over structural and slack columns only.
    let mut allowed = vec![true; cols];
    for a in allowed.iter_mut().skip(n_struct + n_slack) {
        *a = false;
    }
    let mut cost = vec![0.0; cols];
    let sign = if p.maximize { -1.0 } else { 1.0 };
    for (v, (&c, bound)) in p.objective.iter().zip(&p.bounds).enumerate() {
        let col = col_of[v];
        cost[col] = sign * c;
        if *bound == Bound::Free {
            cost[col + 1] = -sign * c;
        }
    }
    if !t.optimize(&cost, &allowed)? {
        return Ok(Solution::Unbounded);
    }

    let mut x_std = vec![0.0; cols];
    for i in 0..m {
        x_std[t.basis[i]] = t.rhs[i];
    }
    let mut x = vec![0.0; n];
    for (v, bound) in p.bounds.iter().enumerate() {
        let col = col_of[v];
        x[v] = match bound {
            Bound::NonNegative => x_std[col],
            Bound::Free => x_std[col] - x_std[col + 1],
        };
    }
    let value = sign * t.objective_value(&cost);
    Ok(Solution::Optimal { x, value })
}
