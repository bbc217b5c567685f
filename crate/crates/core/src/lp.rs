//! Linear programming backend.
//!
//! Every support-function, emptiness and membership query on polytopes and
//! constrained zonotopes is reduced to an [`LpProblem`] and handed to the
//! solver selected through `REACH_LP_BACKEND` (default: dense simplex).

use nalgebra::{DMatrix, DVector};
use std::sync::OnceLock;
use thiserror::Error;

/// Absolute primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-9;
/// Absolute optimality (reduced cost) tolerance.
pub const OPT_TOL: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;
const BLAND_AFTER: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("LP dimension mismatch: {0}")]
    Dimension(String),
    #[error("LP data contains a non-finite coefficient")]
    NonFinite,
    #[error("LP solver could not certify a status: {0}")]
    NumericalFailure(String),
    #[error("unknown LP backend '{0}' (expected 'simplex' or 'bland')")]
    UnknownBackend(String),
}

/// maximize `objectiveᵀx` s.t. `ineq_lhs·x ≤ ineq_rhs`, `eq_lhs·x = eq_rhs`,
/// `lower ≤ x ≤ upper` (bounds may be infinite).
#[derive(Clone, Debug)]
pub struct LpProblem {
    pub objective: DVector<f64>,
    pub ineq_lhs: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    pub eq_lhs: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl LpProblem {
    /// Problem with inequality rows only and free variables.
    pub fn new(objective: DVector<f64>, ineq_lhs: DMatrix<f64>, ineq_rhs: DVector<f64>) -> Self {
        let n = objective.len();
        LpProblem {
            objective,
            ineq_lhs,
            ineq_rhs,
            eq_lhs: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    /// Problem with equality rows only and the given variable bounds.
    pub fn with_equalities(
        objective: DVector<f64>,
        eq_lhs: DMatrix<f64>,
        eq_rhs: DVector<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Self {
        let n = objective.len();
        LpProblem {
            objective,
            ineq_lhs: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
            eq_lhs,
            eq_rhs,
            lower,
            upper,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        let shape_ok = self.ineq_lhs.ncols() == n
            && self.eq_lhs.ncols() == n
            && self.ineq_lhs.nrows() == self.ineq_rhs.len()
            && self.eq_lhs.nrows() == self.eq_rhs.len()
            && self.lower.len() == n
            && self.upper.len() == n;
        if !shape_ok {
            return Err(LpError::Dimension(format!(
                "{} vars, ineq {}x{} / {}, eq {}x{} / {}, bounds {}/{}",
                n,
                self.ineq_lhs.nrows(),
                self.ineq_lhs.ncols(),
                self.ineq_rhs.len(),
                self.eq_lhs.nrows(),
                self.eq_lhs.ncols(),
                self.eq_rhs.len(),
                self.lower.len(),
                self.upper.len()
            )));
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.ineq_lhs.iter().all(|v| v.is_finite())
            && self.ineq_rhs.iter().all(|v| v.is_finite())
            && self.eq_lhs.iter().all(|v| v.is_finite())
            && self.eq_rhs.iter().all(|v| v.is_finite())
            && self.lower.iter().all(|v| !v.is_nan() && *v != f64::INFINITY)
            && self.upper.iter().all(|v| !v.is_nan() && *v != f64::NEG_INFINITY);
        if finite {
            Ok(())
        } else {
            Err(LpError::NonFinite)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, point: DVector<f64> },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn status(&self) -> LpStatus {
        match self {
            LpOutcome::Optimal { .. } => LpStatus::Optimal,
            LpOutcome::Infeasible => LpStatus::Infeasible,
            LpOutcome::Unbounded => LpStatus::Unbounded,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn point(&self) -> Option<&DVector<f64>> {
        match self {
            LpOutcome::Optimal { point, .. } => Some(point),
            _ => None,
        }
    }
}

/// Swappable LP backend.
pub trait LpSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &LpProblem) -> Result<LpOutcome, LpError>;
}

/// Entering-variable rule of [`DenseSimplex`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pricing {
    /// Smallest eligible index enters, smallest basic index leaves on ties.
    Bland,
    /// Largest reduced cost enters; falls back to Bland after a run of
    /// degenerate pivots so that termination is still guaranteed.
    DantzigBland,
}

/// Dense bounded-variable primal simplex (two phases, full tableau).
#[derive(Clone, Copy, Debug)]
pub struct DenseSimplex {
    pub pricing: Pricing,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        DenseSimplex { pricing: Pricing::DantzigBland }
    }
}

impl LpSolver for DenseSimplex {
    fn name(&self) -> &'static str {
        match self.pricing {
            Pricing::Bland => "bland",
            Pricing::DantzigBland => "simplex",
        }
    }

    fn solve(&self, problem: &LpProblem) -> Result<LpOutcome, LpError> {
        problem.validate()?;
        solve_dense(problem, self.pricing)
    }
}

/// Backend named by `REACH_LP_BACKEND` (unset or empty means `simplex`).
pub fn backend_from_env() -> Result<Box<dyn LpSolver>, LpError> {
    let name = std::env::var("REACH_LP_BACKEND").unwrap_or_default();
    backend_by_name(&name)
}

pub fn backend_by_name(name: &str) -> Result<Box<dyn LpSolver>, LpError> {
    match name.trim() {
        "" | "simplex" => Ok(Box::new(DenseSimplex::default())),
        "bland" => Ok(Box::new(DenseSimplex { pricing: Pricing::Bland })),
        other => Err(LpError::UnknownBackend(other.to_string())),
    }
}

fn process_backend() -> &'static Result<Box<dyn LpSolver>, LpError> {
    static BACKEND: OnceLock<Result<Box<dyn LpSolver>, LpError>> = OnceLock::new();
    BACKEND.get_or_init(backend_from_env)
}

/// Solves with the process-wide backend.
pub fn solve_lp(problem: &LpProblem) -> Result<LpOutcome, LpError> {
    match process_backend() {
        Ok(solver) => solver.solve(problem),
        Err(e) => Err(e.clone()),
    }
}

fn solve_dense(p: &LpProblem, pricing: Pricing) -> Result<LpOutcome, LpError> {
    let n = p.num_vars();
    let m_ub = p.ineq_rhs.len();
    let m_eq = p.eq_rhs.len();
    let m = m_ub + m_eq;

    for j in 0..n {
        if p.lower[j] > p.upper[j] + FEAS_TOL {
            return Ok(LpOutcome::Infeasible);
        }
    }

    if n == 0 {
        let ok = p.ineq_rhs.iter().all(|&b| b >= -FEAS_TOL) && p.eq_rhs.iter().all(|&b| b.abs() <= FEAS_TOL);
        return Ok(if ok {
            LpOutcome::Optimal { value: 0.0, point: DVector::zeros(0) }
        } else {
            LpOutcome::Infeasible
        });
    }

    if m == 0 {
        let mut point = DVector::zeros(n);
        for j in 0..n {
            let c = p.objective[j];
            let (lo, hi) = (p.lower[j], p.upper[j].max(p.lower[j]));
            point[j] = if c > 0.0 {
                if hi.is_infinite() {
                    return Ok(LpOutcome::Unbounded);
                }
                hi
            } else if c < 0.0 {
                if lo.is_infinite() {
                    return Ok(LpOutcome::Unbounded);
                }
                lo
            } else {
                0.0f64.clamp(lo, hi)
            };
        }
        let value = p.objective.dot(&point);
        return Ok(LpOutcome::Optimal { value, point });
    }

    let mut tab = Tableau::build(p);
    tab.bland_only = pricing == Pricing::Bland;
    tab.run_phase_one()?;
    if tab.artificial_sum() > FEAS_TOL * (1.0 + tab.rhs_scale) {
        return Ok(LpOutcome::Infeasible);
    }
    tab.expel_artificials();
    let cost: Vec<f64> = (0..tab.ncol).map(|j| if j < n { p.objective[j] } else { 0.0 }).collect();
    tab.set_cost(cost);
    match tab.iterate()? {
        Step::Unbounded => return Ok(LpOutcome::Unbounded),
        Step::Optimal => {}
    }
    tab.refine();
    let mut point = DVector::zeros(n);
    for j in 0..n {
        let v = tab.x[j];
        // snap tiny bound violations left by round-off
        point[j] = if v < p.lower[j] && v > p.lower[j] - FEAS_TOL {
            p.lower[j]
        } else if v > p.upper[j] && v < p.upper[j] + FEAS_TOL {
            p.upper[j]
        } else {
            v
        };
    }
    tab.certify(p, &point)?;
    let value = p.objective.dot(&point);
    Ok(LpOutcome::Optimal { value, point })
}

enum Step {
    Optimal,
    Unbounded,
}

struct Tableau {
    m: usize,
    ncol: usize,
    /// Original constraint matrix including slack and artificial columns (m × ncol).
    a: DMatrix<f64>,
    b: Vec<f64>,
    rhs_scale: f64,
    /// Current B⁻¹·a, row-major.
    t: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    artificial: Vec<bool>,
    blocked: Vec<bool>,
    bland_only: bool,
    iter_cap: usize,
    iters: usize,
}

impl Tableau {
    fn build(p: &LpProblem) -> Tableau {
        let n = p.num_vars();
        let m_ub = p.ineq_rhs.len();
        let m_eq = p.eq_rhs.len();
        let m = m_ub + m_eq;

        let mut lo: Vec<f64> = p.lower.iter().copied().collect();
        let mut hi: Vec<f64> = p.upper.iter().map(|&u| u).collect();
        for j in 0..n {
            if hi[j] < lo[j] {
                hi[j] = lo[j];
            }
        }
        lo.extend(std::iter::repeat(0.0).take(m_ub));
        hi.extend(std::iter::repeat(f64::INFINITY).take(m_ub));

        let mut x = vec![0.0; n + m_ub];
        for j in 0..n {
            x[j] = if lo[j].is_finite() {
                lo[j]
            } else if hi[j].is_finite() {
                hi[j]
            } else {
                0.0
            };
        }

        let mut b = Vec::with_capacity(m);
        b.extend(p.ineq_rhs.iter().copied());
        b.extend(p.eq_rhs.iter().copied());
        let rhs_scale = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

        let row = |i: usize, j: usize| -> f64 {
            if i < m_ub {
                p.ineq_lhs[(i, j)]
            } else {
                p.eq_lhs[(i - m_ub, j)]
            }
        };

        let mut resid = vec![0.0; m];
        for i in 0..m {
            let mut s = b[i];
            for j in 0..n {
                if x[j] != 0.0 {
                    s -= row(i, j) * x[j];
                }
            }
            resid[i] = s;
        }

        // slack basic where it stays nonnegative, artificial otherwise
        let mut art_rows = Vec::new();
        for i in 0..m {
            if !(i < m_ub && resid[i] >= 0.0) {
                art_rows.push(i);
            }
        }
        let ncol = n + m_ub + art_rows.len();
        let mut a = DMatrix::zeros(m, ncol);
        for i in 0..m {
            for j in 0..n {
                a[(i, j)] = row(i, j);
            }
            if i < m_ub {
                a[(i, n + i)] = 1.0;
            }
        }
        let mut basis = vec![0usize; m];
        let mut sign = vec![1.0; m];
        for i in 0..m_ub {
            basis[i] = n + i;
        }
        let mut artificial = vec![false; ncol];
        for (k, &i) in art_rows.iter().enumerate() {
            let col = n + m_ub + k;
            let s = if resid[i] < 0.0 { -1.0 } else { 1.0 };
            a[(i, col)] = s;
            sign[i] = s;
            basis[i] = col;
            artificial[col] = true;
            lo.push(0.0);
            hi.push(f64::INFINITY);
            x.push(0.0);
        }
        for i in 0..m {
            x[basis[i]] = resid[i].abs();
        }
        let mut in_basis = vec![false; ncol];
        for &c in &basis {
            in_basis[c] = true;
        }

        let mut t = vec![0.0; m * ncol];
        for i in 0..m {
            let s = sign[i];
            for j in 0..ncol {
                t[i * ncol + j] = s * a[(i, j)];
            }
        }

        let cost: Vec<f64> = (0..ncol).map(|j| if artificial[j] { -1.0 } else { 0.0 }).collect();
        let iter_cap = 50 * (m + ncol) + 1000;
        let mut tab = Tableau {
            m,
            ncol,
            a,
            b,
            rhs_scale,
            t,
            basis,
            in_basis,
            x,
            lo,
            hi,
            cost: Vec::new(),
            d: vec![0.0; ncol],
            artificial,
            blocked: vec![false; ncol],
            bland_only: false,
            iter_cap,
            iters: 0,
        };
        tab.set_cost(cost);
        tab
    }

    fn set_cost(&mut self, cost: Vec<f64>) {
        let nc = self.ncol;
        let mut d = cost.clone();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * nc..(i + 1) * nc];
                for j in 0..nc {
                    d[j] -= cb * row[j];
                }
            }
        }
        for i in 0..self.m {
            d[self.basis[i]] = 0.0;
        }
        self.cost = cost;
        self.d = d;
    }

    fn artificial_sum(&self) -> f64 {
        (0..self.ncol).filter(|&j| self.artificial[j]).map(|j| self.x[j].abs()).sum()
    }

    fn run_phase_one(&mut self) -> Result<(), LpError> {
        if !self.artificial.iter().any(|&a| a) {
            return Ok(());
        }
        match self.iterate()? {
            Step::Optimal => Ok(()),
            // phase one objective is bounded by zero
            Step::Unbounded => Err(LpError::NumericalFailure("phase one reported unboundedness".into())),
        }
    }

    /// Pivots artificials out of the basis and freezes them at zero.
    fn expel_artificials(&mut self) {
        let nc = self.ncol;
        for r in 0..self.m {
            let col = self.basis[r];
            if !self.artificial[col] {
                continue;
            }
            let mut best = None;
            let mut best_abs = 1e-9;
            for j in 0..nc {
                if self.in_basis[j] || self.artificial[j] {
                    continue;
                }
                let v = self.t[r * nc + j].abs();
                if v > best_abs {
                    best_abs = v;
                    best = Some(j);
                }
            }
            if let Some(q) = best {
                self.x[col] = 0.0;
                self.pivot(r, q);
            }
        }
        for j in 0..nc {
            if self.artificial[j] {
                self.blocked[j] = true;
                self.lo[j] = 0.0;
                self.hi[j] = 0.0;
                if !self.in_basis[j] {
                    self.x[j] = 0.0;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let nc = self.ncol;
        let piv = self.t[r * nc + q];
        let inv = 1.0 / piv;
        {
            let row = &mut self.t[r * nc..(r + 1) * nc];
            for v in row.iter_mut() {
                *v *= inv;
            }
            row[q] = 1.0;
        }
        let pivot_row: Vec<f64> = self.t[r * nc..(r + 1) * nc].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * nc + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * nc..(i + 1) * nc];
            for (v, pr) in row.iter_mut().zip(pivot_row.iter()) {
                *v -= f * pr;
            }
            row[q] = 0.0;
        }
        let f = self.d[q];
        if f != 0.0 {
            for (v, pr) in self.d.iter_mut().zip(pivot_row.iter()) {
                *v -= f * pr;
            }
            self.d[q] = 0.0;
        }
        let leaving = self.basis[r];
        self.in_basis[leaving] = false;
        self.in_basis[q] = true;
        self.basis[r] = q;
    }

    fn choose_entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.ncol {
            if self.in_basis[j] || self.blocked[j] || self.lo[j] == self.hi[j] {
                continue;
            }
            let dj = self.d[j];
            let dir = if dj > OPT_TOL && self.x[j] < self.hi[j] {
                1.0
            } else if dj < -OPT_TOL && self.x[j] > self.lo[j] {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            let score = dj.abs();
            if score > best_score {
                best_score = score;
                best = Some((j, dir));
            }
        }
        best
    }

    fn iterate(&mut self) -> Result<Step, LpError> {
        let nc = self.ncol;
        let mut degenerate_run = 0usize;
        loop {
            self.iters += 1;
            if self.iters > self.iter_cap {
                return Err(LpError::NumericalFailure(format!("iteration limit {} reached", self.iter_cap)));
            }
            let bland = self.bland_only || degenerate_run > BLAND_AFTER;
            let Some((q, dir)) = self.choose_entering(bland) else {
                return Ok(Step::Optimal);
            };

            let mut theta = f64::INFINITY;
            let mut leave: Option<usize> = None;
            let mut leave_rate = 0.0;
            for i in 0..self.m {
                let rate = -dir * self.t[i * nc + q];
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let bv = self.basis[i];
                let xb = self.x[bv];
                let limit = if rate < 0.0 {
                    if self.lo[bv].is_finite() {
                        ((xb - self.lo[bv]) / -rate).max(0.0)
                    } else {
                        continue;
                    }
                } else if self.hi[bv].is_finite() {
                    ((self.hi[bv] - xb) / rate).max(0.0)
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some(cur) => {
                        if limit < theta - DEGENERATE_STEP {
                            true
                        } else if limit <= theta + DEGENERATE_STEP {
                            if bland {
                                self.basis[i] < self.basis[cur]
                            } else {
                                rate.abs() > leave_rate
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    theta = if leave.is_none() { limit } else { theta.min(limit) };
                    leave = Some(i);
                    leave_rate = rate.abs();
                }
            }
            let span = self.hi[q] - self.lo[q];
            let flip = span.is_finite() && span <= theta;
            if flip {
                theta = span;
            }
            if theta.is_infinite() {
                return Ok(Step::Unbounded);
            }
            if theta <= DEGENERATE_STEP {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            for i in 0..self.m {
                let rate = -dir * self.t[i * nc + q];
                if rate != 0.0 {
                    let bv = self.basis[i];
                    self.x[bv] += rate * theta;
                }
            }
            if flip {
                self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                continue;
            }
            self.x[q] += dir * theta;
            let r = leave.expect("finite step has a leaving row");
            let bv = self.basis[r];
            let rate = -dir * self.t[r * nc + q];
            self.x[bv] = if rate < 0.0 { self.lo[bv] } else { self.hi[bv] };
            self.pivot(r, q);
        }
    }

    fn residual_norm(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.m {
            let mut s = -self.b[i];
            for j in 0..self.ncol {
                s += self.a[(i, j)] * self.x[j];
            }
            worst = worst.max(s.abs());
        }
        worst
    }

    /// Recomputes basic values from the original columns when round-off has
    /// accumulated in the tableau.
    fn refine(&mut self) {
        let scale = 1.0 + self.rhs_scale;
        if self.residual_norm() <= 1e-11 * scale {
            return;
        }
        let m = self.m;
        let mut bm = DMatrix::zeros(m, m);
        let mut rhs = DVector::from_column_slice(&self.b);
        for (k, &col) in self.basis.iter().enumerate() {
            bm.set_column(k, &self.a.column(col));
        }
        for j in 0..self.ncol {
            if !self.in_basis[j] && self.x[j] != 0.0 {
                for i in 0..m {
                    rhs[i] -= self.a[(i, j)] * self.x[j];
                }
            }
        }
        if let Some(sol) = bm.lu().solve(&rhs) {
            let before = self.residual_norm();
            let saved: Vec<f64> = self.basis.iter().map(|&c| self.x[c]).collect();
            for (k, &col) in self.basis.iter().enumerate() {
                self.x[col] = sol[k];
            }
            let bound_violation = self
                .basis
                .iter()
                .map(|&c| (self.lo[c] - self.x[c]).max(self.x[c] - self.hi[c]).max(0.0))
                .fold(0.0, f64::max);
            if self.residual_norm() > before || bound_violation > 1e-7 * scale {
                for (k, &col) in self.basis.iter().enumerate() {
                    self.x[col] = saved[k];
                }
            }
        }
    }

    fn certify(&self, p: &LpProblem, point: &DVector<f64>) -> Result<(), LpError> {
        let scale = 1.0 + self.rhs_scale + point.amax();
        let tol = 1e-6 * scale;
        let ub = &p.ineq_lhs * point - &p.ineq_rhs;
        let eq = &p.eq_lhs * point - &p.eq_rhs;
        let worst_ub = ub.iter().fold(0.0f64, |a, &v| a.max(v));
        let worst_eq = eq.amax();
        if worst_ub > tol || worst_eq > tol {
            return Err(LpError::NumericalFailure(format!(
                "optimal point violates constraints by {:.3e}",
                worst_ub.max(worst_eq)
            )));
        }
        Ok(())
    }
}
