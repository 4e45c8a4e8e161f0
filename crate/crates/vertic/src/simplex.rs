//! Dense linear programming: maximize `c.x + offset` subject to
//! `A_eq x = b_eq`, `A_in x <= b_in`, all variables free.
//!
//! Two-phase primal simplex on standard form. Free variables are split into
//! differences of nonnegative pairs; equality constraints are eliminated by
//! Gauss-Jordan presolve by default (they dominate the verification LPs,
//! where most rows are interconnection identities) with an option to route
//! them through phase 1 instead. Pivoting uses the largest-coefficient rule
//! and falls back to Bland's rule on stall; a final tolerance relaxation is
//! attempted before reporting a numerical failure, so `Infeasible` /
//! `Unbounded` are never silent guesses.
//!
//! Every `solve` call owns its tableau; distinct problems can be solved
//! from any number of threads.

use crate::mat::{dot, Mat};
use std::fmt::Write as _;
use thiserror::Error;

/// A dense LP in free variables: maximize `objective . x + objective_offset`
/// subject to `eq_lhs x = eq_rhs` and `ineq_lhs x <= ineq_rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    /// Constant added to the reported optimal value (the verification
    /// objectives are affine rows).
    pub objective_offset: f64,
    pub eq_lhs: Mat,
    pub eq_rhs: Vec<f64>,
    pub ineq_lhs: Mat,
    pub ineq_rhs: Vec<f64>,
    /// Optional variable names for witness decoding and debug listings.
    pub var_names: Option<Vec<String>>,
}

impl LpProblem {
    /// An empty problem over `n_vars` free variables with zero objective.
    pub fn new(n_vars: usize) -> Self {
        LpProblem {
            n_vars,
            objective: vec![0.0; n_vars],
            objective_offset: 0.0,
            eq_lhs: Mat::zeros(0, n_vars),
            eq_rhs: Vec::new(),
            ineq_lhs: Mat::zeros(0, n_vars),
            ineq_rhs: Vec::new(),
            var_names: None,
        }
    }

    pub fn n_eq(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq_rhs.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.n_eq() + self.n_ineq()
    }

    pub fn validate(&self) -> Result<(), SimplexError> {
        let shape_err = |what: &str| SimplexError::Shape {
            what: what.to_string(),
        };
        if self.objective.len() != self.n_vars {
            return Err(shape_err("objective length != n_vars"));
        }
        if self.eq_lhs.rows() != self.eq_rhs.len()
            || (self.eq_lhs.rows() > 0 && self.eq_lhs.cols() != self.n_vars)
        {
            return Err(shape_err("equality block shape"));
        }
        if self.ineq_lhs.rows() != self.ineq_rhs.len()
            || (self.ineq_lhs.rows() > 0 && self.ineq_lhs.cols() != self.n_vars)
        {
            return Err(shape_err("inequality block shape"));
        }
        if let Some(names) = &self.var_names {
            if names.len() != self.n_vars {
                return Err(shape_err("var_names length != n_vars"));
            }
        }
        Ok(())
    }

    fn var_name(&self, j: usize) -> String {
        match &self.var_names {
            Some(names) => names[j].clone(),
            None => format!("x{j}"),
        }
    }

    /// Plain-text LP-style listing for inspection or cross-checking with
    /// external solvers. All numbers use round-trip decimal formatting.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let write_terms = |out: &mut String, coeffs: &[f64]| {
            let mut first = true;
            for (j, &c) in coeffs.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                if first {
                    let _ = write!(out, "{} {}", c, self.var_name(j));
                    first = false;
                } else if c < 0.0 {
                    let _ = write!(out, " - {} {}", -c, self.var_name(j));
                } else {
                    let _ = write!(out, " + {} {}", c, self.var_name(j));
                }
            }
            if first {
                out.push('0');
            }
        };
        out.push_str("Maximize\n obj: ");
        write_terms(&mut out, &self.objective);
        if self.objective_offset != 0.0 {
            let _ = write!(out, " + {}", self.objective_offset);
        }
        out.push_str("\nSubject To\n");
        for r in 0..self.n_eq() {
            let _ = write!(out, " e{r}: ");
            write_terms(&mut out, self.eq_lhs.row(r));
            let _ = writeln!(out, " = {}", self.eq_rhs[r]);
        }
        for r in 0..self.n_ineq() {
            let _ = write!(out, " c{r}: ");
            write_terms(&mut out, self.ineq_lhs.row(r));
            let _ = writeln!(out, " <= {}", self.ineq_rhs[r]);
        }
        out.push_str("Bounds\n");
        for j in 0..self.n_vars {
            let _ = writeln!(out, " {} free", self.var_name(j));
        }
        out.push_str("End\n");
        out
    }
}

/// Result of a solve. The point is present exactly when a finite optimum
/// exists; it then satisfies every constraint within the feasibility
/// tolerance and attains the reported value.
#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, point: Vec<f64> },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn point(&self) -> Option<&[f64]> {
        match self {
            LpOutcome::Optimal { point, .. } => Some(point),
            _ => None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        matches!(self, LpOutcome::Optimal { .. })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions {
    /// Entries smaller than this never pivot.
    pub pivot_tol: f64,
    /// Absolute feasibility tolerance, scaled by `1 + |b|_inf`.
    pub feas_tol: f64,
    /// Hard pivot budget per phase pair (0 = automatic).
    pub max_pivots: usize,
    /// Consecutive non-improving pivots before switching to Bland's rule
    /// (0 = automatic).
    pub stall_threshold: usize,
    /// Eliminate equality rows by Gauss-Jordan before the tableau phases.
    pub presolve_equalities: bool,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            pivot_tol: 1e-10,
            feas_tol: 1e-9,
            max_pivots: 0,
            stall_threshold: 0,
            presolve_equalities: true,
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum SimplexError {
    #[error("malformed problem: {what}")]
    Shape { what: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Solves with default options.
pub fn solve(lp: &LpProblem) -> Result<LpOutcome, SimplexError> {
    solve_with(lp, &SimplexOptions::default())
}

pub fn solve_with(lp: &LpProblem, opts: &SimplexOptions) -> Result<LpOutcome, SimplexError> {
    lp.validate()?;

    // Escalation ladder: default pivoting, then Bland's rule from the
    // start, then Bland with relaxed tolerances.
    let attempts = [(false, 1.0), (true, 1.0), (true, 1e3)];
    let mut last_limit = String::new();
    for (bland, relax) in attempts {
        let mut o = *opts;
        o.pivot_tol *= relax;
        match solve_once(lp, &o, bland) {
            Ok(outcome) => {
                if let LpOutcome::Optimal { value: _, point } = &outcome {
                    check_feasibility(lp, point, o.feas_tol)?;
                }
                return Ok(outcome);
            }
            Err(AttemptError::IterationLimit(msg)) => last_limit = msg,
            Err(AttemptError::Fatal(e)) => return Err(e),
        }
    }
    Err(SimplexError::Numerical(format!(
        "pivot budget exhausted even under Bland's rule with relaxed tolerances ({last_limit})"
    )))
}

enum AttemptError {
    IterationLimit(String),
    Fatal(SimplexError),
}

fn check_feasibility(lp: &LpProblem, point: &[f64], feas_tol: f64) -> Result<(), SimplexError> {
    let scale_eq = 1.0 + lp.eq_rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let scale_in = 1.0 + lp.ineq_rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    // The returned point must satisfy the original rows; allow a modest
    // multiple of the solver tolerance before declaring failure.
    let budget_eq = 1e3 * feas_tol * scale_eq;
    let budget_in = 1e3 * feas_tol * scale_in;
    for r in 0..lp.n_eq() {
        let resid = (dot(lp.eq_lhs.row(r), point) - lp.eq_rhs[r]).abs();
        if resid > budget_eq {
            return Err(SimplexError::Numerical(format!(
                "equality row {r} residual {resid:e} exceeds tolerance"
            )));
        }
    }
    for r in 0..lp.n_ineq() {
        let resid = dot(lp.ineq_lhs.row(r), point) - lp.ineq_rhs[r];
        if resid > budget_in {
            return Err(SimplexError::Numerical(format!(
                "inequality row {r} violated by {resid:e}"
            )));
        }
    }
    Ok(())
}

fn solve_once(
    lp: &LpProblem,
    opts: &SimplexOptions,
    bland: bool,
) -> Result<LpOutcome, AttemptError> {
    // Presolve: eliminate equality rows, expressing pivot variables in
    // terms of the free remainder.
    let (reduced, presolve) = if opts.presolve_equalities && lp.n_eq() > 0 {
        match eliminate_equalities(lp, opts) {
            Elimination::Infeasible => return Ok(LpOutcome::Infeasible),
            Elimination::Reduced { problem, restore } => (*problem, Some(restore)),
        }
    } else {
        (lp.clone(), None)
    };

    if reduced.n_vars == 0 {
        // Fully determined by the equalities: check the remaining rows.
        let feasible = reduced
            .ineq_rhs
            .iter()
            .all(|&b| b >= -opts.feas_tol * (1.0 + b.abs()))
            && reduced
                .eq_rhs
                .iter()
                .all(|&b| b.abs() <= opts.feas_tol * (1.0 + b.abs()));
        if !feasible {
            return Ok(LpOutcome::Infeasible);
        }
        let point = match &presolve {
            Some(p) => p.restore(&[]),
            None => Vec::new(),
        };
        let value = dot(&lp.objective, &point) + lp.objective_offset;
        return Ok(LpOutcome::Optimal { value, point });
    }

    let core = run_two_phase(&reduced, opts, bland)?;
    Ok(match core {
        CoreOutcome::Infeasible => LpOutcome::Infeasible,
        CoreOutcome::Unbounded => LpOutcome::Unbounded,
        CoreOutcome::Optimal(x_reduced) => {
            let point = match &presolve {
                Some(p) => p.restore(&x_reduced),
                None => x_reduced,
            };
            let value = dot(&lp.objective, &point) + lp.objective_offset;
            LpOutcome::Optimal { value, point }
        }
    })
}

enum Elimination {
    Infeasible,
    Reduced {
        problem: Box<LpProblem>,
        restore: Restore,
    },
}

/// Back-substitution data: `x[pivot_col] = rhs - coeffs . x[free_cols]`.
struct Restore {
    n_vars: usize,
    free_cols: Vec<usize>,
    pivots: Vec<(usize, Vec<f64>, f64)>, // (pivot col, coeffs over free cols, rhs)
}

impl Restore {
    fn restore(&self, x_free: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_vars];
        for (j, &col) in self.free_cols.iter().enumerate() {
            x[col] = x_free[j];
        }
        for (col, coeffs, rhs) in &self.pivots {
            x[*col] = rhs - dot(coeffs, x_free);
        }
        x
    }
}

/// Gauss-Jordan elimination of the equality block with partial pivoting.
/// Detects inconsistent rows (infeasible) and drops redundant ones.
fn eliminate_equalities(lp: &LpProblem, opts: &SimplexOptions) -> Elimination {
    let m = lp.n_eq();
    let n = lp.n_vars;
    let mut aug = Mat::zeros(m, n + 1);
    let mut scale = 1.0f64;
    for r in 0..m {
        for c in 0..n {
            let v = lp.eq_lhs.get(r, c);
            aug.set(r, c, v);
            scale = scale.max(v.abs());
        }
        aug.set(r, n, lp.eq_rhs[r]);
    }
    let pivot_thr = opts.pivot_tol * scale;
    let b_scale = 1.0 + lp.eq_rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));

    let mut pivot_of_col: Vec<Option<usize>> = vec![None; n];
    let mut rank = 0usize;
    for col in 0..n {
        // Largest remaining entry in this column.
        let mut best = rank;
        let mut best_abs = 0.0;
        for r in rank..m {
            let a = aug.get(r, col).abs();
            if a > best_abs {
                best_abs = a;
                best = r;
            }
        }
        if best_abs <= pivot_thr {
            continue;
        }
        if best != rank {
            for c in 0..=n {
                let tmp = aug.get(rank, c);
                aug.set(rank, c, aug.get(best, c));
                aug.set(best, c, tmp);
            }
        }
        let inv = 1.0 / aug.get(rank, col);
        for c in 0..=n {
            aug.set(rank, c, aug.get(rank, c) * inv);
        }
        aug.set(rank, col, 1.0);
        let pivot_row: Vec<f64> = aug.row(rank).to_vec();
        for r in 0..m {
            if r == rank {
                continue;
            }
            let f = aug.get(r, col);
            if f == 0.0 {
                continue;
            }
            for c in 0..=n {
                aug.set(r, c, aug.get(r, c) - f * pivot_row[c]);
            }
            aug.set(r, col, 0.0);
        }
        pivot_of_col[col] = Some(rank);
        rank += 1;
        if rank == m {
            break;
        }
    }

    // Rows below the rank are all-zero in the coefficients; a nonzero rhs
    // there is an inconsistency.
    for r in rank..m {
        if aug.get(r, n).abs() > opts.feas_tol * b_scale {
            return Elimination::Infeasible;
        }
    }

    let free_cols: Vec<usize> = (0..n).filter(|c| pivot_of_col[*c].is_none()).collect();
    let nf = free_cols.len();

    let mut pivots = Vec::with_capacity(rank);
    for col in 0..n {
        if let Some(r) = pivot_of_col[col] {
            let coeffs: Vec<f64> = free_cols.iter().map(|&fc| aug.get(r, fc)).collect();
            pivots.push((col, coeffs, aug.get(r, n)));
        }
    }
    let restore = Restore {
        n_vars: n,
        free_cols: free_cols.clone(),
        pivots,
    };

    // Substitute into the objective and the inequality rows.
    let reduce_row = |row: &[f64], rhs: f64| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; nf];
        let mut shift = 0.0;
        for (j, &fc) in free_cols.iter().enumerate() {
            out[j] = row[fc];
        }
        for (col, coeffs, prhs) in &restore.pivots {
            let a = row[*col];
            if a == 0.0 {
                continue;
            }
            shift += a * prhs;
            for j in 0..nf {
                out[j] -= a * coeffs[j];
            }
        }
        (out, rhs - shift)
    };

    let (red_obj, neg_extra) = reduce_row(&lp.objective, 0.0);
    let mut ineq_rows = Vec::with_capacity(lp.n_ineq());
    let mut ineq_rhs = Vec::with_capacity(lp.n_ineq());
    for r in 0..lp.n_ineq() {
        let (row, rhs) = reduce_row(lp.ineq_lhs.row(r), lp.ineq_rhs[r]);
        ineq_rows.push(row);
        ineq_rhs.push(rhs);
    }

    let problem = LpProblem {
        n_vars: nf,
        objective: red_obj,
        objective_offset: lp.objective_offset - neg_extra,
        eq_lhs: Mat::zeros(0, nf),
        eq_rhs: Vec::new(),
        ineq_lhs: Mat::from_rows(&ineq_rows).expect("uniform rows"),
        ineq_rhs,
        var_names: None,
    };
    Elimination::Reduced {
        problem: Box::new(problem),
        restore,
    }
}

enum CoreOutcome {
    Optimal(Vec<f64>),
    Infeasible,
    Unbounded,
}

/// Two-phase simplex over the split-variable standard form.
fn run_two_phase(
    lp: &LpProblem,
    opts: &SimplexOptions,
    bland: bool,
) -> Result<CoreOutcome, AttemptError> {
    let n = lp.n_vars;
    let split = 2 * n;
    let m = lp.n_ineq() + lp.n_eq();

    #[derive(Clone, Copy, PartialEq)]
    enum Rel {
        Le,
        Ge,
        Eq,
    }

    // Assemble rows with nonnegative rhs.
    let mut rows: Vec<(Vec<f64>, Rel, f64)> = Vec::with_capacity(m);
    let push_row = |rows: &mut Vec<(Vec<f64>, Rel, f64)>, coeffs: &[f64], rel: Rel, rhs: f64| {
        let mut split_row = vec![0.0; split];
        for (j, &a) in coeffs.iter().enumerate() {
            split_row[j] = a;
            split_row[n + j] = -a;
        }
        if rhs < 0.0 {
            for v in &mut split_row {
                *v = -*v;
            }
            let rel = match rel {
                Rel::Le => Rel::Ge,
                Rel::Ge => Rel::Le,
                Rel::Eq => Rel::Eq,
            };
            rows.push((split_row, rel, -rhs));
        } else {
            rows.push((split_row, rel, rhs));
        }
    };
    for r in 0..lp.n_ineq() {
        push_row(&mut rows, lp.ineq_lhs.row(r), Rel::Le, lp.ineq_rhs[r]);
    }
    for r in 0..lp.n_eq() {
        push_row(&mut rows, lp.eq_lhs.row(r), Rel::Eq, lp.eq_rhs[r]);
    }

    let n_slack = rows.iter().filter(|r| r.1 == Rel::Le).count();
    let n_surplus = rows.iter().filter(|r| r.1 == Rel::Ge).count();
    let n_art = rows
        .iter()
        .filter(|r| matches!(r.1, Rel::Ge | Rel::Eq))
        .count();
    let slack0 = split;
    let surplus0 = slack0 + n_slack;
    let art0 = surplus0 + n_surplus;
    let total = art0 + n_art;

    let mut t = Tableau::new(m, total);
    let mut basis = vec![0usize; m];
    let (mut si, mut su, mut ai) = (0, 0, 0);
    for (r, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        for (j, &a) in coeffs.iter().enumerate() {
            t.set(r, j, a);
        }
        t.set_rhs(r, *rhs);
        match rel {
            Rel::Le => {
                t.set(r, slack0 + si, 1.0);
                basis[r] = slack0 + si;
                si += 1;
            }
            Rel::Ge => {
                t.set(r, surplus0 + su, -1.0);
                su += 1;
                t.set(r, art0 + ai, 1.0);
                basis[r] = art0 + ai;
                ai += 1;
            }
            Rel::Eq => {
                t.set(r, art0 + ai, 1.0);
                basis[r] = art0 + ai;
                ai += 1;
            }
        }
    }

    let b_scale = 1.0 + rows.iter().fold(0.0f64, |a, r| a.max(r.2));
    let max_pivots = if opts.max_pivots > 0 {
        opts.max_pivots
    } else {
        200 * (m + total) + 5_000
    };
    let stall = if opts.stall_threshold > 0 {
        opts.stall_threshold
    } else {
        20 * (m + 2) + 200
    };
    let mut budget = Budget {
        used: 0,
        max: max_pivots,
    };

    // Phase 1: drive the artificials to zero.
    if n_art > 0 {
        for j in art0..total {
            t.set_obj(j, -1.0);
        }
        for r in 0..m {
            if basis[r] >= art0 {
                t.add_row_to_obj(r, 1.0);
            }
        }
        match t.iterate(&mut basis, opts.pivot_tol, total, bland, stall, &mut budget) {
            IterStatus::Optimal => {}
            IterStatus::Unbounded => {
                return Err(AttemptError::Fatal(SimplexError::Numerical(
                    "phase 1 reported unbounded".into(),
                )));
            }
            IterStatus::Limit => {
                return Err(AttemptError::IterationLimit(format!(
                    "phase 1 exceeded {max_pivots} pivots"
                )));
            }
        }
        let art_sum = -t.obj_value();
        if art_sum > opts.feas_tol * b_scale {
            return Ok(CoreOutcome::Infeasible);
        }
        // Pivot lingering artificials out of the basis where possible.
        for r in 0..m {
            if basis[r] < art0 {
                continue;
            }
            let mut entered = false;
            for j in 0..art0 {
                if t.get(r, j).abs() > opts.pivot_tol {
                    t.pivot(r, j, &mut basis);
                    entered = true;
                    break;
                }
            }
            // A redundant row: its artificial stays basic at level zero and
            // is barred from re-entering, so it never moves again.
            let _ = entered;
        }
    }

    // Phase 2: the real objective over the split variables.
    t.clear_obj();
    for j in 0..n {
        t.set_obj(j, lp.objective[j]);
        t.set_obj(n + j, -lp.objective[j]);
    }
    for r in 0..m {
        let bj = basis[r];
        let c = t.obj(bj);
        if c != 0.0 {
            t.add_row_to_obj(r, -c);
        }
    }
    match t.iterate(&mut basis, opts.pivot_tol, art0, bland, stall, &mut budget) {
        IterStatus::Optimal => {}
        IterStatus::Unbounded => return Ok(CoreOutcome::Unbounded),
        IterStatus::Limit => {
            return Err(AttemptError::IterationLimit(format!(
                "phase 2 exceeded {max_pivots} pivots"
            )));
        }
    }

    let mut x = vec![0.0; n];
    for r in 0..m {
        let bj = basis[r];
        if bj < n {
            x[bj] += t.rhs(r);
        } else if bj < split {
            x[bj - n] -= t.rhs(r);
        }
    }
    Ok(CoreOutcome::Optimal(x))
}

struct Budget {
    used: usize,
    max: usize,
}

enum IterStatus {
    Optimal,
    Unbounded,
    Limit,
}

/// Row-major tableau with the objective row stored last. The objective
/// row's rhs cell holds the negated objective value.
struct Tableau {
    m: usize,
    total: usize,
    stride: usize,
    data: Vec<f64>,
    scratch: Vec<f64>,
}

impl Tableau {
    fn new(m: usize, total: usize) -> Self {
        let stride = total + 1;
        Tableau {
            m,
            total,
            stride,
            data: vec![0.0; (m + 1) * stride],
            scratch: vec![0.0; stride],
        }
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.stride + c]
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.stride + c] = v;
    }

    fn rhs(&self, r: usize) -> f64 {
        self.get(r, self.total)
    }

    fn set_rhs(&mut self, r: usize, v: f64) {
        self.set(r, self.total, v);
    }

    fn obj(&self, c: usize) -> f64 {
        self.get(self.m, c)
    }

    fn set_obj(&mut self, c: usize, v: f64) {
        self.set(self.m, c, v);
    }

    fn obj_value(&self) -> f64 {
        -self.get(self.m, self.total)
    }

    fn clear_obj(&mut self) {
        let base = self.m * self.stride;
        for v in &mut self.data[base..base + self.stride] {
            *v = 0.0;
        }
    }

    fn add_row_to_obj(&mut self, r: usize, factor: f64) {
        let (row_base, obj_base) = (r * self.stride, self.m * self.stride);
        for c in 0..self.stride {
            self.data[obj_base + c] += factor * self.data[row_base + c];
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize, basis: &mut [usize]) {
        let stride = self.stride;
        let piv = self.get(pr, pc);
        let inv = 1.0 / piv;
        {
            let base = pr * stride;
            for v in &mut self.data[base..base + stride] {
                *v *= inv;
            }
            self.data[base + pc] = 1.0;
            self.scratch
                .copy_from_slice(&self.data[base..base + stride]);
        }
        for r in 0..=self.m {
            if r == pr {
                continue;
            }
            let base = r * stride;
            let f = self.data[base + pc];
            if f == 0.0 {
                continue;
            }
            for c in 0..stride {
                self.data[base + c] -= f * self.scratch[c];
            }
            self.data[base + pc] = 0.0;
        }
        basis[pr] = pc;
    }

    /// Runs simplex iterations until optimality, unboundedness, or the
    /// pivot budget runs out. Columns at `allowed` and beyond never enter
    /// (used to bar artificials in phase 2).
    fn iterate(
        &mut self,
        basis: &mut [usize],
        pivot_tol: f64,
        allowed: usize,
        bland_from_start: bool,
        stall_threshold: usize,
        budget: &mut Budget,
    ) -> IterStatus {
        let mut bland = bland_from_start;
        let mut stagnant = 0usize;
        let mut last_value = self.obj_value();
        loop {
            // Entering column.
            let mut entering = None;
            if bland {
                for c in 0..allowed {
                    if self.obj(c) > pivot_tol {
                        entering = Some(c);
                        break;
                    }
                }
            } else {
                let mut best = pivot_tol;
                for c in 0..allowed {
                    let v = self.obj(c);
                    if v > best {
                        best = v;
                        entering = Some(c);
                    }
                }
            }
            let Some(pc) = entering else {
                return IterStatus::Optimal;
            };

            // Ratio test; ties broken by the smallest basis index, which
            // together with Bland's entering rule prevents cycling.
            let mut leaving: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for r in 0..self.m {
                let a = self.get(r, pc);
                if a > pivot_tol {
                    let ratio = self.rhs(r) / a;
                    let better = match leaving {
                        None => true,
                        Some(cur) => {
                            ratio < best_ratio - 1e-12
                                || ((ratio - best_ratio).abs() <= 1e-12 && basis[r] < basis[cur])
                        }
                    };
                    if better {
                        best_ratio = ratio;
                        leaving = Some(r);
                    }
                }
            }
            let Some(pr) = leaving else {
                return IterStatus::Unbounded;
            };

            self.pivot(pr, pc, basis);
            budget.used += 1;
            if budget.used > budget.max {
                return IterStatus::Limit;
            }

            if !bland {
                let value = self.obj_value();
                if value > last_value + 1e-12 * (1.0 + last_value.abs()) {
                    stagnant = 0;
                    last_value = value;
                } else {
                    stagnant += 1;
                    if stagnant > stall_threshold {
                        bland = true;
                    }
                }
            }
        }
    }
}
