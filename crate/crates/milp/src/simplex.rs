//! Bounded-variable primal simplex on the revised form.
//!
//! Every row `i` gets a logical variable `s_i` so that `A x + s = b`, with
//! `s_i` bounded by the row sense. Phase one minimises the sum of bound
//! violations of the basic variables directly (no artificials), which lets
//! any basis seed a solve: branch-and-bound children start from their
//! parent's optimal basis.

use crate::error::MilpError;
use crate::lu::LuFactors;
use crate::problem::{LpProblem, RowSense};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Free,
}

/// A simplex basis that can seed another solve of a problem of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub(crate) head: Vec<usize>,
    pub(crate) state: Vec<VarState>,
}

/// Column-compressed copy of the constraint matrix plus the row data the
/// simplex needs. Built once per problem and shared by all node solves.
#[derive(Debug, Clone)]
pub(crate) struct StandardForm {
    pub n: usize,
    pub m: usize,
    col_start: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    logical_bounds: Vec<(f64, f64)>,
    obj_offset: f64,
}

impl StandardForm {
    pub fn new(lp: &LpProblem) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut counts = vec![0usize; n + 1];
        for row in &lp.rows {
            for &(j, _) in &row.coefs {
                counts[j + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let nnz = counts[n];
        let mut next = counts.clone();
        let mut row_idx = vec![0; nnz];
        let mut vals = vec![0.0; nnz];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, v) in &row.coefs {
                row_idx[next[j]] = i;
                vals[next[j]] = v;
                next[j] += 1;
            }
        }
        let mut cost = lp.c.clone();
        cost.resize(n + m, 0.0);
        let logical_bounds = lp
            .rows
            .iter()
            .map(|r| match r.sense {
                RowSense::Le => (0.0, f64::INFINITY),
                RowSense::Ge => (f64::NEG_INFINITY, 0.0),
                RowSense::Eq => (0.0, 0.0),
            })
            .collect();
        Self {
            n,
            m,
            col_start: counts,
            row_idx,
            vals,
            rhs: lp.rows.iter().map(|r| r.rhs).collect(),
            cost,
            logical_bounds,
            obj_offset: lp.obj_offset,
        }
    }

    fn for_each_in_column(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for e in self.col_start[j]..self.col_start[j + 1] {
                f(self.row_idx[e], self.vals[e]);
            }
        } else {
            f(j - self.n, 1.0);
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            let mut s = 0.0;
            for e in self.col_start[j]..self.col_start[j + 1] {
                s += self.vals[e] * y[self.row_idx[e]];
            }
            s
        } else {
            y[j - self.n]
        }
    }

    fn sparse_column(&self, j: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.for_each_in_column(j, |i, v| out.push((i, v)));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub(crate) struct LpResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    pub iterations: usize,
    pub basis: Basis,
}

enum Step {
    Flip { theta: f64 },
    Pivot { r: usize, theta: f64, to_upper: bool },
    Unbounded,
}

struct Solver<'a> {
    sf: &'a StandardForm,
    tol: &'a Tolerances,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    head: Vec<usize>,
    lu: LuFactors,
    iterations: usize,
}

/// Solves the LP in `sf` with structural bounds `bounds`, optionally seeded by `warm`.
pub(crate) fn solve(
    sf: &StandardForm,
    bounds: &[(f64, f64)],
    warm: Option<&Basis>,
    tol: &Tolerances,
) -> Result<LpResult, MilpError> {
    let n = sf.n;
    let m = sf.m;
    let mut lo = Vec::with_capacity(n + m);
    let mut hi = Vec::with_capacity(n + m);
    for &(l, h) in bounds.iter().chain(sf.logical_bounds.iter()) {
        lo.push(l);
        hi.push(h);
    }
    if lo.iter().zip(&hi).any(|(l, h)| l > h) {
        // empty box after branching
        return Ok(LpResult {
            status: LpStatus::Infeasible,
            x: Vec::new(),
            objective: f64::INFINITY,
            duals: Vec::new(),
            iterations: 0,
            basis: Basis { head: Vec::new(), state: Vec::new() },
        });
    }
    let mut s = Solver {
        sf,
        tol,
        lo,
        hi,
        x: vec![0.0; n + m],
        state: vec![VarState::AtLower; n + m],
        head: Vec::with_capacity(m),
        lu: LuFactors::default(),
        iterations: 0,
    };
    match warm {
        Some(b) if b.head.len() == m && b.state.len() == n + m => {
            s.head = b.head.clone();
            s.state = b.state.clone();
        }
        _ => {
            s.head = (n..n + m).collect();
            for j in n..n + m {
                s.state[j] = VarState::Basic;
            }
        }
    }
    for j in 0..n + m {
        if s.state[j] != VarState::Basic {
            s.place_nonbasic(j);
        }
    }
    s.run()
}

impl<'a> Solver<'a> {
    fn place_nonbasic(&mut self, j: usize) {
        let (lo, hi) = (self.lo[j], self.hi[j]);
        let preferred = self.state[j];
        let st = match preferred {
            VarState::AtUpper if hi.is_finite() => VarState::AtUpper,
            _ if lo.is_finite() => VarState::AtLower,
            _ if hi.is_finite() => VarState::AtUpper,
            _ => VarState::Free,
        };
        self.state[j] = st;
        self.x[j] = match st {
            VarState::AtLower => lo,
            VarState::AtUpper => hi,
            _ => 0.0,
        };
    }

    fn factor(&mut self) -> Result<(), MilpError> {
        let m = self.sf.m;
        for _attempt in 0..8 {
            let cols: Vec<Vec<(usize, f64)>> = self.head.iter().map(|&j| self.sf.sparse_column(j)).collect();
            match LuFactors::factorize(m, &cols, self.tol.pivot_zero) {
                Ok(lu) => {
                    self.lu = lu;
                    return Ok(());
                }
                Err(sing) => {
                    // swap dependent columns for the logicals of unpivoted rows
                    for (&p, &i) in sing.positions.iter().zip(&sing.free_rows) {
                        let out = self.head[p];
                        let v = self.x[out];
                        self.state[out] = if (v - self.hi[out]).abs() < (v - self.lo[out]).abs() {
                            VarState::AtUpper
                        } else {
                            VarState::AtLower
                        };
                        self.place_nonbasic(out);
                        let logical = self.sf.n + i;
                        self.head[p] = logical;
                        self.state[logical] = VarState::Basic;
                    }
                }
            }
        }
        Err(MilpError::Numerical("basis stays singular after repair".into()))
    }

    fn compute_basic_values(&mut self) {
        let mut r = self.sf.rhs.clone();
        for j in 0..self.sf.n + self.sf.m {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                self.sf.for_each_in_column(j, |i, v| r[i] -= v * xj);
            }
        }
        self.lu.ftran(&mut r);
        for (p, &j) in self.head.iter().enumerate() {
            self.x[j] = r[p];
        }
    }

    fn run(mut self) -> Result<LpResult, MilpError> {
        let n = self.sf.n;
        let m = self.sf.m;
        let tol = *self.tol;
        let max_iter = 50 * (n + m) + 10_000;
        self.factor()?;
        self.compute_basic_values();
        let mut fresh = true;
        let mut degenerate_run = 0usize;
        let mut cb = vec![0.0; m];
        let mut alpha = vec![0.0; m];

        loop {
            if self.lu.num_etas() >= tol.refactor_interval {
                self.factor()?;
                self.compute_basic_values();
                fresh = true;
            }
            let mut phase_one = false;
            for (p, &j) in self.head.iter().enumerate() {
                let v = self.x[j];
                cb[p] = if v < self.lo[j] - tol.primal_feas {
                    phase_one = true;
                    -1.0
                } else if v > self.hi[j] + tol.primal_feas {
                    phase_one = true;
                    1.0
                } else {
                    0.0
                };
            }
            if !phase_one {
                for (p, &j) in self.head.iter().enumerate() {
                    cb[p] = self.sf.cost[j];
                }
            }
            let mut y = cb.clone();
            self.lu.btran(&mut y);

            let bland = degenerate_run >= tol.bland_after;
            let Some((q, dq)) = self.price(&y, phase_one, bland) else {
                if !fresh {
                    self.factor()?;
                    self.compute_basic_values();
                    fresh = true;
                    continue;
                }
                let status = if phase_one { LpStatus::Infeasible } else { LpStatus::Optimal };
                return Ok(self.finish(status, y));
            };

            self.iterations += 1;
            if self.iterations > max_iter {
                return Err(MilpError::IterationLimit(max_iter));
            }
            alpha.iter_mut().for_each(|a| *a = 0.0);
            self.sf.for_each_in_column(q, |i, v| alpha[i] = v);
            self.lu.ftran(&mut alpha);

            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            let step = if bland { self.ratio_bland(q, dir, &alpha) } else { self.ratio_harris(q, dir, &alpha) };
            let theta = match step {
                Step::Unbounded => {
                    if phase_one {
                        if !fresh {
                            self.factor()?;
                            self.compute_basic_values();
                            fresh = true;
                            continue;
                        }
                        return Err(MilpError::Numerical("phase one ray without a blocking variable".into()));
                    }
                    return Ok(self.finish(LpStatus::Unbounded, y));
                }
                Step::Flip { theta } => {
                    self.shift(q, dir, theta, &alpha);
                    self.state[q] = if self.state[q] == VarState::AtLower { VarState::AtUpper } else { VarState::AtLower };
                    self.x[q] = if self.state[q] == VarState::AtLower { self.lo[q] } else { self.hi[q] };
                    theta
                }
                Step::Pivot { r, theta, to_upper } => {
                    self.shift(q, dir, theta, &alpha);
                    let out = self.head[r];
                    self.state[out] = if to_upper { VarState::AtUpper } else { VarState::AtLower };
                    self.x[out] = if to_upper { self.hi[out] } else { self.lo[out] };
                    self.head[r] = q;
                    self.state[q] = VarState::Basic;
                    self.lu.push_eta(r, &alpha);
                    theta
                }
            };
            fresh = false;
            if theta <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
        }
    }

    /// Moves the entering variable by `theta` in direction `dir` and the basics accordingly.
    fn shift(&mut self, q: usize, dir: f64, theta: f64, alpha: &[f64]) {
        if theta == 0.0 {
            return;
        }
        self.x[q] += dir * theta;
        for (p, &j) in self.head.iter().enumerate() {
            if alpha[p] != 0.0 {
                self.x[j] -= dir * theta * alpha[p];
            }
        }
    }

    fn price(&self, y: &[f64], phase_one: bool, bland: bool) -> Option<(usize, f64)> {
        let tol = self.tol.dual_feas;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.sf.n + self.sf.m {
            let st = self.state[j];
            if st == VarState::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let cj = if phase_one { 0.0 } else { self.sf.cost[j] };
            let d = cj - self.sf.dot_column(j, y);
            let eligible = match st {
                VarState::AtLower => d < -tol,
                VarState::AtUpper => d > tol,
                VarState::Free => d.abs() > tol,
                VarState::Basic => false,
            };
            if !eligible {
                continue;
            }
            if bland {
                return Some((j, d));
            }
            if best.map_or(true, |(_, bd)| d.abs() > bd.abs()) {
                best = Some((j, d));
            }
        }
        best
    }

    /// Bound a basic variable runs into while moving at `rate`, or `None` if it
    /// may move freely. Returns `(bound value, is_upper)`.
    fn blocking_bound(&self, j: usize, rate: f64) -> Option<(f64, bool)> {
        let feas = self.tol.primal_feas;
        let v = self.x[j];
        if rate < 0.0 {
            if v > self.hi[j] + feas {
                Some((self.hi[j], true))
            } else if v < self.lo[j] - feas || self.lo[j] == f64::NEG_INFINITY {
                None
            } else {
                Some((self.lo[j], false))
            }
        } else if v < self.lo[j] - feas {
            Some((self.lo[j], false))
        } else if v > self.hi[j] + feas || self.hi[j] == f64::INFINITY {
            None
        } else {
            Some((self.hi[j], true))
        }
    }

    /// Signed distance from basic variable `j` to `bound` along its direction of travel.
    fn distance(&self, j: usize, bound: f64, rate: f64) -> f64 {
        if rate < 0.0 {
            self.x[j] - bound
        } else {
            bound - self.x[j]
        }
    }

    fn ratio_harris(&self, q: usize, dir: f64, alpha: &[f64]) -> Step {
        let feas = self.tol.primal_feas;
        let piv = self.tol.pivot_candidate;
        let range = self.hi[q] - self.lo[q];
        let mut theta_max = f64::INFINITY;
        for (p, &j) in self.head.iter().enumerate() {
            let a = alpha[p];
            if a.abs() <= piv {
                continue;
            }
            let rate = -dir * a;
            if let Some((bound, _)) = self.blocking_bound(j, rate) {
                let dist = self.distance(j, bound, rate);
                theta_max = theta_max.min((dist + feas).max(0.0) / rate.abs());
            }
        }
        if range <= theta_max {
            if range.is_finite() {
                return Step::Flip { theta: range };
            }
            return Step::Unbounded;
        }
        let mut best: Option<(usize, f64, bool)> = None;
        let mut best_abs = 0.0;
        for (p, &j) in self.head.iter().enumerate() {
            let a = alpha[p];
            if a.abs() <= piv {
                continue;
            }
            let rate = -dir * a;
            if let Some((bound, upper)) = self.blocking_bound(j, rate) {
                let exact = self.distance(j, bound, rate).max(0.0) / rate.abs();
                if exact <= theta_max && a.abs() > best_abs {
                    best_abs = a.abs();
                    best = Some((p, exact, upper));
                }
            }
        }
        match best {
            Some((r, theta, to_upper)) => Step::Pivot { r, theta, to_upper },
            None => Step::Unbounded,
        }
    }

    fn ratio_bland(&self, q: usize, dir: f64, alpha: &[f64]) -> Step {
        let piv = self.tol.pivot_candidate;
        let range = self.hi[q] - self.lo[q];
        let mut best: Option<(usize, f64, bool)> = None;
        for (p, &j) in self.head.iter().enumerate() {
            let a = alpha[p];
            if a.abs() <= piv {
                continue;
            }
            let rate = -dir * a;
            if let Some((bound, upper)) = self.blocking_bound(j, rate) {
                let theta = self.distance(j, bound, rate).max(0.0) / rate.abs();
                let better = match best {
                    None => true,
                    Some((bp, bt, _)) => theta < bt - 1e-12 || (theta <= bt + 1e-12 && j < self.head[bp]),
                };
                if better {
                    best = Some((p, theta, upper));
                }
            }
        }
        match best {
            Some((_, theta, _)) if range <= theta => Step::Flip { theta: range },
            Some((r, theta, to_upper)) => Step::Pivot { r, theta, to_upper },
            None if range.is_finite() => Step::Flip { theta: range },
            None => Step::Unbounded,
        }
    }

    fn finish(self, status: LpStatus, y: Vec<f64>) -> LpResult {
        let n = self.sf.n;
        let x: Vec<f64> = self.x[..n].to_vec();
        let objective = match status {
            LpStatus::Optimal => self.sf.obj_offset + x.iter().zip(&self.sf.cost).map(|(v, c)| v * c).sum::<f64>(),
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
        };
        LpResult {
            status,
            x,
            objective,
            duals: if status == LpStatus::Optimal { y } else { Vec::new() },
            iterations: self.iterations,
            basis: Basis { head: self.head, state: self.state },
        }
    }
}
