//! Bounded-variable revised simplex for the LP relaxations.
//!
//! Every row `i` gets a logical variable `r_i = s_i * a_i x` whose bounds
//! encode the row relation, so the working system is `A x - r = 0` over
//! `n + m` bounded variables. Rows are scaled by `s_i = 1 / max_j |a_ij|`.
//! The basis inverse is kept dense and updated in product form; every
//! `refactor_every` pivots it is rebuilt, inverting only the block of
//! structural basics against the rows without a basic logical.
//!
//! Dual pricing uses steepest-edge weights (the squared rows of the
//! inverse) and the ratio test flips boxed variables past breakpoints
//! before a Harris pass picks the entering column. Costs get a small
//! deterministic perturbation while the dual simplex runs; it is removed
//! and the primal cleans up before an optimum is reported.
//!
//! Structural variables are boxed, so the slack basis with every
//! structural at its cost-favourable bound is dual feasible; cold starts
//! and warm starts after bound changes both run the dual simplex. The
//! primal simplex finishes whenever the basis is primal but not dual
//! feasible. A zero-cost dual pass serves as phase 1 in the rare case where
//! neither holds and bound flips cannot restore dual feasibility.

use crate::error::{Error, Result};
use crate::model::{MilpModel, Relation};

#[derive(Debug, Clone, PartialEq)]
pub struct LpOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    /// Per-solve iteration cap; `50 * (rows + cols)` when `None`.
    pub max_iterations: Option<usize>,
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-7,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iterations: None,
            refactor_every: 200,
            bland_after: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
}

/// Basic set (one variable per row) and the position of every variable.
/// Indices `0..n` are structurals, `n..n+m` row logicals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Basis {
    pub basic: Vec<usize>,
    pub status: Vec<VarStatus>,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    /// Structural values.
    pub x: Vec<f64>,
    /// Objective in the model's (maximization) sense.
    pub objective: f64,
    pub basis: Basis,
    pub iterations: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Scaled, column-wise copy of a model's constraint matrix.
#[derive(Debug, Clone)]
pub struct LpProblem {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    /// Minimization costs (negated objective).
    cost: Vec<f64>,
    row_lo: Vec<f64>,
    row_hi: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LpProblem {
    pub fn new(model: &MilpModel) -> Self {
        let n = model.n_vars();
        let m = model.n_rows();
        let mut cols = vec![Vec::new(); n];
        let mut row_lo = Vec::with_capacity(m);
        let mut row_hi = Vec::with_capacity(m);
        for (i, row) in model.rows.iter().enumerate() {
            let big = row.coeffs.iter().map(|(_, a)| a.abs()).fold(0.0, f64::max);
            let s = if big > 0.0 { 1.0 / big } else { 1.0 };
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    cols[j].push((i, a * s));
                }
            }
            let b = row.rhs * s;
            let (lo, hi) = match row.relation {
                Relation::Le => (f64::NEG_INFINITY, b),
                Relation::Ge => (b, f64::INFINITY),
                Relation::Eq => (b, b),
            };
            row_lo.push(lo);
            row_hi.push(hi);
        }
        let mut col_start = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_start.push(0);
        for col in cols {
            for (i, a) in col {
                row_idx.push(i);
                values.push(a);
            }
            col_start.push(row_idx.len());
        }
        Self {
            n,
            m,
            col_start,
            row_idx,
            values,
            cost: model.objective.iter().map(|c| -c).collect(),
            row_lo,
            row_hi,
            lower: model.lower_bounds(),
            upper: model.upper_bounds(),
        }
    }

    pub fn n_cols(&self) -> usize {
        self.n
    }

    fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_start[j]..self.col_start[j + 1];
        self.row_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn n_rows(&self) -> usize {
        self.m
    }

    pub fn default_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lower.clone(), self.upper.clone())
    }
}

/// Mutable simplex state over one [`LpProblem`]. Keeping the engine alive
/// between related solves avoids refactorizing the basis.
pub struct LpEngine<'a> {
    prob: &'a LpProblem,
    opts: LpOptions,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    status: Vec<VarStatus>,
    basic: Vec<usize>,
    /// Row of each basic variable, `usize::MAX` when nonbasic.
    pos: Vec<usize>,
    x: Vec<f64>,
    d: Vec<f64>,
    /// Dense `B^{-1}`, row-major.
    binv: Vec<f64>,
    /// Squared norms of the rows of `B^{-1}` (dual steepest-edge weights).
    row_norm2: Vec<f64>,
    since_refactor: usize,
    degenerate_run: usize,
    bland: bool,
    phase_one: bool,
    perturbed: bool,
    // scratch
    alpha_col: Vec<f64>,
    alpha_row: Vec<f64>,
}

enum Step {
    Continue,
    Done(LpStatus),
}

impl<'a> LpEngine<'a> {
    /// Slack basis with default bounds.
    pub fn new(prob: &'a LpProblem, opts: LpOptions) -> Self {
        let (n, m) = (prob.n, prob.m);
        let mut lo = prob.lower.clone();
        let mut hi = prob.upper.clone();
        lo.extend_from_slice(&prob.row_lo);
        hi.extend_from_slice(&prob.row_hi);
        let mut cost = prob.cost.clone();
        cost.resize(n + m, 0.0);
        let mut engine = Self {
            prob,
            opts,
            lo,
            hi,
            cost,
            status: vec![VarStatus::AtLower; n + m],
            basic: Vec::new(),
            pos: vec![usize::MAX; n + m],
            x: vec![0.0; n + m],
            d: vec![0.0; n + m],
            binv: Vec::new(),
            row_norm2: vec![1.0; m],
            since_refactor: 0,
            degenerate_run: 0,
            bland: false,
            phase_one: false,
            perturbed: false,
            alpha_col: vec![0.0; m],
            alpha_row: vec![0.0; n + m],
        };
        engine.slack_basis();
        engine
    }

    fn n_total(&self) -> usize {
        self.prob.n + self.prob.m
    }

    fn slack_basis(&mut self) {
        let (n, m) = (self.prob.n, self.prob.m);
        self.basic = (n..n + m).collect();
        for j in 0..n {
            self.status[j] = if self.cost[j] < 0.0 && self.hi[j].is_finite() || !self.lo[j].is_finite() {
                VarStatus::AtUpper
            } else {
                VarStatus::AtLower
            };
        }
        for j in n..n + m {
            self.status[j] = VarStatus::Basic;
        }
        self.refactor_or_reset();
    }

    /// Replaces structural bounds; the basis is kept.
    pub fn set_bounds(&mut self, lower: &[f64], upper: &[f64]) {
        let n = self.prob.n;
        self.lo[..n].copy_from_slice(&lower[..n]);
        self.hi[..n].copy_from_slice(&upper[..n]);
        self.snap_nonbasic();
        self.compute_primal();
    }

    /// Adopts `basis` (e.g. a parent node's) and refactorizes. Falls back to
    /// the slack basis when it is malformed or singular.
    pub fn load_basis(&mut self, basis: &Basis) {
        let nt = self.n_total();
        let valid = basis.basic.len() == self.prob.m
            && basis.status.len() == nt
            && basis.basic.iter().all(|&j| j < nt && basis.status[j] == VarStatus::Basic)
            && basis.status.iter().filter(|s| **s == VarStatus::Basic).count() == self.prob.m;
        if !valid {
            self.slack_basis();
            return;
        }
        self.basic = basis.basic.clone();
        self.status = basis.status.clone();
        self.refactor_or_reset();
    }

    pub fn basis(&self) -> Basis {
        Basis {
            basic: self.basic.clone(),
            status: self.status.clone(),
        }
    }

    fn snap_nonbasic(&mut self) {
        for j in 0..self.n_total() {
            match self.status[j] {
                VarStatus::Basic => continue,
                VarStatus::AtLower if !self.lo[j].is_finite() => self.status[j] = VarStatus::AtUpper,
                VarStatus::AtUpper if !self.hi[j].is_finite() => self.status[j] = VarStatus::AtLower,
                _ => {}
            }
            self.x[j] = match self.status[j] {
                VarStatus::AtLower => self.lo[j],
                VarStatus::AtUpper => self.hi[j],
                VarStatus::Basic => unreachable!(),
            };
            if !self.x[j].is_finite() {
                self.x[j] = 0.0;
            }
        }
    }

    fn refactor_or_reset(&mut self) {
        if !self.refactor() {
            let (n, m) = (self.prob.n, self.prob.m);
            self.basic = (n..n + m).collect();
            for j in 0..n {
                if self.status[j] == VarStatus::Basic {
                    self.status[j] = VarStatus::AtLower;
                }
            }
            for j in n..n + m {
                self.status[j] = VarStatus::Basic;
            }
            let ok = self.refactor();
            debug_assert!(ok);
        }
    }

    /// Inverts the basis matrix and recomputes primal and dual values.
    /// Returns false when the basis is singular.
    ///
    /// Logical columns are unit vectors, so only the block of structural
    /// basic columns restricted to rows without a basic logical needs a
    /// dense Gauss-Jordan inversion; the logical rows follow from it.
    fn refactor(&mut self) -> bool {
        let m = self.prob.m;
        let n = self.prob.n;
        let mut logical_pos = vec![usize::MAX; m];
        let mut structural: Vec<(usize, usize)> = Vec::new();
        for (k, &j) in self.basic.iter().enumerate() {
            if j < n {
                structural.push((k, j));
            } else {
                logical_pos[j - n] = k;
            }
        }
        let free_rows: Vec<usize> = (0..m).filter(|&i| logical_pos[i] == usize::MAX).collect();
        let s = structural.len();
        if free_rows.len() != s {
            return false;
        }
        let mut local = vec![usize::MAX; m];
        for (t, &i) in free_rows.iter().enumerate() {
            local[i] = t;
        }
        // b = A restricted to (free rows, structural columns); columns of b
        // follow the order of `structural`.
        let mut b = vec![0.0; s * s];
        for (c, &(_, j)) in structural.iter().enumerate() {
            for (i, a) in self.prob.col(j) {
                if local[i] != usize::MAX {
                    b[local[i] * s + c] = a;
                }
            }
        }
        let mut sinv = vec![0.0; s * s];
        for i in 0..s {
            sinv[i * s + i] = 1.0;
        }
        for k in 0..s {
            let mut piv = k;
            let mut best = b[k * s + k].abs();
            for i in k + 1..s {
                let v = b[i * s + k].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best < 1e-11 {
                return false;
            }
            if piv != k {
                for c in 0..s {
                    b.swap(k * s + c, piv * s + c);
                    sinv.swap(k * s + c, piv * s + c);
                }
            }
            let rp = 1.0 / b[k * s + k];
            for c in 0..s {
                b[k * s + c] *= rp;
                sinv[k * s + c] *= rp;
            }
            let brow = b[k * s..(k + 1) * s].to_vec();
            let irow = sinv[k * s..(k + 1) * s].to_vec();
            for i in 0..s {
                if i == k {
                    continue;
                }
                let f = b[i * s + k];
                if f == 0.0 {
                    continue;
                }
                for (x, y) in b[i * s..(i + 1) * s].iter_mut().zip(&brow).skip(k) {
                    *x -= f * y;
                }
                for (x, y) in sinv[i * s..(i + 1) * s].iter_mut().zip(&irow) {
                    *x -= f * y;
                }
            }
        }
        // Row c of sinv maps free-row residuals to structural c.
        let mut inv = vec![0.0; m * m];
        for (c, &(k, _)) in structural.iter().enumerate() {
            let row = &mut inv[k * m..(k + 1) * m];
            for (t, &i) in free_rows.iter().enumerate() {
                row[i] = sinv[c * s + t];
            }
        }
        // A logical row i reads r_i = sum_c a_ic x_c - v_i.
        for i in 0..m {
            let k = logical_pos[i];
            if k != usize::MAX {
                inv[k * m + i] = -1.0;
            }
        }
        for (c, &(_, j)) in structural.iter().enumerate() {
            for (i, a) in self.prob.col(j) {
                let k = logical_pos[i];
                if k == usize::MAX {
                    continue;
                }
                for (t, &fi) in free_rows.iter().enumerate() {
                    inv[k * m + fi] += a * sinv[c * s + t];
                }
            }
        }
        for k in 0..m {
            self.row_norm2[k] = sum_sq(&inv[k * m..(k + 1) * m]);
        }
        self.binv = inv;
        for p in self.pos.iter_mut() {
            *p = usize::MAX;
        }
        for (k, &j) in self.basic.iter().enumerate() {
            self.pos[j] = k;
        }
        self.since_refactor = 0;
        self.snap_nonbasic();
        self.compute_primal();
        self.compute_duals();
        true
    }

    /// `x_B = -B^{-1} sum_{j in N} a_j x_j`.
    fn compute_primal(&mut self) {
        let (n, m) = (self.prob.n, self.prob.m);
        let mut v = vec![0.0; m];
        for j in 0..n + m {
            if self.status[j] == VarStatus::Basic || self.x[j] == 0.0 {
                continue;
            }
            if j < n {
                for (i, a) in self.prob.col(j) {
                    v[i] += a * self.x[j];
                }
            } else {
                v[j - n] -= self.x[j];
            }
        }
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            let s: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            self.x[self.basic[k]] = -s;
        }
    }

    /// Largest violation of `A x - r = 0` at the current values.
    fn row_residual(&self) -> f64 {
        let n = self.prob.n;
        let mut v: Vec<f64> = self.x[n..].iter().map(|r| -r).collect();
        for j in 0..n {
            let xj = self.x[j];
            if xj != 0.0 {
                for (i, a) in self.prob.col(j) {
                    v[i] += a * xj;
                }
            }
        }
        v.iter().fold(0.0, |acc, r| acc.max(r.abs()))
    }

    /// `x_B -= B^{-1} v`, touching only the nonzero entries of `v`.
    fn shift_basics(&mut self, v: &[f64]) {
        let m = self.prob.m;
        let nz: Vec<(usize, f64)> = v
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(i, a)| (i, *a))
            .collect();
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            let s: f64 = nz.iter().map(|&(i, a)| row[i] * a).sum();
            self.x[self.basic[k]] -= s;
        }
    }

    fn cost_of(&self, j: usize) -> f64 {
        if self.phase_one {
            0.0
        } else {
            self.cost[j]
        }
    }

    fn compute_duals(&mut self) {
        let (n, m) = (self.prob.n, self.prob.m);
        let mut y = vec![0.0; m];
        for k in 0..m {
            let c = self.cost_of(self.basic[k]);
            if c != 0.0 {
                let row = &self.binv[k * m..(k + 1) * m];
                for (yi, b) in y.iter_mut().zip(row) {
                    *yi += c * b;
                }
            }
        }
        for j in 0..n + m {
            if self.status[j] == VarStatus::Basic {
                self.d[j] = 0.0;
            } else if j < n {
                let ya: f64 = self.prob.col(j).map(|(i, a)| y[i] * a).sum();
                self.d[j] = self.cost_of(j) - ya;
            } else {
                self.d[j] = self.cost_of(j) + y[j - n];
            }
        }
    }

    /// `alpha_col = B^{-1} a_q`.
    fn compute_column(&mut self, q: usize) {
        let (n, m) = (self.prob.n, self.prob.m);
        self.alpha_col.iter_mut().for_each(|v| *v = 0.0);
        if q < n {
            let entries: Vec<(usize, f64)> = self.prob.col(q).collect();
            for k in 0..m {
                let row = &self.binv[k * m..(k + 1) * m];
                self.alpha_col[k] = entries.iter().map(|&(i, a)| row[i] * a).sum();
            }
        } else {
            let i = q - n;
            for k in 0..m {
                self.alpha_col[k] = -self.binv[k * m + i];
            }
        }
    }

    /// `alpha_row[j] = (B^{-1} a_j)_r` for every nonbasic `j`.
    fn compute_row(&mut self, r: usize) {
        let (n, m) = (self.prob.n, self.prob.m);
        let row = &self.binv[r * m..(r + 1) * m];
        for j in 0..n + m {
            self.alpha_row[j] = if self.status[j] == VarStatus::Basic {
                0.0
            } else if j < n {
                self.prob.col(j).map(|(i, a)| row[i] * a).sum()
            } else {
                -row[j - n]
            };
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        (self.lo[j] - self.x[j]).max(self.x[j] - self.hi[j])
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lo[j] == self.hi[j]
    }

    fn dual_infeasible(&self, j: usize) -> bool {
        let tol = self.opts.optimality_tol;
        match self.status[j] {
            VarStatus::Basic => false,
            _ if self.is_fixed(j) => false,
            VarStatus::AtLower => self.d[j] < -tol,
            VarStatus::AtUpper => self.d[j] > tol,
        }
    }

    fn primal_infeasible(&self) -> bool {
        self.basic
            .iter()
            .any(|&j| self.infeasibility(j) > self.opts.feasibility_tol)
    }

    fn any_dual_infeasible(&self) -> bool {
        (0..self.n_total()).any(|j| self.dual_infeasible(j))
    }

    /// Pivots `q` into basic position `r`; `leave_to` is the new status of
    /// the leaving variable. Updates `B^{-1}` and reduced costs; primal
    /// values must already be updated by the caller.
    fn pivot(&mut self, r: usize, q: usize, leave_to: VarStatus) {
        let m = self.prob.m;
        let p = self.basic[r];
        // reduced costs: requires alpha_row for row r
        let theta_d = self.d[q] / self.alpha_row[q];
        for j in 0..self.n_total() {
            if self.status[j] != VarStatus::Basic && self.alpha_row[j] != 0.0 {
                self.d[j] -= theta_d * self.alpha_row[j];
            }
        }
        self.d[q] = 0.0;
        self.d[p] = -theta_d;

        let piv = self.alpha_col[r];
        let rp = 1.0 / piv;
        let pivot_row: Vec<f64> = self.binv[r * m..(r + 1) * m].iter().map(|v| v * rp).collect();
        for k in 0..m {
            if k == r {
                continue;
            }
            let f = self.alpha_col[k];
            if f != 0.0 {
                self.row_norm2[k] = axpy_norm(&mut self.binv[k * m..(k + 1) * m], f, &pivot_row);
            }
        }
        self.row_norm2[r] = sum_sq(&pivot_row);
        self.binv[r * m..(r + 1) * m].copy_from_slice(&pivot_row);

        self.basic[r] = q;
        self.pos[q] = r;
        self.pos[p] = usize::MAX;
        self.status[q] = VarStatus::Basic;
        self.status[p] = leave_to;
        self.x[p] = match leave_to {
            VarStatus::AtLower => self.lo[p],
            VarStatus::AtUpper => self.hi[p],
            VarStatus::Basic => unreachable!(),
        };
        self.since_refactor += 1;
    }

    fn note_degenerate(&mut self, degenerate: bool) {
        if degenerate {
            self.degenerate_run += 1;
            if self.degenerate_run >= self.opts.bland_after {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
        }
    }

    fn dual_iteration(&mut self) -> Step {
        let tol = self.opts.feasibility_tol;
        // Leaving row by dual steepest edge (Bland: lowest variable index).
        let mut r = usize::MAX;
        let mut score = 0.0;
        for (k, &j) in self.basic.iter().enumerate() {
            let v = self.infeasibility(j);
            if v <= tol {
                continue;
            }
            if self.bland {
                if r == usize::MAX || j < self.basic[r] {
                    r = k;
                }
            } else {
                let s = v * v / self.row_norm2[k].max(1e-12);
                if s > score {
                    score = s;
                    r = k;
                }
            }
        }
        if r == usize::MAX {
            return Step::Continue;
        }
        let p = self.basic[r];
        let below = self.x[p] < self.lo[p];
        let target = if below { self.lo[p] } else { self.hi[p] };
        self.compute_row(r);

        // `dir` is the sign alpha_rj must have for an at-lower variable to
        // move x_p toward its violated bound.
        let dir = if below { -1.0 } else { 1.0 };
        let ptol = self.opts.pivot_tol;
        let otol = self.opts.optimality_tol;
        let nt = self.n_total();
        let mut cands: Vec<(f64, usize)> = Vec::new();
        for j in 0..nt {
            let a = self.alpha_row[j];
            if self.status[j] == VarStatus::Basic || self.is_fixed(j) || a.abs() <= ptol {
                continue;
            }
            let ok = match self.status[j] {
                VarStatus::AtLower => a * dir > 0.0,
                VarStatus::AtUpper => a * dir < 0.0,
                VarStatus::Basic => false,
            };
            if ok {
                cands.push((self.d[j].abs() / a.abs(), j));
            }
        }
        if cands.is_empty() {
            return Step::Done(LpStatus::Infeasible);
        }

        // Bound-flipping ratio test: walk the breakpoints while the
        // remaining primal infeasibility stays positive.
        let mut flips: Vec<usize> = Vec::new();
        if !self.bland && !self.phase_one {
            let mut slope = (self.x[p] - target).abs();
            while cands.len() > 1 {
                let (at, &(_, j)) = cands
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.1 .1.cmp(&b.1 .1)))
                    .expect("nonempty");
                let range = self.hi[j] - self.lo[j];
                if !range.is_finite() {
                    break;
                }
                let next = slope - self.alpha_row[j].abs() * range;
                if next <= tol {
                    break;
                }
                slope = next;
                flips.push(j);
                cands.swap_remove(at);
            }
        }
        let rest = &cands[..];
        // Harris pass over the remaining breakpoints.
        let bound = rest
            .iter()
            .map(|&(_, j)| (self.d[j].abs() + otol) / self.alpha_row[j].abs())
            .fold(f64::INFINITY, f64::min);
        let mut q = usize::MAX;
        let mut best = 0.0;
        for &(t, j) in rest {
            if t <= bound {
                if self.bland {
                    if q == usize::MAX || j < q {
                        q = j;
                    }
                } else if self.alpha_row[j].abs() > best {
                    best = self.alpha_row[j].abs();
                    q = j;
                }
            }
        }
        let theta = self.d[q].abs() / self.alpha_row[q].abs();
        self.note_degenerate(theta < 1e-12 && flips.is_empty());

        if !flips.is_empty() {
            let n = self.prob.n;
            let mut v = vec![0.0; self.prob.m];
            for &j in &flips {
                let (status, value) = match self.status[j] {
                    VarStatus::AtLower => (VarStatus::AtUpper, self.hi[j]),
                    _ => (VarStatus::AtLower, self.lo[j]),
                };
                let delta = value - self.x[j];
                self.status[j] = status;
                self.x[j] = value;
                if j < n {
                    for (i, a) in self.prob.col(j) {
                        v[i] += a * delta;
                    }
                } else {
                    v[j - n] -= delta;
                }
            }
            self.shift_basics(&v);
        }

        self.compute_column(q);
        let a_rq = self.alpha_col[r];
        if a_rq.abs() <= ptol {
            // Row and column disagree: numerical trouble.
            self.refactor_or_reset();
            return Step::Continue;
        }
        let step = (self.x[p] - target) / a_rq;
        for k in 0..self.prob.m {
            let j = self.basic[k];
            self.x[j] -= step * self.alpha_col[k];
        }
        self.x[q] += step;
        let leave_to = if below { VarStatus::AtLower } else { VarStatus::AtUpper };
        self.pivot(r, q, leave_to);
        Step::Continue
    }

    fn primal_iteration(&mut self) -> Step {
        let nt = self.n_total();
        let mut q = usize::MAX;
        let mut best = 0.0;
        for j in 0..nt {
            if self.dual_infeasible(j) {
                if self.bland {
                    q = j;
                    break;
                }
                if self.d[j].abs() > best {
                    best = self.d[j].abs();
                    q = j;
                }
            }
        }
        if q == usize::MAX {
            return Step::Continue;
        }
        let sigma = if self.status[q] == VarStatus::AtLower { 1.0 } else { -1.0 };
        self.compute_column(q);
        let ftol = self.opts.feasibility_tol;
        let ptol = self.opts.pivot_tol;
        let m = self.prob.m;

        // basic k changes at rate -sigma * alpha_col[k]
        let limit = |s: &Self, k: usize, slack: f64| -> Option<(f64, f64)> {
            let a = s.alpha_col[k];
            if a.abs() <= ptol {
                return None;
            }
            let j = s.basic[k];
            let rate = -sigma * a;
            if rate < 0.0 && s.lo[j].is_finite() {
                Some((((s.x[j] - s.lo[j]) + slack).max(0.0) / -rate, a.abs()))
            } else if rate > 0.0 && s.hi[j].is_finite() {
                Some((((s.hi[j] - s.x[j]) + slack).max(0.0) / rate, a.abs()))
            } else {
                None
            }
        };
        let mut bound = f64::INFINITY;
        for k in 0..m {
            if let Some((t, _)) = limit(self, k, ftol) {
                bound = bound.min(t);
            }
        }
        let flip = self.hi[q] - self.lo[q];
        if bound == f64::INFINITY && flip == f64::INFINITY {
            return Step::Done(LpStatus::Unbounded);
        }
        let mut r = usize::MAX;
        let mut best_a = 0.0;
        let mut t_r = 0.0;
        for k in 0..m {
            if let Some((t, a)) = limit(self, k, 0.0) {
                if t <= bound {
                    let better = if self.bland {
                        r == usize::MAX || self.basic[k] < self.basic[r]
                    } else {
                        a > best_a
                    };
                    if better {
                        best_a = a;
                        r = k;
                        t_r = t;
                    }
                }
            }
        }
        if flip <= t_r || r == usize::MAX {
            // bound flip of the entering variable, no basis change
            let t = flip;
            for k in 0..m {
                let j = self.basic[k];
                self.x[j] -= sigma * t * self.alpha_col[k];
            }
            self.status[q] = if sigma > 0.0 { VarStatus::AtUpper } else { VarStatus::AtLower };
            self.x[q] = if sigma > 0.0 { self.hi[q] } else { self.lo[q] };
            self.note_degenerate(false);
            return Step::Continue;
        }
        self.note_degenerate(t_r < 1e-12);
        for k in 0..m {
            let j = self.basic[k];
            self.x[j] -= sigma * t_r * self.alpha_col[k];
        }
        self.x[q] += sigma * t_r;
        let p = self.basic[r];
        let rate = -sigma * self.alpha_col[r];
        let leave_to = if rate < 0.0 { VarStatus::AtLower } else { VarStatus::AtUpper };
        self.compute_row(r);
        if self.alpha_row[q].abs() <= ptol {
            self.refactor_or_reset();
            return Step::Continue;
        }
        let _ = p;
        self.pivot(r, q, leave_to);
        Step::Continue
    }

    /// Shifts structural costs by small deterministic amounts in the
    /// direction that keeps the current nonbasics dual feasible. Most
    /// columns have zero cost, and the resulting dual degeneracy otherwise
    /// stalls the dual simplex.
    fn perturb_costs(&mut self) {
        let n = self.prob.n;
        for j in 0..n {
            let c = self.prob.cost[j];
            let h = ((j as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11) as f64
                / (1u64 << 53) as f64;
            let eps = 1e-6 * (1.0 + c.abs()) * (0.5 + h);
            self.cost[j] = match self.status[j] {
                VarStatus::AtUpper => c - eps,
                _ if self.is_fixed(j) => c,
                _ => c + eps,
            };
        }
        self.perturbed = true;
        self.compute_duals();
    }

    fn remove_perturbation(&mut self) {
        let n = self.prob.n;
        self.cost[..n].copy_from_slice(&self.prob.cost);
        self.perturbed = false;
        self.compute_duals();
    }

    /// Moves boxed dual-infeasible nonbasics to their other bound. Returns
    /// false when an unboxed one remains.
    fn flip_to_dual_feasible(&mut self) -> bool {
        let mut ok = true;
        let mut changed = false;
        for j in 0..self.n_total() {
            if !self.dual_infeasible(j) {
                continue;
            }
            if self.lo[j].is_finite() && self.hi[j].is_finite() {
                self.status[j] = match self.status[j] {
                    VarStatus::AtLower => VarStatus::AtUpper,
                    _ => VarStatus::AtLower,
                };
                changed = true;
            } else {
                ok = false;
            }
        }
        if changed {
            self.snap_nonbasic();
            self.compute_primal();
        }
        ok
    }

    /// Runs the simplex from the current basis and bounds.
    pub fn solve(&mut self) -> LpResult {
        let cap = self
            .opts
            .max_iterations
            .unwrap_or(50 * (self.prob.n + self.prob.m));
        let mut iterations = 0;
        let mut verified = false;
        self.bland = false;
        self.degenerate_run = 0;
        self.phase_one = false;
        if (0..self.prob.n).any(|j| self.lo[j] > self.hi[j]) {
            return self.result(LpStatus::Infeasible, iterations);
        }
        self.perturb_costs();
        let status = loop {
            if iterations >= cap {
                break LpStatus::IterationLimit;
            }
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor_or_reset();
            }
            let p_inf = self.primal_infeasible();
            let d_inf = !self.phase_one && self.any_dual_infeasible();
            let step = match (p_inf, d_inf) {
                (false, false) => {
                    if self.phase_one {
                        self.phase_one = false;
                        self.compute_duals();
                        continue;
                    }
                    if self.perturbed {
                        self.remove_perturbation();
                        continue;
                    }
                    if self.since_refactor > 0 && !verified {
                        // Recompute values from the current inverse before
                        // accepting; drift shows up as new infeasibility.
                        verified = true;
                        if self.row_residual() > 1e-9 {
                            self.refactor_or_reset();
                        } else {
                            self.compute_primal();
                            self.compute_duals();
                        }
                        continue;
                    }
                    break LpStatus::Optimal;
                }
                (true, false) => self.dual_iteration(),
                (false, true) => self.primal_iteration(),
                (true, true) => {
                    if !self.flip_to_dual_feasible() {
                        self.phase_one = true;
                        self.compute_duals();
                    }
                    Step::Continue
                }
            };
            iterations += 1;
            verified = false;
            if let Step::Done(s) = step {
                // confirm on a fresh factorization before giving up
                if self.since_refactor > 0 {
                    self.refactor_or_reset();
                    continue;
                }
                break s;
            }
        };
        self.phase_one = false;
        if self.perturbed {
            self.remove_perturbation();
        }
        self.result(status, iterations)
    }

    fn result(&self, status: LpStatus, iterations: usize) -> LpResult {
        let n = self.prob.n;
        let x: Vec<f64> = self.x[..n].to_vec();
        let objective = -self.prob.cost.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
        LpResult {
            status,
            x,
            objective,
            basis: self.basis(),
            iterations,
            lower: self.lo[..n].to_vec(),
            upper: self.hi[..n].to_vec(),
        }
    }
}

/// `row -= f * p`, returning the squared norm of the updated row.
fn axpy_norm(row: &mut [f64], f: f64, p: &[f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected at runtime.
            return unsafe { axpy_norm_avx2(row, f, p) };
        }
    }
    axpy_norm_portable(row, f, p)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn axpy_norm_avx2(row: &mut [f64], f: f64, p: &[f64]) -> f64 {
    axpy_norm_portable(row, f, p)
}

#[inline(always)]
fn axpy_norm_portable(row: &mut [f64], f: f64, p: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let mut rows = row.chunks_exact_mut(8);
    let mut ps = p.chunks_exact(8);
    for (r, q) in (&mut rows).zip(&mut ps) {
        for ((a, b), s) in r.iter_mut().zip(q).zip(acc.iter_mut()) {
            *a -= f * b;
            *s += *a * *a;
        }
    }
    let mut tail = 0.0;
    for (a, b) in rows.into_remainder().iter_mut().zip(ps.remainder()) {
        *a -= f * b;
        tail += *a * *a;
    }
    acc.iter().sum::<f64>() + tail
}

fn sum_sq(v: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = v.chunks_exact(4);
    let tail: f64 = chunks.remainder().iter().map(|a| a * a).sum();
    for c in chunks {
        for (s, a) in acc.iter_mut().zip(c) {
            *s += a * a;
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Solves the LP relaxation of `model` with per-variable bound overrides
/// `(column, lower, upper)`, optionally starting from `warm`.
pub fn solve_lp(
    model: &MilpModel,
    overrides: &[(usize, f64, f64)],
    warm: Option<&Basis>,
    opts: &LpOptions,
) -> Result<LpResult> {
    let prob = LpProblem::new(model);
    let (mut lower, mut upper) = prob.default_bounds();
    for &(j, lo, hi) in overrides {
        if j >= prob.n {
            return Err(Error::InvalidInput(format!("bound override for unknown column {j}")));
        }
        lower[j] = lo;
        upper[j] = hi;
    }
    if let Some(j) = (0..prob.n).find(|&j| !lower[j].is_finite() && !upper[j].is_finite()) {
        return Err(Error::InvalidInput(format!(
            "variable {} is free; the LP engine needs at least one finite bound",
            model.vars[j].name
        )));
    }
    let mut engine = LpEngine::new(&prob, opts.clone());
    if let Some(b) = warm {
        engine.load_basis(b);
    }
    engine.set_bounds(&lower, &upper);
    Ok(engine.solve())
}

/// Re-solves after changing the bounds of `var`, warm-started from `prev`.
pub fn tighten_bound_and_resolve(
    model: &MilpModel,
    prev: &LpResult,
    var: usize,
    lower: f64,
    upper: f64,
    opts: &LpOptions,
) -> Result<LpResult> {
    let mut overrides: Vec<(usize, f64, f64)> = prev
        .lower
        .iter()
        .zip(&prev.upper)
        .enumerate()
        .map(|(j, (&l, &u))| (j, l, u))
        .collect();
    if var >= overrides.len() {
        return Err(Error::InvalidInput(format!("unknown column {var}")));
    }
    overrides[var] = (var, lower, upper);
    solve_lp(model, &overrides, Some(&prev.basis), opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_var(rel: Relation, rhs: f64) -> MilpModel {
        let mut m = MilpModel::new("t");
        m.add_var("x", 0.0, 1.0, false, 1.0);
        m.add_row("r", vec![(0, 1.0)], rel, rhs);
        m
    }

    #[test]
    fn single_variable_cap() {
        let r = solve_lp(&one_var(Relation::Le, 0.5), &[], None, &LpOptions::default()).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_lower_row() {
        let r = solve_lp(&one_var(Relation::Ge, 2.0), &[], None, &LpOptions::default()).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
    }

    #[test]
    fn textbook_lp() {
        // max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18, x,y in [0, 10]
        let mut m = MilpModel::new("t");
        m.add_var("x", 0.0, 10.0, false, 3.0);
        m.add_var("y", 0.0, 10.0, false, 5.0);
        m.add_row("a", vec![(0, 1.0)], Relation::Le, 4.0);
        m.add_row("b", vec![(1, 2.0)], Relation::Le, 12.0);
        m.add_row("c", vec![(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        let r = solve_lp(&m, &[], None, &LpOptions::default()).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective - 36.0).abs() < 1e-9);
        assert!((r.x[0] - 2.0).abs() < 1e-9 && (r.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows_need_phase_work() {
        // max -x - y  s.t. x + y = 1, x - y >= 0.2
        let mut m = MilpModel::new("t");
        m.add_var("x", 0.0, 5.0, false, -1.0);
        m.add_var("y", 0.0, 5.0, false, -2.0);
        m.add_row("e", vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        m.add_row("g", vec![(0, 1.0), (1, -1.0)], Relation::Ge, 0.2);
        let r = solve_lp(&m, &[], None, &LpOptions::default()).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.objective + 1.0).abs() < 1e-9);
        assert!(m.max_violation(&r.x) < 1e-9);
    }

    #[test]
    fn warm_start_matches_cold() {
        let mut m = MilpModel::new("t");
        for j in 0..4 {
            m.add_var(format!("x{j}"), 0.0, 1.0, false, [4.0, 3.0, 2.0, 1.5][j]);
        }
        m.add_row("cap", (0..4).map(|j| (j, [2.0, 2.0, 1.0, 1.0][j])).collect(), Relation::Le, 3.0);
        let opts = LpOptions::default();
        let root = solve_lp(&m, &[], None, &opts).unwrap();
        for j in 0..4 {
            for v in [0.0, 1.0] {
                let warm = tighten_bound_and_resolve(&m, &root, j, v, v, &opts).unwrap();
                let cold = solve_lp(&m, &[(j, v, v)], None, &opts).unwrap();
                assert_eq!(warm.status, cold.status);
                if warm.status == LpStatus::Optimal {
                    assert!((warm.objective - cold.objective).abs() < 1e-7);
                    assert!(warm.objective <= root.objective + 1e-9);
                }
            }
        }
    }

    #[test]
    fn free_variable_rejected() {
        let mut m = MilpModel::new("t");
        m.add_var("x", f64::NEG_INFINITY, f64::INFINITY, false, 1.0);
        assert!(solve_lp(&m, &[], None, &LpOptions::default()).is_err());
    }
}
