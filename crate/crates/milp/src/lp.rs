//! Bounded-variable dual simplex on a factorised basis.
//!
//! Rows are brought to the form `A x + s = b` with one slack per row:
//! `<=` rows get `s >= 0`, `>=` rows `s <= 0`, equalities a fixed slack.
//! The slack basis is dual feasible once every nonbasic sits on the bound
//! matching the sign of its reduced cost. A column whose preferred bound is
//! infinite is boxed at a bound implied by a single row when there is one,
//! otherwise at `±BIG`; ending on such an artificial bound means unbounded.
//!
//! The basis is held as a sparse LU factorisation with eta updates, rows
//! are priced by dual steepest edge, and every solve runs on slightly
//! perturbed costs before finishing on the true ones. Bound changes keep
//! the basis dual feasible, which is what branch-and-bound relies on.

use std::time::Instant;

use crate::error::MilpError;
use crate::lu::Lu;
use crate::problem::{MilpProblem, Sense};

pub(crate) const BIG: f64 = 1e7;
const NONE: usize = usize::MAX;
const DROP: f64 = 1e-12;
/// Violations below this (relative) size are accepted when no pivot can
/// repair them; they come from cancellation against large coefficients.
const LOOSE_PRIMAL: f64 = 1e-6;
const REFACTOR_EVERY: usize = 100;
/// Degenerate pivots in a row before costs are perturbed.
const STALL: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective of the maximisation problem (meaningful for `Optimal`).
    pub objective: f64,
    pub values: Vec<f64>,
    pub iterations: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct LpTolerances {
    pub primal: f64,
    pub dual: f64,
    pub pivot: f64,
}

impl Default for LpTolerances {
    fn default() -> Self {
        Self {
            primal: 1e-9,
            dual: 1e-9,
            pivot: 1e-7,
        }
    }
}

enum Phase {
    Done(LpStatus),
    Interrupted,
    Stalled,
}

/// Outcome of a (re-)optimisation that may be interrupted by a deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Reopt {
    Done(LpStatus),
    Interrupted,
}

pub(crate) struct DualSimplex {
    m: usize,
    n: usize,
    nc: usize,
    cols: Vec<Vec<(usize, f64)>>,
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    cost: Vec<f64>,
    /// Costs the reduced costs `d` currently refer to.
    work: Vec<f64>,
    d: Vec<f64>,
    basis: Vec<usize>,
    pos_of: Vec<usize>,
    lu: Lu,
    dse: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    base_lo: Vec<f64>,
    base_hi: Vec<f64>,
    box_lo: Vec<f64>,
    box_hi: Vec<f64>,
    x: Vec<f64>,
    objective_constant: f64,
    pub(crate) iterations: u64,
    /// Cap on the pivots of a single re-optimisation.
    max_iterations: u64,
    iteration_cap: u64,
    tol: LpTolerances,
    /// Relative violation of the row that proved infeasibility.
    proof_violation: f64,
    alpha: Vec<f64>,
    touched: Vec<usize>,
    rho: Vec<f64>,
    col_pos: Vec<f64>,
    tau: Vec<f64>,
    scratch: Vec<f64>,
}

impl DualSimplex {
    /// Sets up the slack basis for the continuous relaxation of `problem`.
    pub(crate) fn new(problem: &MilpProblem, tol: LpTolerances) -> Self {
        let m = problem.num_rows();
        let n = problem.num_vars();
        let nc = n + m;
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        let mut lo = Vec::with_capacity(nc);
        let mut hi = Vec::with_capacity(nc);
        for v in &problem.variables {
            lo.push(v.lower);
            hi.push(v.upper);
        }
        for c in &problem.constraints {
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(c.coeffs.len());
            for &(v, a) in &c.coeffs {
                match row.iter_mut().find(|(j, _)| *j == v.0) {
                    Some(e) => e.1 += a,
                    None => row.push((v.0, a)),
                }
            }
            row.retain(|&(_, a)| a != 0.0);
            rows.push(row);
            b.push(c.rhs);
            let (l, h) = match c.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo.push(l);
            hi.push(h);
        }
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, row) in rows.iter().enumerate() {
            for &(j, a) in row {
                cols[j].push((i, a));
            }
        }
        let mut cost = vec![0.0; nc];
        for (j, c) in problem.objective_dense().into_iter().enumerate() {
            cost[j] = -c;
        }
        let (box_lo, box_hi) = implied_boxes(&rows, &b, &lo, &hi, n);
        let slack_cols: Vec<Vec<(usize, f64)>> = (0..m).map(|i| vec![(i, 1.0)]).collect();
        let lu = Lu::factor(m, &slack_cols).expect("identity basis");
        let mut pos_of = vec![NONE; nc];
        for i in 0..m {
            pos_of[n + i] = i;
        }
        let mut s = Self {
            m,
            n,
            nc,
            cols,
            rows,
            b,
            work: cost.clone(),
            d: cost.clone(),
            cost,
            basis: (n..nc).collect(),
            pos_of,
            lu,
            dse: vec![1.0; m],
            base_lo: lo.clone(),
            base_hi: hi.clone(),
            box_lo,
            box_hi,
            lo,
            hi,
            x: vec![0.0; nc],
            objective_constant: problem.objective_constant,
            iterations: 0,
            max_iterations: 50 * (nc as u64) + 20_000,
            iteration_cap: 0,
            tol,
            proof_violation: 0.0,
            alpha: vec![0.0; nc],
            touched: Vec::new(),
            rho: vec![0.0; m],
            col_pos: vec![0.0; m],
            tau: vec![0.0; m],
            scratch: vec![0.0; m],
        };
        for j in 0..n {
            s.place(j);
        }
        s.recompute_beta();
        s
    }

    fn scatter_col(&self, j: usize, f: f64, out: &mut [f64]) {
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                out[i] += f * a;
            }
        } else {
            out[j - self.n] += f;
        }
    }

    fn dot_col(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.cols[j].iter().map(|&(i, a)| a * y[i]).sum()
        } else {
            y[j - self.n]
        }
    }

    /// Puts nonbasic column `j` on the bound its reduced cost asks for.
    fn place(&mut self, j: usize) {
        let (l, h) = (self.base_lo[j], self.base_hi[j]);
        self.lo[j] = l;
        self.hi[j] = h;
        let dj = self.d[j];
        let v = if l == h {
            l
        } else if dj > self.tol.dual {
            if l.is_finite() {
                l
            } else {
                self.lo[j] = self.box_lo[j];
                self.box_lo[j]
            }
        } else if dj < -self.tol.dual {
            if h.is_finite() {
                h
            } else {
                self.hi[j] = self.box_hi[j];
                self.box_hi[j]
            }
        } else {
            let cur = self.x[j];
            match (l.is_finite(), h.is_finite()) {
                (true, true) => {
                    if (cur - h).abs() < (cur - l).abs() {
                        h
                    } else {
                        l
                    }
                }
                (true, false) => l,
                (false, true) => h,
                (false, false) => 0.0,
            }
        };
        self.x[j] = v;
    }

    fn recompute_beta(&mut self) {
        let mut rhs = self.b.clone();
        for j in 0..self.nc {
            if self.pos_of[j] == NONE && self.x[j] != 0.0 {
                self.scatter_col(j, -self.x[j], &mut rhs);
            }
        }
        let mut z = std::mem::take(&mut self.scratch);
        self.lu.ftran(&mut rhs, &mut z);
        for (p, &zp) in z.iter().enumerate() {
            self.x[self.basis[p]] = zp;
        }
        self.scratch = z;
    }

    fn recompute_duals(&mut self) {
        let mut cb: Vec<f64> = self.basis.iter().map(|&j| self.work[j]).collect();
        let mut y = vec![0.0; self.m];
        self.lu.btran(&mut cb, &mut y);
        for j in 0..self.nc {
            self.d[j] = if self.pos_of[j] == NONE {
                self.work[j] - self.dot_col(j, &y)
            } else {
                0.0
            };
        }
    }

    /// Refactorises the basis, swapping in slacks for dependent columns,
    /// and recomputes primal and dual values from scratch.
    fn refactor(&mut self) -> Result<(), MilpError> {
        loop {
            let cols: Vec<Vec<(usize, f64)>> = self
                .basis
                .iter()
                .map(|&j| if j < self.n { self.cols[j].clone() } else { vec![(j - self.n, 1.0)] })
                .collect();
            match Lu::factor(self.m, &cols) {
                Ok(lu) => {
                    self.lu = lu;
                    break;
                }
                Err(sing) => {
                    log::debug!("basis singular, replacing {} columns by slacks", sing.positions.len());
                    for (&p, &i) in sing.positions.iter().zip(&sing.rows) {
                        let old = self.basis[p];
                        let new = self.n + i;
                        if self.pos_of[new] != NONE {
                            return Err(MilpError::Numerical("cannot repair singular basis".into()));
                        }
                        self.basis[p] = new;
                        self.pos_of[new] = p;
                        self.pos_of[old] = NONE;
                        self.dse[p] = 1.0;
                        self.d[old] = 0.0;
                        self.place(old);
                    }
                }
            }
        }
        self.recompute_duals();
        for j in 0..self.nc {
            if self.pos_of[j] == NONE {
                self.place(j);
            }
        }
        self.recompute_beta();
        Ok(())
    }

    pub(crate) fn basis(&self) -> &[usize] {
        &self.basis
    }

    /// Installs a basis saved from an earlier solve of the same problem.
    pub(crate) fn load_basis(&mut self, basis: &[usize]) -> Result<(), MilpError> {
        if basis == self.basis.as_slice() {
            return Ok(());
        }
        for &j in &self.basis {
            self.pos_of[j] = NONE;
        }
        self.basis.copy_from_slice(basis);
        for (p, &j) in basis.iter().enumerate() {
            self.pos_of[j] = p;
            self.lo[j] = self.base_lo[j];
            self.hi[j] = self.base_hi[j];
        }
        self.dse.iter_mut().for_each(|w| *w = 1.0);
        self.refactor()
    }

    pub(crate) fn bounds(&self, j: usize) -> (f64, f64) {
        (self.base_lo[j], self.base_hi[j])
    }

    /// Changes the bounds of structural column `j`. Call [`Self::reoptimize`]
    /// afterwards.
    pub(crate) fn set_bounds(&mut self, j: usize, l: f64, h: f64) {
        if self.base_lo[j] == l && self.base_hi[j] == h {
            return;
        }
        self.base_lo[j] = l;
        self.base_hi[j] = h;
        if self.pos_of[j] == NONE {
            self.place(j);
        } else {
            self.lo[j] = l;
            self.hi[j] = h;
        }
    }

    fn feas_tol(&self, bound: f64) -> f64 {
        self.tol.primal * (1.0 + bound.abs())
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lo[j] - self.feas_tol(self.lo[j]) {
            self.lo[j] - v
        } else if v > self.hi[j] + self.feas_tol(self.hi[j]) {
            v - self.hi[j]
        } else {
            0.0
        }
    }

    /// Re-optimises from the current basis after bound changes.
    pub(crate) fn reoptimize(&mut self, deadline: Option<Instant>) -> Result<Reopt, MilpError> {
        self.iteration_cap = self.iterations + self.max_iterations;
        self.load_costs(false);
        match self.run_dual(deadline, true)? {
            Phase::Done(LpStatus::Optimal) => return Ok(Reopt::Done(self.classify_optimal())),
            Phase::Done(s) => return Ok(Reopt::Done(s)),
            Phase::Interrupted => return Ok(Reopt::Interrupted),
            Phase::Stalled => {}
        }
        // dual degenerate: finish on perturbed costs, then clean up
        self.load_costs(true);
        match self.run_dual(deadline, false)? {
            Phase::Done(LpStatus::Optimal) => {}
            Phase::Done(s) => return Ok(Reopt::Done(s)),
            _ => return Ok(Reopt::Interrupted),
        }
        self.load_costs(false);
        match self.run_dual(deadline, false)? {
            Phase::Done(LpStatus::Optimal) => Ok(Reopt::Done(self.classify_optimal())),
            Phase::Done(s) => Ok(Reopt::Done(s)),
            _ => Ok(Reopt::Interrupted),
        }
    }

    /// Switches to the true costs, or to costs nudged so that every nonbasic
    /// is pushed harder towards the bound it sits on. Then restores dual
    /// feasibility and recomputes the basic values.
    fn load_costs(&mut self, perturbed: bool) {
        self.work.clone_from(&self.cost);
        if perturbed {
            let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
            for j in 0..self.nc {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if self.pos_of[j] != NONE || self.lo[j] == self.hi[j] {
                    continue;
                }
                let xi = 0.5 + 0.5 * ((state >> 11) as f64 / (1u64 << 53) as f64);
                let size = 1e-7 * xi * (1.0 + self.cost[j].abs());
                if self.x[j] == self.lo[j] {
                    self.work[j] += size;
                } else if self.x[j] == self.hi[j] {
                    self.work[j] -= size;
                }
            }
        }
        self.recompute_duals();
        for j in 0..self.nc {
            if self.pos_of[j] == NONE {
                self.place(j);
            }
        }
        self.recompute_beta();
    }

    fn classify_optimal(&self) -> LpStatus {
        for j in 0..self.nc {
            if self.pos_of[j] == NONE {
                let at_art = (self.base_lo[j] == f64::NEG_INFINITY && self.x[j] == -BIG)
                    || (self.base_hi[j] == f64::INFINITY && self.x[j] == BIG);
                if at_art && self.d[j].abs() > self.tol.dual {
                    return LpStatus::Unbounded;
                }
            } else if self.x[j].abs() > 0.5 * BIG {
                return LpStatus::Unbounded;
            }
        }
        LpStatus::Optimal
    }

    fn clear_alpha(&mut self) {
        for &j in &self.touched {
            self.alpha[j] = 0.0;
        }
        self.touched.clear();
    }

    /// Computes row `r` of `B^-1 [A I]` on the nonbasic columns into `alpha`.
    fn price_row(&mut self, r: usize) {
        let mut e = std::mem::take(&mut self.scratch);
        e.iter_mut().for_each(|v| *v = 0.0);
        e[r] = 1.0;
        let mut rho = std::mem::take(&mut self.rho);
        self.lu.btran(&mut e, &mut rho);
        self.scratch = e;
        self.clear_alpha();
        for (i, &ri) in rho.iter().enumerate() {
            if ri.abs() < DROP {
                continue;
            }
            let s = self.n + i;
            if self.pos_of[s] == NONE {
                if self.alpha[s] == 0.0 {
                    self.touched.push(s);
                }
                self.alpha[s] += ri;
            }
            for &(j, a) in &self.rows[i] {
                if self.pos_of[j] == NONE {
                    if self.alpha[j] == 0.0 {
                        self.touched.push(j);
                    }
                    self.alpha[j] += ri * a;
                }
            }
        }
        self.rho = rho;
    }

    fn run_dual(&mut self, deadline: Option<Instant>, may_stall: bool) -> Result<Phase, MilpError> {
        let m = self.m;
        let mut degenerate_streak = 0u64;
        let mut last_obj = f64::INFINITY;
        // rows whose tiny violation admits no pivot; cleared after each pivot
        let mut tolerated: Vec<usize> = Vec::new();
        loop {
            if self.iterations >= self.iteration_cap {
                return Err(MilpError::IterationLimit(self.iterations));
            }
            if self.iterations % 32 == 0 {
                if let Some(dl) = deadline {
                    if Instant::now() >= dl {
                        return Ok(Phase::Interrupted);
                    }
                }
            }
            if self.lu.num_updates() >= REFACTOR_EVERY {
                self.refactor()?;
            }
            if may_stall && degenerate_streak > STALL {
                return Ok(Phase::Stalled);
            }
            let bland = degenerate_streak > 200;

            // leaving row
            let mut r = NONE;
            let mut best = 0.0;
            for i in 0..m {
                let viol = self.infeasibility(self.basis[i]);
                if viol <= 0.0 || tolerated.contains(&i) {
                    continue;
                }
                if bland {
                    if r == NONE || self.basis[i] < self.basis[r] {
                        r = i;
                    }
                } else {
                    let score = viol * viol / self.dse[i];
                    if score > best {
                        best = score;
                        r = i;
                    }
                }
            }
            if r == NONE {
                if self.residual() > 1e-9 {
                    if self.lu.num_updates() > 0 {
                        self.refactor()?;
                        tolerated.clear();
                        continue;
                    }
                    if self.residual() > 1e-7 {
                        return Err(MilpError::Numerical(format!(
                            "primal residual {:.3e} after refactorisation",
                            self.residual()
                        )));
                    }
                }
                return Ok(Phase::Done(LpStatus::Optimal));
            }
            let leaving = self.basis[r];
            let below = self.x[leaving] < self.lo[leaving];
            let target = if below { self.lo[leaving] } else { self.hi[leaving] };

            self.price_row(r);

            // ratio test (two-pass, Harris style)
            let mut theta_max = f64::INFINITY;
            for &j in &self.touched {
                let a = self.alpha[j];
                if self.lo[j] == self.hi[j] || a.abs() <= self.tol.pivot || !self.eligible(j, a, below) {
                    continue;
                }
                let ratio = (self.d[j].abs() + self.tol.dual) / a.abs();
                if ratio < theta_max {
                    theta_max = ratio;
                }
            }
            if theta_max == f64::INFINITY {
                if (self.x[leaving] - target).abs() <= LOOSE_PRIMAL * (1.0 + target.abs()) {
                    tolerated.push(r);
                    continue;
                }
                if self.lu.num_updates() > 0 {
                    self.refactor()?;
                    tolerated.clear();
                    continue;
                }
                self.proof_violation = (self.x[leaving] - target).abs() / (1.0 + target.abs());
                return Ok(Phase::Done(LpStatus::Infeasible));
            }
            let mut q = NONE;
            let mut best_a = 0.0;
            let mut best_ratio = f64::INFINITY;
            for &j in &self.touched {
                let a = self.alpha[j];
                if self.lo[j] == self.hi[j] || a.abs() <= self.tol.pivot || !self.eligible(j, a, below) {
                    continue;
                }
                let ratio = self.d[j].abs() / a.abs();
                if ratio > theta_max {
                    continue;
                }
                if bland {
                    if ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && (q == NONE || j < q)) {
                        best_ratio = best_ratio.min(ratio);
                        q = j;
                    }
                } else if a.abs() > best_a {
                    best_a = a.abs();
                    q = j;
                }
            }
            debug_assert!(q != NONE);

            // entering column
            let mut col = std::mem::take(&mut self.scratch);
            col.iter_mut().for_each(|v| *v = 0.0);
            self.scatter_col(q, 1.0, &mut col);
            let mut acol = std::mem::take(&mut self.col_pos);
            self.lu.ftran(&mut col, &mut acol);
            self.scratch = col;
            let a_r = acol[r];
            let a_row = self.alpha[q];
            if (a_r - a_row).abs() > 1e-7 * (1.0 + a_r.abs()) && self.lu.num_updates() > 0 {
                log::debug!("pivot mismatch {a_r:e} vs {a_row:e}, refactorising");
                self.col_pos = acol;
                self.refactor()?;
                continue;
            }

            // primal step
            let delta = (self.x[leaving] - target) / a_r;
            for (i, &a) in acol.iter().enumerate() {
                if a != 0.0 {
                    self.x[self.basis[i]] -= a * delta;
                }
            }
            self.x[leaving] = target;
            self.x[q] += delta;

            // dual step
            let theta = self.d[q] / a_row;
            for &j in &self.touched {
                self.d[j] -= theta * self.alpha[j];
            }
            self.d[leaving] = -theta;
            self.d[q] = 0.0;

            // steepest-edge weights
            let w_r: f64 = self.rho.iter().map(|v| v * v).sum();
            let mut rho = self.rho.clone();
            let mut tau = std::mem::take(&mut self.tau);
            self.lu.ftran(&mut rho, &mut tau);
            for i in 0..m {
                if i == r || acol[i] == 0.0 {
                    continue;
                }
                let k = acol[i] / a_r;
                self.dse[i] = (self.dse[i] - 2.0 * k * tau[i] + k * k * w_r).max(1e-6);
            }
            self.dse[r] = (w_r / (a_r * a_r)).max(1e-6);
            self.tau = tau;

            self.lu.update(r, &acol);
            self.col_pos = acol;
            self.basis[r] = q;
            self.pos_of[q] = r;
            self.pos_of[leaving] = NONE;
            self.iterations += 1;
            tolerated.clear();

            let obj = self.min_objective();
            if (last_obj - obj).abs() <= 1e-12 * (1.0 + obj.abs()) {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            last_obj = obj;
        }
    }

    #[inline]
    fn eligible(&self, j: usize, a: f64, below: bool) -> bool {
        let at_lo = self.x[j] == self.lo[j];
        let at_hi = self.x[j] == self.hi[j];
        if !at_lo && !at_hi {
            // free nonbasic
            return true;
        }
        if below {
            (at_lo && a < 0.0) || (at_hi && a > 0.0)
        } else {
            (at_lo && a > 0.0) || (at_hi && a < 0.0)
        }
    }

    fn min_objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    /// Objective of the original maximisation problem.
    pub(crate) fn objective(&self) -> f64 {
        self.objective_constant - self.min_objective()
    }

    pub(crate) fn values(&self) -> Vec<f64> {
        self.x[..self.n].to_vec()
    }

    fn residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            let lhs: f64 = row.iter().map(|&(j, a)| a * self.x[j]).sum::<f64>() + self.x[self.n + i];
            worst = worst.max((lhs - self.b[i]).abs() / (1.0 + self.b[i].abs()));
        }
        worst
    }
}

/// Per-column boxes used when a nonbasic wants to move to an infinite
/// bound. A row whose other columns are all bounded implies a finite bound;
/// the tightest one found is used, `±BIG` otherwise.
fn implied_boxes(rows: &[Vec<(usize, f64)>], b: &[f64], lo: &[f64], hi: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let nc = lo.len();
    let mut blo = vec![-BIG; nc];
    let mut bhi = vec![BIG; nc];
    for (i, row) in rows.iter().enumerate() {
        // row: sum a_j x_j + s = b, with s in [lo[n+i], hi[n+i]]
        let terms = row.iter().copied().chain(std::iter::once((n + i, 1.0)));
        let (mut min_act, mut max_act) = (0.0, 0.0);
        let (mut min_inf, mut max_inf) = (0usize, 0usize);
        let (mut min_col, mut max_col) = (NONE, NONE);
        for (j, a) in terms.clone() {
            let (l, h) = if a > 0.0 { (lo[j], hi[j]) } else { (hi[j], lo[j]) };
            if l.is_finite() {
                min_act += a * l;
            } else {
                min_inf += 1;
                min_col = j;
            }
            if h.is_finite() {
                max_act += a * h;
            } else {
                max_inf += 1;
                max_col = j;
            }
        }
        for (j, a) in terms {
            let (l, h) = if a > 0.0 { (lo[j], hi[j]) } else { (hi[j], lo[j]) };
            // a x_j = b - rest, rest in [min_act - a l, max_act - a h]
            let rest_min = match min_inf {
                0 => Some(min_act - a * l),
                1 if min_col == j => Some(min_act),
                _ => None,
            };
            let rest_max = match max_inf {
                0 => Some(max_act - a * h),
                1 if max_col == j => Some(max_act),
                _ => None,
            };
            let (up, down) = (rest_min.map(|r| (b[i] - r) / a), rest_max.map(|r| (b[i] - r) / a));
            let (ub, lb) = if a > 0.0 { (up, down) } else { (down, up) };
            if let Some(u) = ub {
                if u.is_finite() && u.abs() < BIG && u < bhi[j] {
                    bhi[j] = u;
                }
            }
            if let Some(l) = lb {
                if l.is_finite() && l.abs() < BIG && l > blo[j] {
                    blo[j] = l;
                }
            }
        }
    }
    (blo, bhi)
}

/// Solves the continuous relaxation of `problem` (integrality ignored).
pub fn solve_lp(problem: &MilpProblem) -> Result<LpSolution, MilpError> {
    solve_lp_with(problem, LpTolerances::default())
}

pub fn solve_lp_with(problem: &MilpProblem, tol: LpTolerances) -> Result<LpSolution, MilpError> {
    problem.validate()?;
    let mut lp = DualSimplex::new(problem, tol);
    let status = match lp.reoptimize(None)? {
        Reopt::Done(s) => s,
        Reopt::Interrupted => unreachable!("no deadline was set"),
    };
    Ok(LpSolution {
        status,
        objective: if status == LpStatus::Optimal { lp.objective() } else { f64::NAN },
        values: lp.values(),
        iterations: lp.iterations,
    })
}
