//! Exhaustive reference solver for small problems.
//!
//! Walks every integer assignment depth-first, pruning on rows that only
//! involve integer variables, and solves the remaining continuous LP from
//! scratch at each leaf. Shares nothing with the branch-and-bound search
//! beyond the LP routine, which makes it usable as a cross-check.

use crate::error::MilpError;
use crate::lp::{solve_lp_with, LpStatus, LpTolerances};
use crate::problem::MilpProblem;

pub const DEFAULT_MAX_INTEGERS: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Optimal { objective: f64, values: Vec<f64> },
    Infeasible,
    /// Some integer assignment leaves an unbounded continuous LP.
    Unbounded,
}

pub fn enumerate_oracle(problem: &MilpProblem, max_integers: usize) -> Result<OracleOutcome, MilpError> {
    problem.validate()?;
    let ints: Vec<usize> = (0..problem.num_vars()).filter(|&j| problem.variables[j].integer).collect();
    if ints.len() > max_integers {
        return Err(MilpError::TooManyIntegers {
            count: ints.len(),
            limit: max_integers,
        });
    }
    let mut domains = Vec::with_capacity(ints.len());
    for &j in &ints {
        let v = &problem.variables[j];
        if !v.lower.is_finite() || !v.upper.is_finite() {
            return Err(MilpError::UnboundedInteger(v.name.clone()));
        }
        domains.push((v.lower.ceil() as i64, v.upper.floor() as i64));
    }
    let pure_rows: Vec<usize> = problem
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| c.coeffs.iter().all(|(v, _)| problem.variables[v.0].integer))
        .map(|(i, _)| i)
        .collect();

    let mut work = problem.relaxed();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut unbounded = false;
    let mut lo: Vec<f64> = problem.variables.iter().map(|v| v.lower).collect();
    let mut hi: Vec<f64> = problem.variables.iter().map(|v| v.upper).collect();
    for (k, &j) in ints.iter().enumerate() {
        lo[j] = domains[k].0 as f64;
        hi[j] = domains[k].1 as f64;
    }
    let mut ctx = Ctx {
        problem,
        ints: &ints,
        domains: &domains,
        pure_rows: &pure_rows,
        lo: &mut lo,
        hi: &mut hi,
        work: &mut work,
        best: &mut best,
        unbounded: &mut unbounded,
    };
    ctx.dfs(0)?;
    if unbounded {
        return Ok(OracleOutcome::Unbounded);
    }
    Ok(match best {
        Some((objective, values)) => OracleOutcome::Optimal { objective, values },
        None => OracleOutcome::Infeasible,
    })
}

struct Ctx<'a> {
    problem: &'a MilpProblem,
    ints: &'a [usize],
    domains: &'a [(i64, i64)],
    pure_rows: &'a [usize],
    lo: &'a mut Vec<f64>,
    hi: &'a mut Vec<f64>,
    work: &'a mut MilpProblem,
    best: &'a mut Option<(f64, Vec<f64>)>,
    unbounded: &'a mut bool,
}

impl Ctx<'_> {
    fn rows_possible(&self) -> bool {
        for &i in self.pure_rows {
            let c = &self.problem.constraints[i];
            let (mut amin, mut amax) = (0.0, 0.0);
            for &(v, a) in &c.coeffs {
                let (l, h) = (self.lo[v.0], self.hi[v.0]);
                if a >= 0.0 {
                    amin += a * l;
                    amax += a * h;
                } else {
                    amin += a * h;
                    amax += a * l;
                }
            }
            let tol = 1e-9 * (1.0 + c.rhs.abs());
            let ok = match c.sense {
                crate::problem::Sense::Le => amin <= c.rhs + tol,
                crate::problem::Sense::Ge => amax >= c.rhs - tol,
                crate::problem::Sense::Eq => amin <= c.rhs + tol && amax >= c.rhs - tol,
            };
            if !ok {
                return false;
            }
        }
        true
    }

    fn dfs(&mut self, k: usize) -> Result<(), MilpError> {
        if *self.unbounded || !self.rows_possible() {
            return Ok(());
        }
        if k == self.ints.len() {
            return self.leaf();
        }
        let j = self.ints[k];
        let (a, b) = self.domains[k];
        for v in a..=b {
            self.lo[j] = v as f64;
            self.hi[j] = v as f64;
            self.dfs(k + 1)?;
        }
        self.lo[j] = a as f64;
        self.hi[j] = b as f64;
        Ok(())
    }

    fn leaf(&mut self) -> Result<(), MilpError> {
        for (j, var) in self.work.variables.iter_mut().enumerate() {
            var.lower = self.lo[j];
            var.upper = self.hi[j];
        }
        let tol = LpTolerances::default();
        let sol = solve_lp_with(self.work, tol)?;
        match sol.status {
            LpStatus::Infeasible => {}
            LpStatus::Unbounded => *self.unbounded = true,
            LpStatus::Optimal => {
                if self.best.as_ref().map_or(true, |(o, _)| sol.objective > *o) {
                    *self.best = Some((sol.objective, sol.values));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Sense;

    #[test]
    fn refuses_large_problems() {
        let mut p = MilpProblem::new("big");
        for i in 0..5 {
            p.add_binary(format!("b{i}"));
        }
        let err = enumerate_oracle(&p, 4).unwrap_err();
        assert!(matches!(err, MilpError::TooManyIntegers { count: 5, limit: 4 }));
    }

    #[test]
    fn mixed_problem() {
        // max 2b + x, x <= 3b, x <= 2.5 -> b = 1, x = 2.5, 4.5
        let mut p = MilpProblem::new("m");
        let b = p.add_binary("b");
        let x = p.add_continuous("x", 0.0, 2.5);
        p.add_constraint("link", vec![(x, 1.0), (b, -3.0)], Sense::Le, 0.0);
        p.set_objective(vec![(b, 2.0), (x, 1.0)]);
        match enumerate_oracle(&p, 24).unwrap() {
            OracleOutcome::Optimal { objective, .. } => assert!((objective - 4.5).abs() < 1e-9),
            o => panic!("{o:?}"),
        }
    }
}
