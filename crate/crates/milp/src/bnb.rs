//! LP-based branch and bound on top of the warm-started dual simplex.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::MilpError;
use crate::lp::{DualSimplex, LpStatus, LpTolerances, Reopt};
use crate::problem::MilpProblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    /// Stopped on the node limit with an incumbent.
    Feasible { gap: f64 },
    Infeasible,
    Unbounded,
    /// Stopped on the time limit; `gap` is infinite without an incumbent.
    TimeLimit { gap: f64 },
}

impl SolveStatus {
    pub fn has_solution(&self) -> bool {
        match self {
            SolveStatus::Optimal | SolveStatus::Feasible { .. } => true,
            SolveStatus::TimeLimit { gap } => gap.is_finite(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: u64,
    pub lp_iterations: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub status: SolveStatus,
    /// Objective of the incumbent, if any.
    pub objective: Option<f64>,
    pub values: Option<Vec<f64>>,
    /// Best known upper bound on the optimum.
    pub bound: f64,
    pub stats: SolveStats,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    /// Relative gap `|bound - incumbent| / max(1e-10, |incumbent|)` at which a node is pruned.
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub int_tol: f64,
    /// Largest row or bound violation accepted for an incumbent.
    pub feas_tol: f64,
    pub lp: LpTolerances,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            time_limit: None,
            node_limit: None,
            rel_gap: 1e-6,
            abs_gap: 1e-9,
            int_tol: 1e-6,
            feas_tol: 1e-6,
            lp: LpTolerances::default(),
        }
    }
}

impl SolverConfig {
    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = Some(limit);
        self
    }

    pub fn with_rel_gap(mut self, gap: f64) -> Self {
        self.rel_gap = gap;
        self
    }
}

pub fn relative_gap(bound: f64, incumbent: f64) -> f64 {
    (bound - incumbent).abs() / incumbent.abs().max(1e-10)
}

struct Node {
    id: u64,
    depth: u32,
    bound: f64,
    /// Bound changes relative to the root, in application order.
    changes: Vec<(usize, f64, f64)>,
    /// Optimal basis of the parent, the warm start for this node.
    basis: Option<Rc<Vec<usize>>>,
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
    // max-heap: larger bound first, then deeper, then older
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    problem: &'a MilpProblem,
    cfg: &'a SolverConfig,
    lp: DualSimplex,
    root_bounds: Vec<(f64, f64)>,
    int_vars: Vec<usize>,
    applied: Vec<usize>,
    incumbent: Option<(f64, Vec<f64>)>,
    next_id: u64,
    nodes: u64,
}

enum NodeResult {
    Pruned,
    Branch(Node, Node),
    Interrupted,
    Unbounded,
}

impl Search<'_> {
    fn prunable(&self, bound: f64) -> bool {
        match &self.incumbent {
            None => false,
            Some((inc, _)) => {
                bound <= *inc + self.cfg.abs_gap || relative_gap(bound, *inc) <= self.cfg.rel_gap
            }
        }
    }

    fn apply(&mut self, changes: &[(usize, f64, f64)]) {
        for j in self.applied.drain(..) {
            let (l, h) = self.root_bounds[j];
            self.lp.set_bounds(j, l, h);
        }
        for &(j, l, h) in changes {
            self.lp.set_bounds(j, l, h);
            self.applied.push(j);
        }
    }

    fn process(&mut self, node: Node, deadline: Option<Instant>) -> Result<NodeResult, MilpError> {
        if self.prunable(node.bound) {
            return Ok(NodeResult::Pruned);
        }
        self.nodes += 1;
        if let Some(b) = &node.basis {
            self.lp.load_basis(b)?;
        }
        self.apply(&node.changes);
        let status = match self.lp.reoptimize(deadline)? {
            Reopt::Interrupted => return Ok(NodeResult::Interrupted),
            Reopt::Done(s) => s,
        };
        match status {
            LpStatus::Infeasible => return Ok(NodeResult::Pruned),
            LpStatus::Unbounded => return Ok(NodeResult::Unbounded),
            LpStatus::Optimal => {}
        }
        let obj = self.lp.objective();
        if self.prunable(obj) {
            return Ok(NodeResult::Pruned);
        }
        let x = self.lp.values();
        // most fractional, lowest index on ties
        let mut pick: Option<(usize, f64)> = None;
        let mut best_score = -1.0;
        for &j in &self.int_vars {
            let f = x[j] - x[j].floor();
            if f <= self.cfg.int_tol || f >= 1.0 - self.cfg.int_tol {
                continue;
            }
            let score = 0.5 - (f - 0.5).abs();
            if score > best_score + 1e-12 {
                best_score = score;
                pick = Some((j, x[j]));
            }
        }
        match pick {
            None => {
                let mut snapped = x;
                for &j in &self.int_vars {
                    snapped[j] = snapped[j].round();
                }
                let (viol, _) = self.problem.max_violation(&snapped);
                if viol <= self.cfg.feas_tol {
                    let value = self.problem.evaluate(&snapped);
                    if self.incumbent.as_ref().map_or(true, |(inc, _)| value > *inc) {
                        log::trace!("incumbent {value} at node {}", node.id);
                        self.incumbent = Some((value, snapped));
                    }
                } else {
                    log::warn!("integral LP point rejected after rounding, violation {viol:.3e}");
                }
                Ok(NodeResult::Pruned)
            }
            Some((j, v)) => {
                let (l, h) = self.lp.bounds(j);
                let basis = Rc::new(self.lp.basis().to_vec());
                let mut down = node.changes.clone();
                down.push((j, l, v.floor()));
                let mut up = node.changes;
                up.push((j, v.ceil(), h));
                let mk = |s: &mut Self, changes| {
                    s.next_id += 1;
                    Node {
                        id: s.next_id,
                        depth: node.depth + 1,
                        bound: obj,
                        changes,
                        basis: Some(basis.clone()),
                    }
                };
                let d = mk(self, down);
                let u = mk(self, up);
                // preferred child first
                if v - v.floor() >= 0.5 {
                    Ok(NodeResult::Branch(u, d))
                } else {
                    Ok(NodeResult::Branch(d, u))
                }
            }
        }
    }
}

/// Solves `problem` to optimality (within `cfg` gaps) or until a limit.
///
/// The search dives depth-first until the first incumbent is found, then
/// switches to best-bound order.
pub fn solve_milp(problem: &MilpProblem, cfg: &SolverConfig) -> Result<MilpSolution, MilpError> {
    problem.validate()?;
    let start = Instant::now();
    let deadline = cfg.time_limit.map(|t| start + t);
    let mut root_bounds = Vec::with_capacity(problem.num_vars());
    let mut int_vars = Vec::new();
    for (j, v) in problem.variables.iter().enumerate() {
        if v.integer {
            int_vars.push(j);
            root_bounds.push((v.lower.ceil(), v.upper.floor()));
        } else {
            root_bounds.push((v.lower, v.upper));
        }
    }
    let mut lp = DualSimplex::new(problem, cfg.lp);
    for &j in &int_vars {
        let (l, h) = root_bounds[j];
        if l > h {
            return Ok(finish(SolveStatus::Infeasible, None, f64::NEG_INFINITY, 0, 0, start));
        }
        lp.set_bounds(j, l, h);
    }
    let mut s = Search {
        problem,
        cfg,
        lp,
        root_bounds,
        int_vars,
        applied: Vec::new(),
        incumbent: None,
        next_id: 0,
        nodes: 0,
    };

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut dive: Vec<Node> = Vec::new();
    dive.push(Node {
        id: 0,
        depth: 0,
        bound: f64::INFINITY,
        changes: Vec::new(),
        basis: None,
    });
    let mut stop: Option<SolveStatus> = None;
    loop {
        let node = if let Some(n) = dive.pop() {
            n
        } else if let Some(n) = heap.pop() {
            n
        } else {
            break;
        };
        if deadline.is_some_and(|d| Instant::now() >= d) {
            heap.push(node);
            stop = Some(SolveStatus::TimeLimit { gap: 0.0 });
            break;
        }
        if cfg.node_limit.is_some_and(|l| s.nodes >= l) {
            heap.push(node);
            stop = Some(SolveStatus::Feasible { gap: 0.0 });
            break;
        }
        let bound = node.bound;
        let depth = node.depth;
        match s.process(node, deadline)? {
            NodeResult::Pruned => {}
            NodeResult::Unbounded => {
                let iters = s.lp.iterations;
                return Ok(finish(SolveStatus::Unbounded, None, f64::INFINITY, s.nodes, iters, start));
            }
            NodeResult::Interrupted => {
                heap.push(Node {
                    id: u64::MAX,
                    depth,
                    bound,
                    changes: Vec::new(),
                    basis: None,
                });
                stop = Some(SolveStatus::TimeLimit { gap: 0.0 });
                break;
            }
            NodeResult::Branch(first, second) => {
                if s.incumbent.is_none() {
                    dive.push(second);
                    dive.push(first);
                } else {
                    // flush any remaining dive stack into the heap
                    heap.extend(dive.drain(..));
                    heap.push(first);
                    heap.push(second);
                }
            }
        }
        if s.incumbent.is_some() && !dive.is_empty() {
            heap.extend(dive.drain(..));
        }
    }

    let open_bound = heap
        .iter()
        .chain(dive.iter())
        .map(|n| n.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    let iters = s.lp.iterations;
    let (inc_obj, inc_vals) = match s.incumbent {
        Some((o, v)) => (Some(o), Some(v)),
        None => (None, None),
    };
    let status = match stop {
        None => {
            if inc_obj.is_some() {
                SolveStatus::Optimal
            } else {
                SolveStatus::Infeasible
            }
        }
        Some(st) => {
            let gap = match inc_obj {
                Some(o) => relative_gap(open_bound.max(o), o),
                None => f64::INFINITY,
            };
            match st {
                SolveStatus::TimeLimit { .. } => SolveStatus::TimeLimit { gap },
                _ if inc_obj.is_some() => SolveStatus::Feasible { gap },
                _ => SolveStatus::TimeLimit { gap },
            }
        }
    };
    let bound = match (status, inc_obj) {
        (SolveStatus::Optimal, Some(o)) => o,
        (_, Some(o)) => open_bound.max(o),
        (_, None) => open_bound,
    };
    let mut out = finish(status, inc_obj, bound, s.nodes, iters, start);
    out.values = inc_vals;
    Ok(out)
}

fn finish(
    status: SolveStatus,
    objective: Option<f64>,
    bound: f64,
    nodes: u64,
    lp_iterations: u64,
    start: Instant,
) -> MilpSolution {
    MilpSolution {
        status,
        objective,
        values: None,
        bound,
        stats: SolveStats {
            nodes,
            lp_iterations,
            seconds: start.elapsed().as_secs_f64(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Sense;

    #[test]
    fn small_knapsack() {
        // max 3x1 + 2x2, 2x1 + x2 <= 2
        let mut p = MilpProblem::new("k");
        let a = p.add_binary("x1");
        let b = p.add_binary("x2");
        p.add_constraint("cap", vec![(a, 2.0), (b, 1.0)], Sense::Le, 2.0);
        p.set_objective(vec![(a, 3.0), (b, 2.0)]);
        let s = solve_milp(&p, &SolverConfig::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective.unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_binary() {
        let mut p = MilpProblem::new("i");
        let a = p.add_binary("x");
        p.add_constraint("c", vec![(a, 2.0)], Sense::Eq, 1.0);
        let s = solve_milp(&p, &SolverConfig::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.objective.is_none());
    }

    #[test]
    fn general_integer() {
        // max x + y, 2x + 2y <= 7, x,y integer in [0, 10] -> 3
        let mut p = MilpProblem::new("g");
        let x = p.add_var("x", 0.0, 10.0, true);
        let y = p.add_var("y", 0.0, 10.0, true);
        p.add_constraint("c", vec![(x, 2.0), (y, 2.0)], Sense::Le, 7.0);
        p.set_objective(vec![(x, 1.0), (y, 1.0)]);
        let s = solve_milp(&p, &SolverConfig::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective.unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded_relaxation() {
        let mut p = MilpProblem::new("u");
        let x = p.add_continuous("x", 0.0, f64::INFINITY);
        let b = p.add_binary("b");
        p.add_constraint("c", vec![(b, 1.0)], Sense::Le, 1.0);
        p.set_objective(vec![(x, 1.0), (b, 1.0)]);
        let s = solve_milp(&p, &SolverConfig::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Unbounded);
    }

    #[test]
    fn gap_formula() {
        assert!((relative_gap(110.0, 100.0) - 0.1).abs() < 1e-12);
        assert!((relative_gap(1.0, 0.0) - 1e10).abs() < 1.0);
    }
}
