//! Rolling-horizon heuristic: a sequence of short-window subproblems over
//! the scenario tree, each starting from the inventories stored by its
//! predecessor, followed by a shrinking tail that ends with the two-stage
//! problem on `T - 1, T`.
//!
//! Step `k` covers stages `k..=min(k + W, T)`. All stage-`k` nodes become
//! roots of one joint MILP that shares the routing decisions, so the plan
//! for day `k + 1` is a single set of routes.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use stochwaste_milp::{solve_milp, MilpError, SolveStatus, SolverConfig};
use thiserror::Error;

use crate::instance::Instance;
use crate::models::{
    build_model, BuildOptions, CollectionPlan, ModelError, NodeRecord, PlanData, Profit, RootedTree, Variant,
};
use crate::scentree::{ScenarioTree, TreeError, TreeNode};

#[derive(Debug, Error)]
pub enum RhError {
    #[error("window {window} out of range 1..={max} for a {stages}-stage tree")]
    Window { window: usize, max: usize, stages: usize },
    #[error("empty stage span {k}..{l} (tree has {stages} stages)")]
    Span { k: usize, l: usize, stages: usize },
    #[error("time limit hit without a feasible plan on stages {k}..{l}")]
    NoIncumbent { k: usize, l: usize },
    #[error("subproblem on stages {k}..{l} is unbounded")]
    Unbounded { k: usize, l: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// The subtree hanging from one stage-`k` node, cut at stage `l`.
#[derive(Debug, Clone)]
pub struct RestrictedTree {
    pub tree: ScenarioTree,
    /// Original id of each node of `tree`.
    pub origin: Vec<usize>,
    /// Unconditional probability of the root in the original tree.
    pub weight: f64,
}

impl RestrictedTree {
    pub fn root_origin(&self) -> usize {
        self.origin[0]
    }
}

/// Re-roots the tree at every stage-`k` node and keeps stages up to `l`.
/// Probabilities inside each piece are conditional on its root.
pub fn subtree_restriction(tree: &ScenarioTree, k: usize, l: usize) -> Result<Vec<RestrictedTree>, RhError> {
    let stages = tree.num_stages();
    if k == 0 || k >= l || l > stages {
        return Err(RhError::Span { k, l, stages });
    }
    let mut out = Vec::new();
    for &root in tree.stage_nodes(k) {
        let r = &tree.nodes[root];
        let mut nodes = vec![TreeNode {
            id: 0,
            stage: 1,
            parent: None,
            probability: 1.0,
            conditional: 1.0,
            rates: r.rates.clone(),
        }];
        let mut origin = vec![root];
        let mut frontier = vec![(root, 0usize)];
        for _ in k..l {
            let mut next = Vec::new();
            for &(orig, sub) in &frontier {
                for &c in tree.children(orig) {
                    let node = &tree.nodes[c];
                    let id = nodes.len();
                    nodes.push(TreeNode {
                        id,
                        stage: nodes[sub].stage + 1,
                        parent: Some(sub),
                        probability: nodes[sub].probability * node.conditional,
                        conditional: node.conditional,
                        rates: node.rates.clone(),
                    });
                    origin.push(c);
                    next.push((c, id));
                }
            }
            frontier = next;
        }
        out.push(RestrictedTree {
            tree: ScenarioTree::from_nodes(tree.n_bins, nodes)?,
            origin,
            weight: r.probability,
        });
    }
    Ok(out)
}

/// Splits a total time limit evenly over the subproblems and hands unused
/// time on to the next one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSchedule {
    pub total_s: f64,
    pub count: usize,
    pub base_s: f64,
    /// Unused (positive) or overdrawn (negative) time so far.
    pub carry_s: f64,
    pub consumed_s: f64,
    next: usize,
}

impl BudgetSchedule {
    pub fn new(total_s: f64, count: usize) -> Self {
        let base_s = if count == 0 { 0.0 } else { total_s / count as f64 };
        Self {
            total_s,
            count,
            base_s,
            carry_s: 0.0,
            consumed_s: 0.0,
            next: 0,
        }
    }

    /// Budget of the next subproblem.
    pub fn budget(&self) -> f64 {
        (self.base_s + self.carry_s).max(0.0)
    }

    /// Records the time spent by the current subproblem; returns the
    /// budget it had.
    pub fn record(&mut self, used_s: f64) -> f64 {
        let b = self.budget();
        self.carry_s += self.base_s - used_s;
        self.consumed_s += used_s;
        self.next += 1;
        b
    }

    pub fn remaining(&self) -> usize {
        self.count.saturating_sub(self.next)
    }
}

/// Per-subproblem budgets for a sequence of solve times, as the schedule
/// would hand them out. Solve times are capped at the budget, like a solver
/// honouring its limit.
pub fn time_budget_schedule(total_s: f64, demands_s: &[f64]) -> Vec<(f64, f64)> {
    let mut sched = BudgetSchedule::new(total_s, demands_s.len());
    demands_s
        .iter()
        .map(|&d| {
            let b = sched.budget();
            let used = d.min(b);
            sched.record(used);
            (b, used)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RhConfig {
    /// Lookahead `W`, between 1 and `T - 2`.
    pub window: usize,
    pub time_limit: Option<Duration>,
    pub variant: Variant,
    pub tighten_big_m: bool,
    pub solver: SolverConfig,
}

impl RhConfig {
    pub fn new(window: usize, variant: Variant) -> Self {
        Self {
            window,
            time_limit: None,
            variant,
            tighten_big_m: false,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredNode {
    /// Original node id (stage `k + 1`).
    pub node: usize,
    pub collected_kg: Vec<f64>,
    pub inventory_kg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhStep {
    pub k: usize,
    pub l: usize,
    pub roots: usize,
    /// `None` when the subproblem was infeasible.
    pub status: Option<SolveStatus>,
    pub objective: Option<f64>,
    /// Root inventories the subproblem started from, per stage-`k` node.
    pub root_inventory_kg: Vec<(usize, Vec<f64>)>,
    /// Stored stage-`k` routing.
    pub arcs: Vec<(usize, usize)>,
    pub visits: Vec<usize>,
    pub stored: Vec<StoredNode>,
    pub budget_s: Option<f64>,
    pub seconds: f64,
    /// Time handed on to the next subproblem.
    pub carry_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RhTrace {
    pub steps: Vec<RhStep>,
}

impl RhTrace {
    pub fn total_seconds(&self) -> f64 {
        self.steps.iter().map(|s| s.seconds).sum()
    }

    /// One line per subproblem.
    pub fn to_text(&self) -> String {
        let mut s = String::from("k\tl\troots\tstatus\tobjective\tbudget_s\tseconds\tcarry_s\n");
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
        for st in &self.steps {
            let status = match st.status {
                None => "infeasible".to_string(),
                Some(SolveStatus::Optimal) => "optimal".to_string(),
                Some(SolveStatus::Feasible { gap }) => format!("feasible(gap={gap:.3e})"),
                Some(SolveStatus::TimeLimit { gap }) => format!("time_limit(gap={gap:.3e})"),
                Some(other) => format!("{other:?}"),
            };
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{}",
                st.k,
                st.l,
                st.roots,
                status,
                opt(st.objective),
                opt(st.budget_s),
                st.seconds,
                opt(st.carry_s)
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct RhResult {
    pub profit: Profit,
    /// Full-horizon decisions; `None` when a subproblem was infeasible.
    pub data: Option<PlanData>,
    pub plan: Option<CollectionPlan>,
    pub trace: RhTrace,
}

pub fn run_rolling_horizon(instance: &Instance, tree: &ScenarioTree, cfg: &RhConfig) -> Result<RhResult, RhError> {
    let stages = tree.num_stages();
    if stages != instance.parameters.horizon {
        return Err(ModelError::HorizonMismatch {
            tree: stages,
            horizon: instance.parameters.horizon,
        }
        .into());
    }
    let max = stages.saturating_sub(2);
    if cfg.window == 0 || cfg.window > max {
        return Err(RhError::Window {
            window: cfg.window,
            max,
            stages,
        });
    }
    let n = instance.n_bins();
    let opts = BuildOptions {
        prune_zero_prob: false,
        tighten_big_m: cfg.tighten_big_m,
    };
    let mut schedule = cfg.time_limit.map(|tl| BudgetSchedule::new(tl.as_secs_f64(), stages - 1));

    let mut inventory: Vec<Option<Vec<f64>>> = vec![None; tree.num_nodes()];
    let mut collected: Vec<Vec<f64>> = vec![Vec::new(); tree.num_nodes()];
    inventory[tree.root()] = Some((0..n).map(|i| instance.initial_content_kg(i)).collect());
    let mut arcs = Vec::new();
    let mut visits = Vec::new();
    let mut trace = RhTrace::default();

    for k in 1..stages {
        let l = (k + cfg.window).min(stages);
        let pieces = subtree_restriction(tree, k, l)?;
        let starts: Vec<(usize, Vec<f64>)> = pieces
            .iter()
            .map(|p| {
                let inv = inventory[p.root_origin()].clone().expect("stage-k inventories are stored");
                (p.root_origin(), inv)
            })
            .collect();
        let rooted: Vec<RootedTree> = pieces
            .iter()
            .zip(&starts)
            .map(|(p, (_, inv))| RootedTree {
                tree: &p.tree,
                weight: p.weight,
                root_inventory_kg: inv.clone(),
            })
            .collect();
        let built = build_model(instance, &rooted, cfg.variant, opts)?;

        let mut solver = cfg.solver.clone();
        let budget = schedule.as_ref().map(|s| s.budget());
        if let Some(b) = budget {
            solver.time_limit = Some(Duration::from_secs_f64(b));
        }
        let clock = Instant::now();
        let sol = solve_milp(&built.problem, &solver)?;
        let seconds = clock.elapsed().as_secs_f64();
        let carry = schedule.as_mut().map(|s| {
            s.record(seconds);
            s.carry_s
        });

        let mut step = RhStep {
            k,
            l,
            roots: pieces.len(),
            status: None,
            objective: None,
            root_inventory_kg: starts,
            arcs: Vec::new(),
            visits: Vec::new(),
            stored: Vec::new(),
            budget_s: budget,
            seconds,
            carry_s: carry,
        };
        match sol.status {
            SolveStatus::Infeasible => {
                log::info!("rolling horizon: stages {k}..{l} infeasible");
                trace.steps.push(step);
                return Ok(RhResult {
                    profit: Profit::NegativeInfinity,
                    data: None,
                    plan: None,
                    trace,
                });
            }
            SolveStatus::Unbounded => return Err(RhError::Unbounded { k, l }),
            st if !st.has_solution() => return Err(RhError::NoIncumbent { k, l }),
            _ => {}
        }
        let values = sol.values.as_ref().expect("status has a solution");
        let data = PlanData::from_values(&built.layout, values);
        step.status = Some(sol.status);
        step.objective = sol.objective;
        step.arcs = data.arcs[0].clone();
        step.visits = data.visits[0].clone();
        for rec in data.nodes.iter().filter(|r| r.stage == 2) {
            let orig = pieces[rec.tree].origin[rec.node];
            // clamp solver noise so the next step's fixed inventories stay in bounds
            let inv: Vec<f64> = rec.inventory_kg.iter().map(|v| v.max(0.0)).collect();
            let col: Vec<f64> = rec.collected_kg.iter().map(|v| v.max(0.0)).collect();
            inventory[orig] = Some(inv.clone());
            collected[orig] = col.clone();
            step.stored.push(StoredNode {
                node: orig,
                collected_kg: col,
                inventory_kg: inv,
            });
        }
        arcs.push(step.arcs.clone());
        visits.push(step.visits.clone());
        trace.steps.push(step);
    }

    let nodes = tree
        .nodes
        .iter()
        .map(|nd| NodeRecord {
            tree: 0,
            node: nd.id,
            stage: nd.stage,
            probability: nd.probability,
            collected_kg: collected[nd.id].clone(),
            inventory_kg: inventory[nd.id].clone().unwrap_or_default(),
        })
        .collect();
    let data = PlanData {
        variant: cfg.variant,
        n_bins: n,
        stages,
        arcs,
        visits,
        nodes,
    };
    let plan = CollectionPlan::from_data(instance, &data)?;
    Ok(RhResult {
        profit: Profit::Finite(data.profit(instance)),
        data: Some(data),
        plan: Some(plan),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scentree::BranchingStructure;

    fn binary_tree(stages: usize) -> ScenarioTree {
        let mut b = vec![1];
        b.extend(std::iter::repeat(2).take(stages - 1));
        let s = BranchingStructure::new(b).unwrap();
        ScenarioTree::from_structure(&s, 1, |_, c| [0.3, 0.7][c], |t, p| vec![0.1 * t as f64 + 0.01 * p.len() as f64])
            .unwrap()
    }

    #[test]
    fn full_span_is_identity() {
        let t = binary_tree(4);
        let r = subtree_restriction(&t, 1, 4).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].tree, t);
        assert_eq!(r[0].origin, (0..t.num_nodes()).collect::<Vec<_>>());
        assert_eq!(r[0].weight, 1.0);
    }

    #[test]
    fn last_span_gives_conditional_two_stage_trees() {
        let t = binary_tree(4);
        let r = subtree_restriction(&t, 3, 4).unwrap();
        assert_eq!(r.len(), 4);
        for p in &r {
            assert_eq!(p.tree.num_stages(), 2);
            let mass: f64 = p.tree.stage_nodes(2).iter().map(|&c| p.tree.nodes[c].probability).sum();
            assert!((mass - 1.0).abs() < 1e-15);
            assert_eq!(p.weight, t.nodes[p.root_origin()].probability);
        }
    }

    #[test]
    fn inner_span_keeps_branch_products() {
        let t = binary_tree(5);
        for p in subtree_restriction(&t, 2, 4).unwrap() {
            assert_eq!(p.tree.num_stages(), 3);
            for (sub, &orig) in p.origin.iter().enumerate() {
                let want = t.nodes[orig].probability;
                let got = p.weight * p.tree.nodes[sub].probability;
                assert!((want - got).abs() < 1e-15);
                assert_eq!(p.tree.nodes[sub].rates, t.nodes[orig].rates);
            }
        }
    }

    #[test]
    fn empty_span_is_rejected() {
        let t = binary_tree(3);
        assert!(subtree_restriction(&t, 2, 2).is_err());
        assert!(subtree_restriction(&t, 0, 2).is_err());
        assert!(subtree_restriction(&t, 2, 4).is_err());
    }

    #[test]
    fn even_split_before_rollover() {
        let s = BudgetSchedule::new(7200.0, 5);
        assert_eq!(s.budget(), 1440.0);
    }

    #[test]
    fn leftover_moves_to_next_subproblem() {
        let mut s = BudgetSchedule::new(7200.0, 5);
        assert_eq!(s.record(100.0), 1440.0);
        assert_eq!(s.budget(), 2780.0);
    }

    #[test]
    fn exhausted_budgets_stay_even() {
        let b = time_budget_schedule(7200.0, &[1e9; 5]);
        assert!(b.iter().all(|&(budget, used)| budget == 1440.0 && used == 1440.0));
    }
}
