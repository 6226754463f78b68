//! The collection models as MILPs: the asymmetric single-commodity flow
//! model M and the symmetric two-commodity model M_sym with a copy of the
//! depot. Also decoding of solutions into plans, the closed-form optimum
//! for free travel, and the worst-case instance for short lookahead.
//!
//! Vertex `0` is the depot, bin position `k` (0-based) is vertex `k + 1`,
//! and in M_sym vertex `N + 1` is the copy depot (distances equal to the
//! depot's). Routing variables are indexed by stage only; flows, collected
//! weights and inventories by tree node.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use stochwaste_milp::{MilpError, MilpProblem, MilpSolution, Sense, VarId};
use thiserror::Error;

use crate::instance::{Bin, DistanceMatrix, Instance, InstanceError, Parameters};
use crate::scentree::{ScenarioTree, TreeError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("tree has {tree} bins but the instance has {instance}")]
    BinMismatch { tree: usize, instance: usize },
    #[error("tree has {tree} stages but the horizon is {horizon}")]
    HorizonMismatch { tree: usize, horizon: usize },
    #[error("symmetric model needs a symmetric distance matrix (symmetrize it first)")]
    Asymmetric,
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("decode: {0}")]
    Decode(String),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    M,
    MSym,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::M => "M",
            Variant::MSym => "Msym",
        })
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "m" => Ok(Variant::M),
            "msym" | "m_sym" => Ok(Variant::MSym),
            _ => Err(format!("unknown model variant {s:?} (expected M or Msym)")),
        }
    }
}

/// Profit of a policy; infeasible policies are worth minus infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Profit {
    Finite(f64),
    NegativeInfinity,
}

impl Profit {
    pub fn value(&self) -> Option<f64> {
        match self {
            Profit::Finite(v) => Some(*v),
            Profit::NegativeInfinity => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Profit::Finite(_))
    }
}

impl fmt::Display for Profit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profit::Finite(v) => write!(f, "{v}"),
            Profit::NegativeInfinity => f.write_str("-inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Leave out nodes with zero probability (and their subtrees).
    pub prune_zero_prob: bool,
    /// Replace big-M by Q in the flow lower bounds and by E_i*B in the
    /// emptied-bin rows.
    pub tighten_big_m: bool,
}

/// A tree whose root inventories are given (kg), with a weight applied to
/// all its node probabilities.
#[derive(Debug, Clone)]
pub struct RootedTree<'a> {
    pub tree: &'a ScenarioTree,
    pub weight: f64,
    pub root_inventory_kg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeVars {
    /// Index into the rooted trees the model was built from.
    pub tree: usize,
    pub node: usize,
    pub stage: usize,
    pub parent: Option<usize>,
    pub probability: f64,
    /// Flow per ordered vertex pair, `i * n_vertices + j`; empty at roots.
    pub f: Vec<Option<VarId>>,
    /// Empty at roots.
    pub w: Vec<VarId>,
    pub u: Vec<VarId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLayout {
    pub variant: Variant,
    pub n_bins: usize,
    pub n_vertices: usize,
    pub stages: usize,
    /// `x[s - 1][i * n_vertices + j]` for decision stage `s`.
    pub x: Vec<Vec<Option<VarId>>>,
    /// `y[s - 1][bin position]`.
    pub y: Vec<Vec<VarId>>,
    pub nodes: Vec<NodeVars>,
}

impl ModelLayout {
    pub fn x_var(&self, s: usize, i: usize, j: usize) -> Option<VarId> {
        self.x[s - 1][i * self.n_vertices + j]
    }

    /// Maps the copy depot onto the depot.
    pub fn physical(&self, v: usize) -> usize {
        if self.variant == Variant::MSym && v == self.n_bins + 1 {
            0
        } else {
            v
        }
    }

    pub fn routing_vars(&self, s: usize) -> impl Iterator<Item = VarId> + '_ {
        self.x[s - 1].iter().flatten().copied().chain(self.y[s - 1].iter().copied())
    }
}

#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub problem: MilpProblem,
    pub layout: ModelLayout,
}

fn distance(inst: &Instance, layout_variant: Variant, i: usize, j: usize) -> f64 {
    let n = inst.n_bins();
    let map = |v: usize| if layout_variant == Variant::MSym && v == n + 1 { 0 } else { v };
    inst.distances.get(map(i), map(j))
}

/// Model M on a full tree.
pub fn build_model_m(instance: &Instance, tree: &ScenarioTree) -> Result<BuiltModel, ModelError> {
    build_full(instance, tree, Variant::M, BuildOptions::default())
}

/// Model M_sym on a full tree.
pub fn build_model_msym(instance: &Instance, tree: &ScenarioTree) -> Result<BuiltModel, ModelError> {
    build_full(instance, tree, Variant::MSym, BuildOptions::default())
}

/// Either model on a full tree, starting from the instance's initial fills.
pub fn build_full(
    instance: &Instance,
    tree: &ScenarioTree,
    variant: Variant,
    opts: BuildOptions,
) -> Result<BuiltModel, ModelError> {
    if tree.num_stages() != instance.parameters.horizon {
        return Err(ModelError::HorizonMismatch {
            tree: tree.num_stages(),
            horizon: instance.parameters.horizon,
        });
    }
    let init = (0..instance.n_bins()).map(|i| instance.initial_content_kg(i)).collect();
    build_model(
        instance,
        &[RootedTree {
            tree,
            weight: 1.0,
            root_inventory_kg: init,
        }],
        variant,
        opts,
    )
}

/// Builds one MILP over several trees with shared routing decisions.
/// All trees must have the same number of stages.
pub fn build_model(
    instance: &Instance,
    trees: &[RootedTree<'_>],
    variant: Variant,
    opts: BuildOptions,
) -> Result<BuiltModel, ModelError> {
    let n = instance.n_bins();
    let first = trees.first().ok_or_else(|| ModelError::Precondition("no trees".into()))?;
    let stages = first.tree.num_stages();
    for rt in trees {
        if rt.tree.n_bins != n {
            return Err(ModelError::BinMismatch {
                tree: rt.tree.n_bins,
                instance: n,
            });
        }
        if rt.tree.num_stages() != stages {
            return Err(ModelError::Precondition("trees with different stage counts".into()));
        }
        if rt.root_inventory_kg.len() != n {
            return Err(ModelError::Precondition("root inventory has the wrong length".into()));
        }
    }
    if stages < 2 {
        return Err(ModelError::Precondition("at least two stages are needed".into()));
    }
    if variant == Variant::MSym && !instance.distances.is_symmetric() {
        return Err(ModelError::Asymmetric);
    }

    let p = &instance.parameters;
    let q = p.vehicle_capacity_kg;
    let big_m = p.big_m;
    let eb: Vec<f64> = (0..n).map(|i| instance.max_content_kg(i)).collect();
    let nv = match variant {
        Variant::M => n + 1,
        Variant::MSym => n + 2,
    };
    let copy = n + 1;
    let bins = 1..=n;

    let mut prob = MilpProblem::new(format!("{}_{}", variant, instance.name));
    let mut objective: Vec<(VarId, f64)> = Vec::new();

    // routing variables per decision stage
    let mut x = Vec::with_capacity(stages - 1);
    let mut y = Vec::with_capacity(stages - 1);
    for s in 1..stages {
        let mut xs = vec![None; nv * nv];
        for i in 0..nv {
            for j in 0..nv {
                if i == j {
                    continue;
                }
                let v = prob.add_binary(format!("x_{s}_{i}_{j}"));
                xs[i * nv + j] = Some(v);
                let d = distance(instance, variant, i, j);
                let c = match variant {
                    Variant::M => p.travel_cost_per_km * d,
                    Variant::MSym => 0.5 * p.travel_cost_per_km * d,
                };
                if c != 0.0 {
                    objective.push((v, -c));
                }
            }
        }
        x.push(xs);
        y.push(bins.clone().map(|i| prob.add_binary(format!("y_{s}_{i}"))).collect::<Vec<_>>());
    }
    let xv = |s: usize, i: usize, j: usize| x[s - 1][i * nv + j].expect("arc exists");

    // per-stage degree rows
    for s in 1..stages {
        match variant {
            Variant::M => {
                for i in bins.clone() {
                    let mut c: Vec<(VarId, f64)> = (0..=n).filter(|&j| j != i).map(|j| (xv(s, i, j), 1.0)).collect();
                    c.push((y[s - 1][i - 1], -1.0));
                    prob.add_constraint(format!("out_{s}_{i}"), c, Sense::Eq, 0.0);
                }
                for j in bins.clone() {
                    let mut c: Vec<(VarId, f64)> = (0..=n).filter(|&i| i != j).map(|i| (xv(s, i, j), 1.0)).collect();
                    c.push((y[s - 1][j - 1], -1.0));
                    prob.add_constraint(format!("in_{s}_{j}"), c, Sense::Eq, 0.0);
                }
                let mut c: Vec<(VarId, f64)> = bins.clone().map(|i| (xv(s, i, 0), 1.0)).collect();
                c.extend(bins.clone().map(|j| (xv(s, 0, j), -1.0)));
                prob.add_constraint(format!("depot_{s}"), c, Sense::Eq, 0.0);
            }
            Variant::MSym => {
                for j in bins.clone() {
                    let mut c: Vec<(VarId, f64)> = (0..nv).filter(|&i| i != j).map(|i| (xv(s, i, j), 1.0)).collect();
                    c.push((y[s - 1][j - 1], -2.0));
                    prob.add_constraint(format!("deg_{s}_{j}"), c, Sense::Eq, 0.0);
                }
            }
        }
    }

    let mut nodes: Vec<NodeVars> = Vec::new();
    for (ti, rt) in trees.iter().enumerate() {
        let tree = rt.tree;
        let mut index = vec![usize::MAX; tree.num_nodes()];
        for t in 1..=stages {
            for &id in tree.stage_nodes(t) {
                let node = &tree.nodes[id];
                let parent = node.parent.map(|pid| index[pid]);
                if parent == Some(usize::MAX) {
                    continue; // pruned subtree
                }
                let pi = rt.weight * node.probability;
                if opts.prune_zero_prob && t > 1 && pi == 0.0 {
                    continue;
                }
                let k = nodes.len();
                index[id] = k;
                let u: Vec<VarId> = bins
                    .clone()
                    .map(|i| prob.add_continuous(format!("u_{k}_{i}"), 0.0, f64::INFINITY))
                    .collect();
                let Some(pk) = parent else {
                    for i in bins.clone() {
                        prob.add_constraint(
                            format!("init_{k}_{i}"),
                            vec![(u[i - 1], 1.0)],
                            Sense::Eq,
                            rt.root_inventory_kg[i - 1],
                        );
                    }
                    nodes.push(NodeVars {
                        tree: ti,
                        node: id,
                        stage: t,
                        parent: None,
                        probability: pi,
                        f: Vec::new(),
                        w: Vec::new(),
                        u,
                    });
                    continue;
                };
                let s = t - 1;
                let a = &node.rates;
                let mut f = vec![None; nv * nv];
                for i in 0..nv {
                    for j in 0..nv {
                        if i == j {
                            continue;
                        }
                        let keep = match variant {
                            Variant::M => true,
                            Variant::MSym => i != 0 && !(i == copy && j == 0),
                        };
                        if keep {
                            // M: flow out of the depot carries nothing
                            let ub = if variant == Variant::M && i == 0 { 0.0 } else { f64::INFINITY };
                            f[i * nv + j] = Some(prob.add_continuous(format!("f_{k}_{i}_{j}"), 0.0, ub));
                        }
                    }
                }
                let w: Vec<VarId> = bins
                    .clone()
                    .map(|i| prob.add_continuous(format!("w_{k}_{i}"), 0.0, f64::INFINITY))
                    .collect();
                for &wv in &w {
                    if p.selling_price_per_kg * pi != 0.0 {
                        objective.push((wv, p.selling_price_per_kg * pi));
                    }
                }
                let fv = |i: usize, j: usize| f[i * nv + j];
                let up = nodes[pk].u.clone();

                match variant {
                    Variant::M => {
                        for i in bins.clone() {
                            let mut c = Vec::new();
                            for j in 0..=n {
                                if j != i {
                                    c.push((fv(i, j).unwrap(), 1.0));
                                }
                            }
                            for j in bins.clone() {
                                if j != i {
                                    c.push((fv(j, i).unwrap(), -1.0));
                                }
                            }
                            c.push((w[i - 1], -1.0));
                            prob.add_constraint(format!("bal_{k}_{i}"), c, Sense::Eq, 0.0);
                        }
                        for i in bins.clone() {
                            for j in bins.clone() {
                                if i != j {
                                    prob.add_constraint(
                                        format!("cap_{k}_{i}_{j}"),
                                        vec![(fv(i, j).unwrap(), 1.0), (xv(s, i, j), -(q - eb[j - 1] * a[j - 1]))],
                                        Sense::Le,
                                        0.0,
                                    );
                                }
                            }
                        }
                        for i in bins.clone() {
                            prob.add_constraint(
                                format!("capd_{k}_{i}"),
                                vec![(fv(i, 0).unwrap(), 1.0), (xv(s, i, 0), -q)],
                                Sense::Le,
                                0.0,
                            );
                        }
                        for i in bins.clone() {
                            for j in bins.clone() {
                                if i != j {
                                    prob.add_constraint(
                                        format!("room_{k}_{i}_{j}"),
                                        vec![(fv(i, j).unwrap(), 1.0), (w[j - 1], 1.0)],
                                        Sense::Le,
                                        q,
                                    );
                                }
                            }
                        }
                        let m6 = if opts.tighten_big_m { q } else { big_m };
                        for i in bins.clone() {
                            for j in 0..=n {
                                if j != i {
                                    prob.add_constraint(
                                        format!("flb_{k}_{i}_{j}"),
                                        vec![(fv(i, j).unwrap(), 1.0), (w[i - 1], -1.0), (xv(s, i, j), -m6)],
                                        Sense::Ge,
                                        -m6,
                                    );
                                }
                            }
                        }
                    }
                    Variant::MSym => {
                        for i in bins.clone() {
                            let mut c = Vec::new();
                            for j in 0..nv {
                                if j == i {
                                    continue;
                                }
                                if let Some(v) = fv(i, j) {
                                    c.push((v, 1.0));
                                }
                                if let Some(v) = fv(j, i) {
                                    c.push((v, -1.0));
                                }
                            }
                            c.push((w[i - 1], -2.0));
                            prob.add_constraint(format!("bal_{k}_{i}"), c, Sense::Eq, 0.0);
                        }
                        let mut c: Vec<(VarId, f64)> = bins.clone().map(|i| (fv(i, copy).unwrap(), 1.0)).collect();
                        c.extend(w.iter().map(|&v| (v, -1.0)));
                        prob.add_constraint(format!("copy_{k}"), c, Sense::Eq, 0.0);
                        for i in 0..nv {
                            for j in 0..nv {
                                if i == j {
                                    continue;
                                }
                                let mut c = Vec::new();
                                if let Some(v) = fv(i, j) {
                                    c.push((v, 1.0));
                                }
                                if let Some(v) = fv(j, i) {
                                    c.push((v, 1.0));
                                }
                                c.push((xv(s, i, j), -q));
                                prob.add_constraint(format!("pair_{k}_{i}_{j}"), c, Sense::Eq, 0.0);
                            }
                        }
                        for i in bins.clone() {
                            for j in bins.clone() {
                                if i != j {
                                    prob.add_constraint(
                                        format!("cap_{k}_{i}_{j}"),
                                        vec![(fv(i, j).unwrap(), 1.0), (xv(s, i, j), -(q - eb[j - 1] * a[j - 1]))],
                                        Sense::Le,
                                        0.0,
                                    );
                                }
                            }
                        }
                    }
                }

                for i in bins.clone() {
                    let e = eb[i - 1];
                    prob.add_constraint(
                        format!("coll_{k}_{i}"),
                        vec![(w[i - 1], 1.0), (y[s - 1][i - 1], -e)],
                        Sense::Le,
                        0.0,
                    );
                    let m11 = if opts.tighten_big_m { e } else { big_m };
                    prob.add_constraint(
                        format!("empty_{k}_{i}"),
                        vec![(u[i - 1], 1.0), (y[s - 1][i - 1], m11)],
                        Sense::Le,
                        m11,
                    );
                    prob.add_constraint(
                        format!("inv_{k}_{i}"),
                        vec![(u[i - 1], 1.0), (up[i - 1], -1.0), (w[i - 1], 1.0)],
                        Sense::Eq,
                        e * a[i - 1],
                    );
                    prob.add_constraint(
                        format!("ovf_{k}_{i}"),
                        vec![(up[i - 1], 1.0)],
                        Sense::Le,
                        (1.0 - a[i - 1]) * e,
                    );
                }
                nodes.push(NodeVars {
                    tree: ti,
                    node: id,
                    stage: t,
                    parent: Some(pk),
                    probability: pi,
                    f,
                    w,
                    u,
                });
            }
        }
    }
    prob.set_objective(objective);
    Ok(BuiltModel {
        problem: prob,
        layout: ModelLayout {
            variant,
            n_bins: n,
            n_vertices: nv,
            stages,
            x,
            y,
            nodes,
        },
    })
}

/// Variable and row counts of a built model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSize {
    pub binaries: usize,
    pub continuous: usize,
    pub equalities: usize,
    pub inequalities: usize,
}

impl ModelSize {
    pub fn of(p: &MilpProblem) -> Self {
        Self {
            binaries: p.variables.iter().filter(|v| v.is_binary()).count(),
            continuous: p.num_continuous(),
            equalities: p.num_rows_with(Sense::Eq),
            inequalities: p.num_rows() - p.num_rows_with(Sense::Eq),
        }
    }
}

/// Rounded routing decisions plus per-node weights and inventories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanData {
    pub variant: Variant,
    pub n_bins: usize,
    pub stages: usize,
    /// Active arcs per decision stage, as vertex pairs (copy depot kept).
    pub arcs: Vec<Vec<(usize, usize)>>,
    /// Visited bin positions (0-based) per decision stage.
    pub visits: Vec<Vec<usize>>,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub tree: usize,
    pub node: usize,
    pub stage: usize,
    pub probability: f64,
    /// kg per bin; empty at roots.
    pub collected_kg: Vec<f64>,
    pub inventory_kg: Vec<f64>,
}

impl PlanData {
    pub fn from_values(layout: &ModelLayout, values: &[f64]) -> Self {
        let nv = layout.n_vertices;
        let mut arcs = Vec::new();
        let mut visits = Vec::new();
        for s in 1..layout.stages {
            let mut a = Vec::new();
            for i in 0..nv {
                for j in 0..nv {
                    if let Some(v) = layout.x_var(s, i, j) {
                        if values[v.0] > 0.5 {
                            a.push((i, j));
                        }
                    }
                }
            }
            arcs.push(a);
            visits.push((0..layout.n_bins).filter(|&i| values[layout.y[s - 1][i].0] > 0.5).collect());
        }
        let nodes = layout
            .nodes
            .iter()
            .map(|nd| NodeRecord {
                tree: nd.tree,
                node: nd.node,
                stage: nd.stage,
                probability: nd.probability,
                collected_kg: nd.w.iter().map(|v| values[v.0]).collect(),
                inventory_kg: nd.u.iter().map(|v| values[v.0]).collect(),
            })
            .collect();
        Self {
            variant: layout.variant,
            n_bins: layout.n_bins,
            stages: layout.stages,
            arcs,
            visits,
            nodes,
        }
    }

    /// Travel distance of decision stage `s` as charged in the objective.
    pub fn stage_distance(&self, inst: &Instance, s: usize) -> f64 {
        let sum: f64 = self.arcs[s - 1].iter().map(|&(i, j)| distance(inst, self.variant, i, j)).sum();
        match self.variant {
            Variant::M => sum,
            Variant::MSym => 0.5 * sum,
        }
    }

    pub fn total_distance(&self, inst: &Instance) -> f64 {
        (1..self.stages).map(|s| self.stage_distance(inst, s)).sum()
    }

    /// `sum_n pi^n sum_i w_i^n`.
    pub fn expected_collected(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.probability * n.collected_kg.iter().sum::<f64>())
            .sum()
    }

    pub fn profit(&self, inst: &Instance) -> f64 {
        let p = &inst.parameters;
        p.selling_price_per_kg * self.expected_collected() - p.travel_cost_per_km * self.total_distance(inst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayPlan {
    /// Decision stage `s`; the collection happens on day `s + 1`.
    pub stage: usize,
    pub day: usize,
    /// Visited bin ids.
    pub visited: Vec<usize>,
    /// Vertex sequences starting and ending at the depot (0).
    pub routes: Vec<Vec<usize>>,
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kpis {
    pub profit: f64,
    pub collected_kg: f64,
    pub distance_km: f64,
    pub kg_per_km: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionPlan {
    pub variant: Variant,
    pub days: Vec<DayPlan>,
    pub nodes: Vec<NodeRecord>,
    pub multi_trip: bool,
    pub kpis: Kpis,
}

impl CollectionPlan {
    /// Decomposes each day's active arcs into depot routes.
    pub fn from_data(inst: &Instance, data: &PlanData) -> Result<Self, ModelError> {
        let mut days = Vec::new();
        let mut multi = false;
        for s in 1..data.stages {
            let arcs = &data.arcs[s - 1];
            let routes = match data.variant {
                Variant::M => routes_directed(arcs, data.n_bins + 1)?,
                Variant::MSym => routes_undirected(arcs, data.n_bins)?,
            };
            let mut on_route: Vec<usize> = routes.iter().flatten().filter(|&&v| v != 0).copied().collect();
            on_route.sort_unstable();
            let visited: Vec<usize> = data.visits[s - 1].iter().map(|&i| inst.bins[i].id).collect();
            let want: Vec<usize> = data.visits[s - 1].iter().map(|&i| i + 1).collect();
            if on_route != want {
                return Err(ModelError::Decode(format!(
                    "stage {s}: routes cover vertices {on_route:?} but visits are {want:?}"
                )));
            }
            multi |= routes.len() > 1;
            days.push(DayPlan {
                stage: s,
                day: s + 1,
                visited,
                routes,
                distance_km: data.stage_distance(inst, s),
            });
        }
        let collected = data.expected_collected();
        let distance: f64 = days.iter().map(|d| d.distance_km).sum();
        let p = &inst.parameters;
        let profit = p.selling_price_per_kg * collected - p.travel_cost_per_km * distance;
        Ok(Self {
            variant: data.variant,
            days,
            nodes: data.nodes.clone(),
            multi_trip: multi,
            kpis: Kpis {
                profit,
                collected_kg: collected,
                distance_km: distance,
                kg_per_km: if distance > 0.0 { Some(collected / distance) } else { None },
            },
        })
    }
}

fn routes_directed(arcs: &[(usize, usize)], nv: usize) -> Result<Vec<Vec<usize>>, ModelError> {
    let mut succ = vec![None; nv];
    let mut starts = Vec::new();
    for &(i, j) in arcs {
        if i == 0 {
            starts.push(j);
        } else if succ[i].replace(j).is_some() {
            return Err(ModelError::Decode(format!("vertex {i} has two successors")));
        }
    }
    let mut used = 0;
    let mut routes = Vec::new();
    for s in starts {
        let mut r = vec![0, s];
        let mut cur = s;
        used += 1;
        while cur != 0 {
            let nxt = succ[cur]
                .take()
                .ok_or_else(|| ModelError::Decode(format!("route stops at vertex {cur}")))?;
            used += 1;
            r.push(nxt);
            cur = nxt;
            if r.len() > nv + 1 {
                return Err(ModelError::Decode("route does not return to the depot".into()));
            }
        }
        routes.push(r);
    }
    if used != arcs.len() {
        return Err(ModelError::Decode(format!(
            "{} active arcs form cycles that avoid the depot",
            arcs.len() - used
        )));
    }
    Ok(routes)
}

fn routes_undirected(arcs: &[(usize, usize)], n: usize) -> Result<Vec<Vec<usize>>, ModelError> {
    let copy = n + 1;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n + 2];
    let mut edges = 0;
    for &(i, j) in arcs {
        if i < j {
            adj[i].push(j);
            adj[j].push(i);
            edges += 1;
        }
    }
    let mut used = vec![vec![false; n + 2]; n + 2];
    let mut covered = 0;
    let mut routes = Vec::new();
    let mut walk_from = |start: usize, routes: &mut Vec<Vec<usize>>| -> Result<(), ModelError> {
        for k in 0..adj[start].len() {
            let first = adj[start][k];
            if used[start][first] {
                continue;
            }
            let mut r = vec![0];
            let (mut prev, mut cur) = (start, first);
            loop {
                used[prev][cur] = true;
                used[cur][prev] = true;
                covered += 1;
                if cur == 0 || cur == copy {
                    r.push(0);
                    break;
                }
                r.push(cur);
                let nxt = adj[cur].iter().copied().find(|&v| !used[cur][v]);
                match nxt {
                    Some(v) => {
                        prev = cur;
                        cur = v;
                    }
                    None => return Err(ModelError::Decode(format!("route stops at vertex {cur}"))),
                }
            }
            routes.push(r);
        }
        Ok(())
    };
    walk_from(0, &mut routes)?;
    walk_from(copy, &mut routes)?;
    if covered != edges {
        return Err(ModelError::Decode(format!(
            "{} active edges form cycles that avoid the depot",
            edges - covered
        )));
    }
    Ok(routes)
}

pub fn decode_solution(
    instance: &Instance,
    model: &BuiltModel,
    solution: &MilpSolution,
) -> Result<CollectionPlan, ModelError> {
    let values = solution
        .values
        .as_ref()
        .ok_or_else(|| ModelError::Decode(format!("no assignment (status {:?})", solution.status)))?;
    let data = PlanData::from_values(&model.layout, values);
    let plan = CollectionPlan::from_data(instance, &data)?;
    if let Some(obj) = solution.objective {
        let err = (plan.kpis.profit - obj).abs();
        if err > 1e-6 * obj.abs().max(1.0) {
            return Err(ModelError::Decode(format!(
                "plan profit {} differs from objective {obj}",
                plan.kpis.profit
            )));
        }
    }
    Ok(plan)
}

/// Optimal profit when travel is free:
/// `R * B * sum_i E_i (S_i^init + sum_{t >= 2} E[a_i^(t)])`.
pub fn closed_form_profit_c0(instance: &Instance, tree: &ScenarioTree) -> Result<f64, ModelError> {
    let p = &instance.parameters;
    if p.travel_cost_per_km != 0.0 {
        return Err(ModelError::Precondition("travel cost must be zero".into()));
    }
    if tree.n_bins != instance.n_bins() {
        return Err(ModelError::BinMismatch {
            tree: tree.n_bins,
            instance: instance.n_bins(),
        });
    }
    let expected = tree.expected_rates();
    let mut total = 0.0;
    for (i, bin) in instance.bins.iter().enumerate() {
        let acc: f64 = expected.iter().skip(1).map(|e| e[i]).sum();
        total += bin.capacity_m3 * (bin.initial_fill + acc);
    }
    Ok(p.selling_price_per_kg * p.waste_density_kg_m3 * total)
}

/// Instance on which a one-period lookahead runs into an overflow.
///
/// Bins stay empty until stage `T - 2`, receive `alpha_i` of their volume
/// at `T - 1` and `(1 - alpha_i) + eps_i / E_i` at `T`. Waste has no value
/// (R = 0), bins start empty and the vehicle can take everything at once.
/// `eps_i` is in m^3.
pub fn worst_case_instance(
    n: usize,
    horizon: usize,
    alpha: &[f64],
    eps: &[f64],
) -> Result<(Instance, ScenarioTree), ModelError> {
    const E: f64 = 2.5;
    if n == 0 || alpha.len() != n || eps.len() != n {
        return Err(ModelError::Precondition("alpha and eps need one entry per bin".into()));
    }
    if horizon < 3 {
        return Err(ModelError::Precondition("horizon must be at least 3".into()));
    }
    for i in 0..n {
        if !(alpha[i] > 0.0 && alpha[i] < 1.0) {
            return Err(ModelError::Precondition(format!("alpha[{i}] = {} not in (0, 1)", alpha[i])));
        }
        if !(eps[i] > 0.0 && eps[i] <= alpha[i] * E) {
            return Err(ModelError::Precondition(format!(
                "eps[{i}] = {} not in (0, alpha * E]",
                eps[i]
            )));
        }
    }
    let mut params = Parameters::reference(horizon);
    params.selling_price_per_kg = 0.0;
    let bins: Vec<Bin> = (0..n)
        .map(|k| Bin {
            id: k + 1,
            capacity_m3: E,
            initial_fill: 0.0,
        })
        .collect();
    params.vehicle_capacity_kg = 2.0 * E * params.waste_density_kg_m3 * n as f64;
    let mut pts = vec![(0.0, 0.0)];
    pts.extend((0..n).map(|k| (1.0 + k as f64, 1.0)));
    let mut inst = Instance::new(
        format!("worst_case_{n}_{horizon}"),
        params,
        bins,
        DistanceMatrix::euclidean(&pts),
    )?;
    inst.coordinates = Some(pts);
    let rates: Vec<Vec<f64>> = (1..=horizon)
        .map(|t| {
            (0..n)
                .map(|i| {
                    if t == horizon - 1 {
                        alpha[i]
                    } else if t == horizon {
                        (1.0 - alpha[i]) + eps[i] / E
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let tree = ScenarioTree::single_path(&rates)?;
    Ok((inst, tree))
}
