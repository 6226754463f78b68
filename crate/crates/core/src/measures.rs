//! Value-of-information and solution-quality measures for the stochastic
//! collection model: wait-and-see (EVPI), the expected-value solution and
//! its value when imposed on the tree (VSS), the skeleton test (variables
//! that are zero in the EV plan stay zero) and the upgradeability test (the
//! EV plan is a lower bound).

use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use stochwaste_milp::{solve_milp, MilpError, SolveStatus, SolverConfig, VarId};
use thiserror::Error;

use crate::instance::Instance;
use crate::models::{build_full, BuildOptions, BuiltModel, ModelError, Variant};
use crate::scentree::ScenarioTree;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("the recourse problem is infeasible")]
    RecourseInfeasible,
    #[error("{problem}: solver stopped without a feasible solution ({status:?})")]
    NoSolution { problem: String, status: SolveStatus },
    #[error("stage {t} out of range 1..={max}")]
    Stage { t: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Milp(#[from] MilpError),
}

/// Optimal value of an auxiliary problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MeasureValue {
    Value(f64),
    Infeasible,
    /// The EV problem was infeasible, so there is no plan to impose.
    Unavailable,
}

impl MeasureValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            MeasureValue::Value(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for MeasureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureValue::Value(v) => write!(f, "{v:.6}"),
            MeasureValue::Infeasible => f.write_str("infeasible"),
            MeasureValue::Unavailable => f.write_str("n/a"),
        }
    }
}

/// A relative measure `(a - b) / RP`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Percentage {
    /// As a fraction (0.25 is 25%).
    Finite(f64),
    Infinite,
    /// RP <= 0: the ratio is refused and the absolute difference kept.
    Undefined { difference: f64 },
    Unavailable,
}

impl Percentage {
    pub fn fraction(&self) -> Option<f64> {
        match self {
            Percentage::Finite(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for Percentage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Percentage::Finite(v) => write!(f, "{:.4}%", 100.0 * v),
            Percentage::Infinite => f.write_str("∞"),
            Percentage::Undefined { difference } => write!(f, "undefined (RP<=0, diff {difference:.6})"),
            Percentage::Unavailable => f.write_str("n/a"),
        }
    }
}

/// `(RP - v) / RP` for a restricted problem with value `v`.
pub fn loss_percentage(rp: f64, v: MeasureValue) -> Percentage {
    match v {
        MeasureValue::Infeasible => Percentage::Infinite,
        MeasureValue::Unavailable => Percentage::Unavailable,
        MeasureValue::Value(v) if rp <= 0.0 => Percentage::Undefined { difference: rp - v },
        MeasureValue::Value(v) => Percentage::Finite((rp - v) / rp),
    }
}

/// `(WS - RP) / RP`.
pub fn evpi_percentage(rp: f64, ws: f64) -> Percentage {
    if rp <= 0.0 {
        Percentage::Undefined { difference: ws - rp }
    } else {
        Percentage::Finite((ws - rp) / rp)
    }
}

#[derive(Debug, Clone)]
pub struct MeasureConfig {
    pub variant: Variant,
    pub build: BuildOptions,
    pub solver: SolverConfig,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            variant: Variant::M,
            build: BuildOptions::default(),
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioValue {
    pub leaf: usize,
    pub probability: f64,
    pub value: MeasureValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WsResult {
    /// Probability-weighted value over the feasible scenarios.
    pub value: f64,
    pub scenarios: Vec<ScenarioValue>,
    /// Number of infeasible scenarios left out of `value`.
    pub excluded: usize,
}

/// Routing of the EV solution, rounded at 0.5, per decision stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvSolution {
    pub value: f64,
    /// `x[s - 1][i * n_vertices + j]`, `false` for missing arcs.
    pub x: Vec<Vec<bool>>,
    pub y: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Restriction {
    /// EEV: routing fixed to the EV plan.
    Fix,
    /// MESSV: routing that is zero in the EV plan stays zero.
    Skeleton,
    /// MEIV: the EV plan is a lower bound.
    Upgrade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMeasures {
    pub t: usize,
    pub eev: MeasureValue,
    pub messv: MeasureValue,
    pub meiv: MeasureValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub rp: f64,
    pub ev: MeasureValue,
    pub ws: WsResult,
    pub stages: Vec<StageMeasures>,
    /// Every solve finished with proven optimality.
    pub exact: bool,
}

impl MeasureReport {
    pub fn evpi(&self) -> Percentage {
        evpi_percentage(self.rp, self.ws.value)
    }

    pub fn vss(&self, t: usize) -> Percentage {
        loss_percentage(self.rp, self.stages[t - 1].eev)
    }

    pub fn mluss(&self, t: usize) -> Percentage {
        loss_percentage(self.rp, self.stages[t - 1].messv)
    }

    pub fn mluds(&self, t: usize) -> Percentage {
        loss_percentage(self.rp, self.stages[t - 1].meiv)
    }

    /// Two columns, `measure` and `value`, tab separated.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("measure\tvalue\n");
        let _ = writeln!(s, "RP\t{:.6}", self.rp);
        let _ = writeln!(s, "EV\t{}", self.ev);
        let _ = writeln!(s, "WS\t{:.6}", self.ws.value);
        if self.ws.excluded > 0 {
            let _ = writeln!(s, "WS_excluded_scenarios\t{}", self.ws.excluded);
        }
        let _ = writeln!(s, "%EVPI\t{}", self.evpi());
        for st in &self.stages {
            let t = st.t;
            let _ = writeln!(s, "EEV^{t}\t{}", st.eev);
            let _ = writeln!(s, "%VSS^{t}\t{}", self.vss(t));
            let _ = writeln!(s, "MESSV^{t}\t{}", st.messv);
            let _ = writeln!(s, "%MLUSS^{t}\t{}", self.mluss(t));
            let _ = writeln!(s, "MEIV^{t}\t{}", st.meiv);
            let _ = writeln!(s, "%MLUDS^{t}\t{}", self.mluds(t));
        }
        s
    }
}

struct Solved {
    value: MeasureValue,
    values: Option<Vec<f64>>,
    exact: bool,
}

fn solve(name: &str, model: &BuiltModel, cfg: &SolverConfig) -> Result<Solved, MeasureError> {
    let sol = solve_milp(&model.problem, cfg)?;
    match sol.status {
        SolveStatus::Infeasible => Ok(Solved {
            value: MeasureValue::Infeasible,
            values: None,
            exact: true,
        }),
        st if st.has_solution() => Ok(Solved {
            value: MeasureValue::Value(sol.objective.expect("incumbent")),
            values: sol.values,
            exact: st == SolveStatus::Optimal,
        }),
        status => Err(MeasureError::NoSolution {
            problem: name.to_string(),
            status,
        }),
    }
}

/// Values within `1e-9 * max(1, |RP|)` of RP are taken as RP, so that
/// restrictions that do not bind report an exact zero loss.
fn snap(rp: f64, v: MeasureValue) -> MeasureValue {
    match v {
        MeasureValue::Value(x) if (x - rp).abs() <= 1e-9 * rp.abs().max(1.0) => MeasureValue::Value(rp),
        other => other,
    }
}

pub fn compute_rp(instance: &Instance, tree: &ScenarioTree, cfg: &MeasureConfig) -> Result<f64, MeasureError> {
    let m = build_full(instance, tree, cfg.variant, cfg.build)?;
    match solve("RP", &m, &cfg.solver)?.value {
        MeasureValue::Value(v) => Ok(v),
        _ => Err(MeasureError::RecourseInfeasible),
    }
}

/// Probability-weighted optimum of the single-scenario problems.
pub fn compute_ws(instance: &Instance, tree: &ScenarioTree, cfg: &MeasureConfig) -> Result<WsResult, MeasureError> {
    Ok(ws_inner(instance, tree, cfg)?.0)
}

fn ws_inner(instance: &Instance, tree: &ScenarioTree, cfg: &MeasureConfig) -> Result<(WsResult, bool), MeasureError> {
    let mut scenarios = Vec::new();
    let mut value = 0.0;
    let mut excluded = 0;
    let mut exact = true;
    for &leaf in tree.leaves() {
        let path = tree.scenario_tree(leaf);
        let m = build_full(instance, &path, cfg.variant, cfg.build)?;
        let s = solve(&format!("WS scenario {leaf}"), &m, &cfg.solver)?;
        exact &= s.exact;
        let probability = tree.nodes[leaf].probability;
        match s.value {
            MeasureValue::Value(v) => value += probability * v,
            _ => excluded += 1,
        }
        scenarios.push(ScenarioValue {
            leaf,
            probability,
            value: s.value,
        });
    }
    Ok((
        WsResult {
            value,
            scenarios,
            excluded,
        },
        exact,
    ))
}

/// Solves the expected-value problem; `None` if it is infeasible.
pub fn compute_ev(instance: &Instance, tree: &ScenarioTree, cfg: &MeasureConfig) -> Result<Option<EvSolution>, MeasureError> {
    Ok(ev_inner(instance, tree, cfg)?.0)
}

fn ev_inner(
    instance: &Instance,
    tree: &ScenarioTree,
    cfg: &MeasureConfig,
) -> Result<(Option<EvSolution>, bool), MeasureError> {
    let ev_tree = tree.expected_value_tree();
    let m = build_full(instance, &ev_tree, cfg.variant, cfg.build)?;
    let s = solve("EV", &m, &cfg.solver)?;
    let (MeasureValue::Value(value), Some(values)) = (s.value, s.values) else {
        return Ok((None, s.exact));
    };
    let on = |v: &VarId| values[v.0] > 0.5;
    let x = m.layout.x.iter().map(|xs| xs.iter().map(|v| v.as_ref().is_some_and(on)).collect()).collect();
    let y = m.layout.y.iter().map(|ys| ys.iter().map(on).collect()).collect();
    Ok((Some(EvSolution { value, x, y }), s.exact))
}

/// Applies `rule` to the routing of stages `1..=t` of a model built on the
/// full tree. Both models share the routing layout, which depends only on
/// the instance, the variant and the horizon.
pub fn restrict(model: &mut BuiltModel, ev: &EvSolution, t: usize, rule: Restriction) {
    let layout = &model.layout;
    let vars = &mut model.problem.variables;
    for s in 1..=t {
        let pairs = layout.x[s - 1]
            .iter()
            .zip(&ev.x[s - 1])
            .filter_map(|(v, &on)| v.map(|v| (v, on)))
            .chain(layout.y[s - 1].iter().copied().zip(ev.y[s - 1].iter().copied()));
        for (v, on) in pairs {
            let var = &mut vars[v.0];
            let val = if on { 1.0 } else { 0.0 };
            match rule {
                Restriction::Fix => {
                    var.lower = val;
                    var.upper = val;
                }
                Restriction::Skeleton if !on => var.upper = 0.0,
                Restriction::Upgrade if on => var.lower = 1.0,
                _ => {}
            }
        }
    }
}

/// Optimal value of the tree model with the EV routing imposed through stage `t`.
pub fn compute_restricted(
    instance: &Instance,
    tree: &ScenarioTree,
    ev: &EvSolution,
    t: usize,
    rule: Restriction,
    cfg: &MeasureConfig,
) -> Result<MeasureValue, MeasureError> {
    Ok(restricted_inner(instance, tree, ev, t, rule, cfg)?.0)
}

fn restricted_inner(
    instance: &Instance,
    tree: &ScenarioTree,
    ev: &EvSolution,
    t: usize,
    rule: Restriction,
    cfg: &MeasureConfig,
) -> Result<(MeasureValue, bool), MeasureError> {
    let max = tree.num_stages() - 1;
    if t == 0 || t > max {
        return Err(MeasureError::Stage { t, max });
    }
    let mut m = build_full(instance, tree, cfg.variant, cfg.build)?;
    restrict(&mut m, ev, t, rule);
    let s = solve(&format!("{rule:?} t={t}"), &m, &cfg.solver)?;
    Ok((s.value, s.exact))
}

/// RP, EV, WS and, for every decision stage, EEV, MESSV and MEIV.
pub fn compute_all(instance: &Instance, tree: &ScenarioTree, cfg: &MeasureConfig) -> Result<MeasureReport, MeasureError> {
    let rp_model = build_full(instance, tree, cfg.variant, cfg.build)?;
    let rp_sol = solve("RP", &rp_model, &cfg.solver)?;
    let MeasureValue::Value(rp) = rp_sol.value else {
        return Err(MeasureError::RecourseInfeasible);
    };
    let mut exact = rp_sol.exact;
    let (ws, ws_exact) = ws_inner(instance, tree, cfg)?;
    exact &= ws_exact;
    let (ev, ev_exact) = ev_inner(instance, tree, cfg)?;
    exact &= ev_exact;
    let mut stages = Vec::new();
    for t in 1..tree.num_stages() {
        let mut row = [MeasureValue::Unavailable; 3];
        if let Some(ev) = &ev {
            for (slot, rule) in row.iter_mut().zip([Restriction::Fix, Restriction::Skeleton, Restriction::Upgrade]) {
                let (v, e) = restricted_inner(instance, tree, ev, t, rule, cfg)?;
                exact &= e;
                *slot = snap(rp, v);
            }
        }
        stages.push(StageMeasures {
            t,
            eev: row[0],
            messv: row[1],
            meiv: row[2],
        });
    }
    let ws = WsResult {
        value: snap(rp, MeasureValue::Value(ws.value)).value().expect("finite"),
        ..ws
    };
    Ok(MeasureReport {
        rp,
        ev: ev.map_or(MeasureValue::Infeasible, |e| MeasureValue::Value(e.value)),
        ws,
        stages,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentages_follow_the_sign_rules() {
        assert_eq!(loss_percentage(200.0, MeasureValue::Value(150.0)), Percentage::Finite(0.25));
        assert_eq!(loss_percentage(200.0, MeasureValue::Infeasible), Percentage::Infinite);
        assert_eq!(
            loss_percentage(-5.0, MeasureValue::Value(-7.0)),
            Percentage::Undefined { difference: 2.0 }
        );
        assert_eq!(loss_percentage(0.0, MeasureValue::Infeasible), Percentage::Infinite);
        assert_eq!(evpi_percentage(100.0, 188.0).fraction(), Some(0.88));
        assert_eq!(evpi_percentage(0.0, 3.0), Percentage::Undefined { difference: 3.0 });
    }

    #[test]
    fn negative_restricted_value_gives_loss_above_one() {
        let p = loss_percentage(10.0, MeasureValue::Value(-5.0));
        assert_eq!(p, Percentage::Finite(1.5));
    }

    #[test]
    fn snapping_is_relative_to_rp() {
        assert_eq!(snap(1000.0, MeasureValue::Value(1000.0 - 1e-7)), MeasureValue::Value(1000.0));
        assert_eq!(snap(1000.0, MeasureValue::Value(1000.0 - 1e-5)), MeasureValue::Value(1000.0 - 1e-5));
        assert_eq!(snap(1.0, MeasureValue::Infeasible), MeasureValue::Infeasible);
    }

    #[test]
    fn infinity_is_rendered_literally() {
        assert_eq!(Percentage::Infinite.to_string(), "∞");
        assert_eq!(Percentage::Finite(0.0915).to_string(), "9.1500%");
    }
}
