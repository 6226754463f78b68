use std::time::Duration;

use stochwaste_core::instance::{synthetic_instance, Instance, Parameters};
use stochwaste_core::milp::{solve_milp, SolveStatus, SolverConfig};
use stochwaste_core::models::*;
use stochwaste_core::rollhorizon::*;
use stochwaste_core::scentree::{BranchingStructure, ScenarioTree};

fn tree(n: usize, structure: &[usize], seed: u64) -> ScenarioTree {
    let s = BranchingStructure::new(structure.to_vec()).unwrap();
    let mut k = seed;
    ScenarioTree::from_structure(
        &s,
        n,
        |stage, c| {
            let b = structure[stage - 1];
            if b == 1 {
                1.0
            } else if c == 0 {
                0.35
            } else {
                0.65 / (b - 1) as f64
            }
        },
        |_, _| {
            (0..n)
                .map(|_| {
                    k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((k >> 33) % 1000) as f64 / 3000.0
                })
                .collect()
        },
    )
    .unwrap()
}

fn instance(n: usize, horizon: usize, seed: u64, cost: f64) -> Instance {
    let mut p = Parameters::reference(horizon);
    p.vehicle_capacity_kg = 300.0;
    p.travel_cost_per_km = cost;
    synthetic_instance(n, p, 4.0, 0.0, seed).unwrap()
}

fn exact() -> SolverConfig {
    SolverConfig::default().with_rel_gap(1e-10)
}

#[test]
fn free_travel_rolling_horizon_is_optimal() {
    for seed in 0..3 {
        let inst = instance(3, 4, seed, 0.0);
        let t = tree(3, &[1, 2, 2, 1], seed + 5);
        let z = closed_form_profit_c0(&inst, &t).unwrap();
        for w in 1..=2 {
            let mut cfg = RhConfig::new(w, Variant::M);
            cfg.solver = exact();
            let r = run_rolling_horizon(&inst, &t, &cfg).unwrap();
            let got = r.profit.value().unwrap();
            assert!((got - z).abs() < 1e-6, "seed {seed} W={w}: {got} vs {z}");
        }
    }
}

#[test]
fn one_period_lookahead_fails_on_worst_case() {
    let (inst, t) = worst_case_instance(2, 5, &[0.5, 0.6], &[0.1, 0.2]).unwrap();
    let full = build_model_m(&inst, &t).unwrap();
    let s = solve_milp(&full.problem, &exact()).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!(s.objective.unwrap().is_finite());
    let r = run_rolling_horizon(&inst, &t, &RhConfig::new(1, Variant::M)).unwrap();
    assert_eq!(r.profit, Profit::NegativeInfinity);
    assert!(r.plan.is_none());
    let last = r.trace.steps.last().unwrap();
    assert_eq!((last.k, last.l, last.status), (4, 5, None));
}

#[test]
fn inventories_are_handed_on_exactly() {
    let inst = instance(3, 4, 11, 0.3);
    let t = tree(3, &[1, 2, 2, 2], 2);
    let mut cfg = RhConfig::new(1, Variant::M);
    cfg.solver = exact();
    let r = run_rolling_horizon(&inst, &t, &cfg).unwrap();
    let steps = &r.trace.steps;
    assert_eq!(steps.iter().map(|s| (s.k, s.l)).collect::<Vec<_>>(), vec![(1, 2), (2, 3), (3, 4)]);
    for pair in steps.windows(2) {
        for (node, inv) in &pair[1].root_inventory_kg {
            let stored = pair[0].stored.iter().find(|s| s.node == *node).unwrap();
            assert_eq!(&stored.inventory_kg, inv);
        }
        assert_eq!(pair[1].root_inventory_kg.len(), pair[0].stored.len());
    }
    let data = r.data.unwrap();
    assert_eq!(data.arcs.len(), 3);
    let plan = r.plan.unwrap();
    assert!((plan.kpis.profit - r.profit.value().unwrap()).abs() < 1e-9);
}

#[test]
fn heuristic_never_beats_the_optimum() {
    for seed in 0..2 {
        let inst = instance(3, 4, seed + 20, 0.5);
        let t = tree(3, &[1, 2, 2, 1], seed);
        let full = build_model_m(&inst, &t).unwrap();
        let z = solve_milp(&full.problem, &exact()).unwrap().objective.unwrap();
        for w in 1..=2 {
            let mut cfg = RhConfig::new(w, Variant::M);
            cfg.solver = exact();
            if let Some(rh) = run_rolling_horizon(&inst, &t, &cfg).unwrap().profit.value() {
                assert!(rh <= z + 1e-6, "W={w}: {rh} > {z}");
            }
        }
    }
}

#[test]
fn window_must_leave_a_tail() {
    let inst = instance(2, 4, 0, 0.0);
    let t = tree(2, &[1, 2, 1, 1], 0);
    assert!(matches!(
        run_rolling_horizon(&inst, &t, &RhConfig::new(3, Variant::M)),
        Err(RhError::Window { .. })
    ));
    assert!(run_rolling_horizon(&inst, &t, &RhConfig::new(0, Variant::M)).is_err());
}

#[test]
fn time_limit_is_split_over_subproblems() {
    let inst = instance(2, 4, 3, 0.2);
    let t = tree(2, &[1, 2, 2, 1], 1);
    let mut cfg = RhConfig::new(1, Variant::M);
    cfg.time_limit = Some(Duration::from_secs(30));
    let r = run_rolling_horizon(&inst, &t, &cfg).unwrap();
    let first = &r.trace.steps[0];
    assert_eq!(first.budget_s, Some(10.0));
    for pair in r.trace.steps.windows(2) {
        let want = 10.0 + pair[0].carry_s.unwrap();
        assert!((pair[1].budget_s.unwrap() - want).abs() < 1e-9);
    }
    assert!(r.trace.total_seconds() <= 30.0);
}
