use stochwaste_core::instance::{synthetic_instance, Bin, DistanceMatrix, Instance, Parameters};
use stochwaste_core::measures::*;
use stochwaste_core::milp::SolverConfig;
use stochwaste_core::models::*;
use stochwaste_core::scentree::{BranchingStructure, ScenarioTree};

fn cfg() -> MeasureConfig {
    MeasureConfig {
        solver: SolverConfig::default().with_rel_gap(1e-10),
        ..MeasureConfig::default()
    }
}

fn one_bin(init: f64, dist_km: f64, horizon: usize, price: f64) -> Instance {
    let mut p = Parameters::reference(horizon);
    p.selling_price_per_kg = price;
    let bins = vec![Bin {
        id: 1,
        capacity_m3: 2.5,
        initial_fill: init,
    }];
    Instance::new("one", p, bins, DistanceMatrix::euclidean(&[(0.0, 0.0), (dist_km, 0.0)])).unwrap()
}

fn random_tree(n: usize, structure: &[usize], seed: u64) -> ScenarioTree {
    let s = BranchingStructure::new(structure.to_vec()).unwrap();
    let mut k = seed;
    ScenarioTree::from_structure(
        &s,
        n,
        |stage, c| match structure[stage - 1] {
            2 => [0.3, 0.7][c],
            b => 1.0 / b as f64,
        },
        |_, _| {
            (0..n)
                .map(|_| {
                    k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((k >> 33) % 1000) as f64 / 2500.0
                })
                .collect()
        },
    )
    .unwrap()
}

#[test]
fn single_scenario_measures_are_zero() {
    let mut p = Parameters::reference(3);
    p.vehicle_capacity_kg = 300.0;
    let inst = synthetic_instance(2, p, 3.0, 0.0, 4).unwrap();
    let tree = ScenarioTree::single_path(&[vec![0.0, 0.0], vec![0.3, 0.2], vec![0.25, 0.4]]).unwrap();
    let r = compute_all(&inst, &tree, &cfg()).unwrap();
    assert!(r.rp > 0.0);
    assert_eq!(r.ws.value, r.rp);
    assert_eq!(r.ev, MeasureValue::Value(r.rp));
    assert_eq!(r.evpi(), Percentage::Finite(0.0));
    for t in 1..=2 {
        assert_eq!(r.vss(t), Percentage::Finite(0.0));
        assert_eq!(r.mluss(t), Percentage::Finite(0.0));
        assert_eq!(r.mluds(t), Percentage::Finite(0.0));
    }
}

#[test]
fn restrictions_never_beat_the_recourse_problem() {
    for seed in 0..3 {
        let mut p = Parameters::reference(3);
        p.vehicle_capacity_kg = 300.0;
        p.travel_cost_per_km = 0.5;
        let inst = synthetic_instance(2, p, 3.0, 0.0, seed).unwrap();
        let tree = random_tree(2, &[1, 2, 2], seed + 3);
        let r = compute_all(&inst, &tree, &cfg()).unwrap();
        assert!(r.ws.value >= r.rp - 1e-6, "WS {} < RP {}", r.ws.value, r.rp);
        let mut last = [f64::NEG_INFINITY; 3];
        for st in &r.stages {
            for (k, v) in [st.eev, st.messv, st.meiv].into_iter().enumerate() {
                if let Some(v) = v.value() {
                    assert!(v <= r.rp + 1e-6, "seed {seed} t={} measure {k}: {v} > {}", st.t, r.rp);
                }
            }
            if let Some(f) = r.vss(st.t).fraction() {
                assert!(f >= last[0] - 1e-9);
                last[0] = f;
            }
        }
    }
}

#[test]
fn free_travel_wait_and_see_is_the_closed_form() {
    let mut p = Parameters::reference(3);
    p.travel_cost_per_km = 0.0;
    let inst = synthetic_instance(2, p, 3.0, 0.0, 8).unwrap();
    let tree = random_tree(2, &[1, 3, 2], 1);
    let ws = compute_ws(&inst, &tree, &cfg()).unwrap();
    let z = closed_form_profit_c0(&inst, &tree).unwrap();
    assert_eq!(ws.excluded, 0);
    assert!((ws.value - z).abs() < 1e-6, "{} vs {z}", ws.value);
}

/// One bin at 30%; day 2 adds 20%; day 3 adds 10% or 70%. The EV plan
/// (40% on day 3) never visits, but the 70% branch needs a visit on day 2.
fn forced_visit() -> (Instance, ScenarioTree) {
    let inst = one_bin(0.3, 2.0, 3, 0.0);
    let s = BranchingStructure::new(vec![1, 1, 2]).unwrap();
    let tree = ScenarioTree::from_structure(
        &s,
        1,
        |stage, _| if stage == 3 { 0.5 } else { 1.0 },
        |stage, path| match stage {
            2 => vec![0.2],
            3 => vec![[0.1, 0.7][path[1]]],
            _ => vec![0.0],
        },
    )
    .unwrap();
    (inst, tree)
}

#[test]
fn skipped_collection_makes_the_ev_plan_infeasible() {
    let (inst, tree) = forced_visit();
    let ev = compute_ev(&inst, &tree, &cfg()).unwrap().unwrap();
    assert!(ev.y.iter().flatten().all(|&v| !v));
    let c = cfg();
    assert_eq!(compute_restricted(&inst, &tree, &ev, 1, Restriction::Fix, &c).unwrap(), MeasureValue::Infeasible);
    assert_eq!(compute_restricted(&inst, &tree, &ev, 1, Restriction::Skeleton, &c).unwrap(), MeasureValue::Infeasible);
    let rp = compute_rp(&inst, &tree, &c).unwrap();
    assert_eq!(compute_restricted(&inst, &tree, &ev, 1, Restriction::Upgrade, &c).unwrap(), MeasureValue::Value(rp));
    let r = compute_all(&inst, &tree, &c).unwrap();
    assert_eq!(r.vss(1), Percentage::Infinite);
    assert_eq!(r.mluss(1), Percentage::Infinite);
    assert!(r.to_tsv().contains("%VSS^1\t∞"));
}

#[test]
fn imposed_double_collection_costs_more_than_it_earns() {
    let inst = one_bin(0.5, 5.0, 3, 0.3);
    let tree = ScenarioTree::single_path(&[vec![0.0], vec![0.1], vec![0.1]]).unwrap();
    let c = cfg();
    let rp = compute_rp(&inst, &tree, &c).unwrap();
    let m = build_model_m(&inst, &tree).unwrap();
    let nv = m.layout.n_vertices;
    let mut x = vec![vec![false; nv * nv]; 2];
    for xs in &mut x {
        xs[1] = true;
        xs[nv] = true;
    }
    let ev = EvSolution {
        value: 0.0,
        x,
        y: vec![vec![true]; 2],
    };
    let v = compute_restricted(&inst, &tree, &ev, 2, Restriction::Upgrade, &c).unwrap().value().unwrap();
    assert!(v < 0.0, "{v}");
    assert!(rp >= 0.0);
    if rp > 0.0 {
        assert!(loss_percentage(rp, MeasureValue::Value(v)).fraction().unwrap() > 1.0);
    }
}

#[test]
fn stage_out_of_range_is_an_error() {
    let (inst, tree) = forced_visit();
    let ev = compute_ev(&inst, &tree, &cfg()).unwrap().unwrap();
    assert!(compute_restricted(&inst, &tree, &ev, 3, Restriction::Fix, &cfg()).is_err());
}
