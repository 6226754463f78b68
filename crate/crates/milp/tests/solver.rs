use proptest::prelude::*;
use stochwaste_milp::*;

#[derive(Debug, Clone)]
struct Spec {
    ints: Vec<(i32, i32)>,
    conts: Vec<f64>,
    rows: Vec<(Vec<i32>, u8, i32)>,
    obj: Vec<i32>,
}

fn spec() -> impl Strategy<Value = Spec> {
    (1usize..6, 0usize..3, 1usize..5).prop_flat_map(|(ni, nc, nr)| {
        let n = ni + nc;
        (
            prop::collection::vec((0i32..2, 0i32..3), ni),
            prop::collection::vec(0.5f64..4.0, nc),
            prop::collection::vec((prop::collection::vec(-4i32..5, n), 0u8..3, -3i32..8), nr),
            prop::collection::vec(-5i32..6, n),
        )
            .prop_map(|(ints, conts, rows, obj)| Spec {
                ints: ints.into_iter().map(|(a, w)| (a, a + w)).collect(),
                conts,
                rows,
                obj,
            })
    })
}

fn build(s: &Spec) -> MilpProblem {
    let mut p = MilpProblem::new("rand");
    let mut vars = Vec::new();
    for (k, &(l, h)) in s.ints.iter().enumerate() {
        vars.push(p.add_var(format!("i{k}"), l as f64, h as f64, true));
    }
    for (k, &u) in s.conts.iter().enumerate() {
        vars.push(p.add_continuous(format!("c{k}"), 0.0, u));
    }
    for (r, (coef, sense, rhs)) in s.rows.iter().enumerate() {
        let sense = match sense {
            0 => Sense::Le,
            1 => Sense::Ge,
            _ => Sense::Eq,
        };
        let coeffs = vars.iter().zip(coef).filter(|(_, &a)| a != 0).map(|(&v, &a)| (v, a as f64)).collect();
        p.add_constraint(format!("r{r}"), coeffs, sense, *rhs as f64);
    }
    p.set_objective(vars.iter().zip(&s.obj).map(|(&v, &a)| (v, a as f64)).collect());
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn branch_and_bound_matches_enumeration(s in spec()) {
        let p = build(&s);
        let cfg = SolverConfig::default().with_rel_gap(1e-9);
        let bb = solve_milp(&p, &cfg).unwrap();
        match enumerate_oracle(&p, DEFAULT_MAX_INTEGERS).unwrap() {
            OracleOutcome::Infeasible => prop_assert_eq!(bb.status, SolveStatus::Infeasible),
            OracleOutcome::Optimal { objective, .. } => {
                prop_assert_eq!(bb.status, SolveStatus::Optimal);
                let got = bb.objective.unwrap();
                prop_assert!((got - objective).abs() <= 1e-6 * (1.0 + objective.abs()), "bb {} oracle {}", got, objective);
                let (rv, iv) = p.max_violation(bb.values.as_ref().unwrap());
                prop_assert!(rv <= 1e-6 && iv <= 1e-9);
            }
            OracleOutcome::Unbounded => prop_assert!(false, "bounded generator"),
        }
    }

    #[test]
    fn mps_roundtrip_preserves_optimum(s in spec()) {
        let p = build(&s);
        let (text, map) = export_mps(&p);
        prop_assert_eq!(map.columns.len(), p.num_vars());
        let q = parse_mps(&text).unwrap();
        prop_assert_eq!(q.num_vars(), p.num_vars());
        prop_assert_eq!(q.num_rows(), p.num_rows());
        prop_assert_eq!(q.num_integer(), p.num_integer());
        let cfg = SolverConfig::default().with_rel_gap(1e-9);
        let a = solve_milp(&p, &cfg).unwrap();
        let b = solve_milp(&q, &cfg).unwrap();
        prop_assert_eq!(a.status, b.status);
        if let (Some(x), Some(y)) = (a.objective, b.objective) {
            prop_assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn imported_solution_is_revalidated() {
    let mut p = MilpProblem::new("imp");
    let a = p.add_binary("open_a");
    let b = p.add_binary("open_b");
    let x = p.add_continuous("flow", 0.0, 10.0);
    p.add_constraint("link", vec![(x, 1.0), (a, -4.0), (b, -4.0)], Sense::Le, 0.0);
    p.set_objective(vec![(x, 1.0), (a, -1.0), (b, -1.5)]);
    let (_, map) = export_mps(&p);

    let good = import_solution(&p, &map, "open_a 1\nC0000002 1\nflow 8\n").unwrap();
    assert!(good.is_feasible(1e-9));
    assert!((good.objective - 5.5).abs() < 1e-12);

    let bad = import_solution(&p, &map, "open_a 1\nflow 8\n").unwrap();
    assert!(!bad.is_feasible(1e-9));
    assert!((bad.row_violation - 4.0).abs() < 1e-12);

    let err = import_solution(&p, &map, "nope 1\n").unwrap_err();
    assert!(matches!(err, MilpError::UnknownVariable(_)));
}

#[test]
fn mps_layout() {
    let mut p = MilpProblem::new("lay out");
    let a = p.add_binary("a_long_variable_name");
    let x = p.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY);
    p.add_constraint("row", vec![(a, 1.0), (x, 1.0)], Sense::Ge, 0.5);
    p.set_objective(vec![(a, 2.0)]);
    let (text, map) = export_mps(&p);
    assert!(text.contains("'INTORG'") && text.contains("'INTEND'"));
    assert!(text.contains(" FR BND"));
    assert!(text.contains("NAME          layout"));
    assert_eq!(map.columns[0], ("C0000001".to_string(), "a_long_variable_name".to_string()));
    // objective negated in the file
    let obj_line = text.lines().find(|l| l.contains("C0000001") && l.contains("OBJ")).unwrap();
    assert!(obj_line.trim_end().ends_with("-2"));
    for l in text.lines().filter(|l| l.starts_with(' ')) {
        for tok in l.split_whitespace() {
            if tok.starts_with('C') || tok.starts_with('R') {
                assert!(tok.len() <= 8, "{tok}");
            }
        }
    }
}

#[test]
fn time_limit_reports_gap() {
    // a 30-item knapsack with an impossible zero time budget
    let mut p = MilpProblem::new("tl");
    let mut row = Vec::new();
    let mut obj = Vec::new();
    for i in 0..30 {
        let v = p.add_binary(format!("b{i}"));
        row.push((v, (7 + (i * 13) % 17) as f64));
        obj.push((v, (5 + (i * 11) % 19) as f64));
    }
    p.add_constraint("cap", row, Sense::Le, 97.0);
    p.set_objective(obj);
    let cfg = SolverConfig::default().with_time_limit(std::time::Duration::ZERO);
    let s = solve_milp(&p, &cfg).unwrap();
    assert!(matches!(s.status, SolveStatus::TimeLimit { .. }), "{:?}", s.status);
    let full = solve_milp(&p, &SolverConfig::default()).unwrap();
    assert_eq!(full.status, SolveStatus::Optimal);
    assert!(full.bound >= full.objective.unwrap() - 1e-9);
}
