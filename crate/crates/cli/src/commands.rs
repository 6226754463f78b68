use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use serde_json::json;
use stochwaste_core::instance::{
    draw_instance, histories_to_csv, parse_histories, synthetic_histories, synthetic_instance, FillHistory, Instance,
    Parameters,
};
use stochwaste_core::measures::{compute_all, MeasureConfig, MeasureReport, MeasureValue, Percentage};
use stochwaste_core::milp::{export_mps, relative_gap, solve_milp, MilpSolution, SolveStatus, SolverConfig};
use stochwaste_core::models::{
    build_full, decode_solution, BuildOptions, BuiltModel, CollectionPlan, ModelSize, PlanData, Profit,
};
use stochwaste_core::rollhorizon::{run_rolling_horizon, RhConfig, RhError};
use stochwaste_core::scentree::{
    fit_tree, stability_batch, validate_tree, BranchingStructure, ScenarioTree, StabilityObservation, TrajectoryBank,
};

use crate::manifest::Run;
use crate::{Cli, Command, Global, InstanceArgs, ModelArgs};

pub fn run(cli: &Cli) -> Result<bool> {
    let g = &cli.global;
    match &cli.command {
        Command::GenTree {
            histories,
            structure,
            iterations,
            instance,
        } => gen_tree(g, histories, structure, *iterations, instance.as_deref()),
        Command::Solve {
            inst,
            tree,
            model,
            export_mps,
        } => solve(g, inst, tree, model, export_mps.as_deref()),
        Command::Roll {
            inst,
            tree,
            model,
            windows,
            baseline_rp,
            baseline_seconds,
        } => roll(g, inst, tree, model, windows, *baseline_rp, *baseline_seconds),
        Command::Measures {
            instance,
            tree,
            batch_dir,
            model,
        } => match batch_dir {
            Some(dir) => measures_batch(g, dir, tree.as_deref(), model),
            None => {
                let tree = tree.as_deref().context("--tree is required with --instance")?;
                measures_single(g, instance.as_deref().expect("clap enforces"), tree, model)
            }
        },
        Command::Stability {
            inst,
            histories,
            structures,
            runs,
            iterations,
            model,
        } => stability(g, inst, histories, structures, *runs, *iterations, model),
        Command::ExportMps { inst, tree, model } => export(g, inst, tree, model),
        Command::DrawInstance {
            master,
            synthetic,
            horizon,
            history_days,
            bins,
            draws,
        } => draw(g, master.as_deref(), *synthetic, *horizon, *history_days, *bins, *draws),
    }
}

fn config_json(g: &Global, model: Option<&ModelArgs>) -> serde_json::Value {
    let mut v = json!({
        "time_limit_s": g.time_limit,
        "variant": g.variant.to_string(),
    });
    if let Some(m) = model {
        v["tighten_big_m"] = json!(m.tighten_big_m);
        v["prune_zero_prob"] = json!(m.prune_zero_prob);
        v["gap"] = json!(m.gap);
    }
    v
}

fn solver_config(g: &Global, m: &ModelArgs) -> SolverConfig {
    let mut cfg = SolverConfig::default().with_rel_gap(m.gap);
    if let Some(t) = g.time_limit {
        cfg = cfg.with_time_limit(Duration::from_secs_f64(t));
    }
    cfg
}

fn build_options(m: &ModelArgs) -> BuildOptions {
    BuildOptions {
        prune_zero_prob: m.prune_zero_prob,
        tighten_big_m: m.tighten_big_m,
    }
}

fn read_instance(run: &mut Run, path: &Path) -> Result<Instance> {
    let text = run.read(path)?;
    let mut inst = Instance::from_json(&text, &path.display().to_string())?;
    if inst.name.is_empty() {
        inst.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    for w in inst.warnings() {
        log::warn!("{}: {w}", path.display());
    }
    Ok(inst)
}

fn read_tree(run: &mut Run, path: &Path) -> Result<ScenarioTree> {
    let text = run.read(path)?;
    ScenarioTree::from_json(&text).with_context(|| format!("reading tree {}", path.display()))
}

/// Instance with overrides applied and its horizon set to the tree's.
fn load_pair(run: &mut Run, args: &InstanceArgs, tree_path: &Path) -> Result<(Instance, ScenarioTree)> {
    let mut inst = read_instance(run, &args.instance)?;
    let tree = read_tree(run, tree_path)?;
    let p = &mut inst.parameters;
    if let Some(v) = args.travel_cost {
        p.travel_cost_per_km = v;
    }
    if let Some(v) = args.price {
        p.selling_price_per_kg = v;
    }
    if let Some(v) = args.capacity {
        p.vehicle_capacity_kg = v;
    }
    align_horizon(&mut inst, &tree);
    inst.validate()?;
    Ok((inst, tree))
}

fn align_horizon(inst: &mut Instance, tree: &ScenarioTree) {
    if inst.parameters.horizon != tree.num_stages() {
        log::info!(
            "horizon {} of {} replaced by the tree's {} stages",
            inst.parameters.horizon,
            inst.name,
            tree.num_stages()
        );
        inst.parameters.horizon = tree.num_stages();
    }
}

fn read_histories(run: &mut Run, path: &Path) -> Result<Vec<FillHistory>> {
    let text = run.read(path)?;
    Ok(parse_histories(&text, &path.display().to_string())?)
}

/// Histories in the order of the instance's bin ids.
fn histories_for(histories: &[FillHistory], inst: &Instance) -> Result<Vec<FillHistory>> {
    inst.bins
        .iter()
        .map(|b| {
            histories
                .iter()
                .find(|h| h.bin_id == b.id)
                .cloned()
                .with_context(|| format!("no history for bin {}", b.id))
        })
        .collect()
}

fn gen_tree(g: &Global, histories: &Path, structure: &str, iterations: usize, instance: Option<&Path>) -> Result<bool> {
    let mut run = Run::new(
        "gen-tree",
        &g.out_dir,
        g.seed,
        json!({"structure": structure, "iterations": iterations}),
    )?;
    let structure: BranchingStructure = structure.parse()?;
    let mut hist = read_histories(&mut run, histories)?;
    if let Some(p) = instance {
        let inst = read_instance(&mut run, p)?;
        hist = histories_for(&hist, &inst)?;
    }
    let bank = TrajectoryBank::from_histories(&hist, structure.stages())?;
    let (tree, report) = fit_tree(&bank, &structure, iterations, g.seed)?;
    let diag = validate_tree(&tree);
    run.write("tree.json", &tree.to_json())?;
    let mut d = String::new();
    let _ = writeln!(d, "structure\t{structure}");
    let _ = writeln!(d, "scenarios\t{}", tree.num_scenarios());
    let _ = writeln!(d, "nodes\t{}", tree.num_nodes());
    let _ = writeln!(d, "bank_trajectories\t{}", bank.len());
    let _ = writeln!(d, "iterations\t{}", report.iterations);
    let _ = writeln!(d, "unvisited_branches\t{}", report.unvisited_branches);
    let _ = writeln!(d, "uniform_resets\t{}", report.uniform_resets);
    for (t, m) in diag.stage_mass.iter().enumerate() {
        let _ = writeln!(d, "stage_mass_{}\t{m}", t + 1);
    }
    for v in &diag.violations {
        let _ = writeln!(d, "ERROR\t{v}");
        run.error(format!("tree violation: {v}"));
    }
    run.write("diagnostics.txt", &d)?;
    print!("{d}");
    run.finish()
}

fn status_line(s: &SolveStatus) -> String {
    match s {
        SolveStatus::Optimal => "optimal".into(),
        SolveStatus::Feasible { gap } => format!("feasible (node limit, gap {gap:.3e})"),
        SolveStatus::Infeasible => "infeasible".into(),
        SolveStatus::Unbounded => "unbounded".into(),
        SolveStatus::TimeLimit { gap } => format!("time limit (gap {gap:.3e})"),
    }
}

fn kpi_block(plan: &CollectionPlan) -> String {
    let k = &plan.kpis;
    let mut s = String::new();
    let _ = writeln!(s, "profit\t{}", k.profit);
    let _ = writeln!(s, "collected_kg\t{}", k.collected_kg);
    let _ = writeln!(s, "distance_km\t{}", k.distance_km);
    let _ = writeln!(
        s,
        "kg_per_km\t{}",
        k.kg_per_km.map_or("n/a".to_string(), |v| v.to_string())
    );
    s
}

/// `day, visited, distance_km, expected_collected_kg`.
fn plan_series(plan: &CollectionPlan) -> String {
    let mut s = String::from("day,visited,distance_km,expected_collected_kg\n");
    for d in &plan.days {
        let kg: f64 = plan
            .nodes
            .iter()
            .filter(|n| n.stage == d.day)
            .map(|n| n.probability * n.collected_kg.iter().sum::<f64>())
            .sum();
        let _ = writeln!(s, "{},{},{},{}", d.day, d.visited.len(), d.distance_km, kg);
    }
    s
}

fn size_block(m: &BuiltModel) -> String {
    let sz = ModelSize::of(&m.problem);
    format!(
        "binaries\t{}\ncontinuous\t{}\nequalities\t{}\ninequalities\t{}\n",
        sz.binaries, sz.continuous, sz.equalities, sz.inequalities
    )
}

fn write_mps(run: &mut Run, m: &BuiltModel, path: &Path) -> Result<()> {
    let (text, names) = export_mps(&m.problem);
    let name = path.to_string_lossy().into_owned();
    run.write(&name, &text)?;
    run.write(&format!("{name}.names"), &names.to_text())?;
    Ok(())
}

fn solve(g: &Global, args: &InstanceArgs, tree: &Path, model: &ModelArgs, mps: Option<&Path>) -> Result<bool> {
    let mut run = Run::new("solve", &g.out_dir, g.seed, config_json(g, Some(model)))?;
    let (inst, tree) = load_pair(&mut run, args, tree)?;
    let built = build_full(&inst, &tree, g.variant, build_options(model))?;
    if let Some(p) = mps {
        write_mps(&mut run, &built, p)?;
    }
    let sol = solve_milp(&built.problem, &solver_config(g, model))?;
    let mut r = String::new();
    let _ = writeln!(r, "instance\t{}", inst.name);
    let _ = writeln!(r, "variant\t{}", g.variant);
    r.push_str(&size_block(&built));
    let _ = writeln!(r, "status\t{}", status_line(&sol.status));
    let _ = writeln!(r, "objective\t{}", sol.objective.map_or("n/a".into(), |v| v.to_string()));
    let _ = writeln!(r, "bound\t{}", sol.bound);
    if let Some(z) = sol.objective {
        let _ = writeln!(r, "gap\t{:.3e}", relative_gap(sol.bound, z));
    }
    let _ = writeln!(r, "nodes\t{}", sol.stats.nodes);
    let _ = writeln!(r, "lp_iterations\t{}", sol.stats.lp_iterations);
    let _ = writeln!(r, "seconds\t{:.3}", sol.stats.seconds);
    if sol.status != SolveStatus::Optimal {
        let msg = format!("solver status: {}", status_line(&sol.status));
        let _ = writeln!(r, "ERROR\t{msg}");
        run.error(msg);
    }
    if sol.status.has_solution() {
        write_plan(&mut run, &inst, &built, &sol, &mut r, "")?;
    }
    run.write("report.txt", &r)?;
    print!("{r}");
    run.finish()
}

fn write_plan(
    run: &mut Run,
    inst: &Instance,
    built: &BuiltModel,
    sol: &MilpSolution,
    report: &mut String,
    suffix: &str,
) -> Result<()> {
    let plan = decode_solution(inst, built, sol)?;
    let data = PlanData::from_values(&built.layout, sol.values.as_ref().expect("has solution"));
    report.push_str(&kpi_block(&plan));
    for d in &plan.days {
        let routes: Vec<String> = d
            .routes
            .iter()
            .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("-"))
            .collect();
        let _ = writeln!(report, "day_{}\t{}", d.day, routes.join(" "));
    }
    run.write(&format!("plan{suffix}.json"), &serde_json::to_string_pretty(&plan)?)?;
    run.write(&format!("plan_data{suffix}.json"), &serde_json::to_string_pretty(&data)?)?;
    run.write(&format!("plan_series{suffix}.csv"), &plan_series(&plan))?;
    Ok(())
}

fn pct(p: Option<f64>) -> String {
    // avoid printing "-0.0000" for ties
    p.map_or("∞".to_string(), |v| format!("{:.4}", 100.0 * v + 0.0).replace("-0.0000", "0.0000"))
}

fn roll(
    g: &Global,
    args: &InstanceArgs,
    tree: &Path,
    model: &ModelArgs,
    windows: &[usize],
    baseline_rp: Option<f64>,
    baseline_seconds: Option<f64>,
) -> Result<bool> {
    let mut cfg = config_json(g, Some(model));
    cfg["windows"] = json!(windows);
    cfg["baseline_rp"] = json!(baseline_rp);
    let mut run = Run::new("roll", &g.out_dir, g.seed, cfg)?;
    let (inst, tree) = load_pair(&mut run, args, tree)?;
    let t = tree.num_stages();
    if let Some(&w) = windows.iter().find(|&&w| w == 0 || w + 2 > t) {
        bail!("window {w} out of range 1..={} for {t} stages", t.saturating_sub(2));
    }
    let solver = solver_config(g, model);
    let mut r = String::new();
    let (rp, rp_s) = match baseline_rp {
        Some(v) => (Some(v), baseline_seconds),
        None => {
            let built = build_full(&inst, &tree, g.variant, build_options(model))?;
            let clock = Instant::now();
            let sol = solve_milp(&built.problem, &solver)?;
            let secs = clock.elapsed().as_secs_f64();
            let _ = writeln!(r, "rp_status\t{}", status_line(&sol.status));
            if sol.status != SolveStatus::Optimal {
                let msg = format!("RP baseline: {}", status_line(&sol.status));
                let _ = writeln!(r, "ERROR\t{msg}");
                run.error(msg);
            }
            (sol.objective, Some(secs))
        }
    };
    let _ = writeln!(r, "rp\t{}", rp.map_or("n/a".into(), |v| v.to_string()));
    let _ = writeln!(r, "rp_seconds\t{}", rp_s.map_or("n/a".into(), |v| format!("{v:.3}")));
    let mut series =
        String::from("window,z_rh,rp,profit_reduction_pct,rh_seconds,rp_seconds,cpu_reduction_pct\n");
    for &w in windows {
        let mut rc = RhConfig::new(w, g.variant);
        rc.time_limit = g.time_limit.map(Duration::from_secs_f64);
        rc.tighten_big_m = model.tighten_big_m;
        rc.solver = solver.clone();
        rc.solver.time_limit = None;
        let res = match run_rolling_horizon(&inst, &tree, &rc) {
            Ok(res) => res,
            Err(e @ RhError::NoIncumbent { .. }) => {
                let msg = format!("W={w}: {e}");
                let _ = writeln!(r, "ERROR\t{msg}");
                run.error(msg);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let secs = res.trace.total_seconds();
        let reduction = match (res.profit, rp) {
            (Profit::NegativeInfinity, _) => "∞".to_string(),
            (Profit::Finite(z), Some(rp)) if rp > 0.0 => pct(Some((rp - z) / rp)),
            _ => "n/a".to_string(),
        };
        let cpu = match rp_s {
            Some(b) if b > 0.0 => format!("{:.4}", 100.0 * (b - secs) / b),
            _ => "n/a".to_string(),
        };
        let _ = writeln!(r, "W={w}\tz_rh\t{}", res.profit);
        let _ = writeln!(r, "W={w}\tprofit_reduction_pct\t{reduction}");
        let _ = writeln!(r, "W={w}\tcpu_reduction_pct\t{cpu}");
        let _ = writeln!(
            series,
            "{w},{},{},{reduction},{secs},{},{cpu}",
            res.profit,
            rp.map_or("n/a".into(), |v| v.to_string()),
            rp_s.map_or("n/a".into(), |v| v.to_string())
        );
        run.write(&format!("trace_W{w}.tsv"), &res.trace.to_text())?;
        run.write(&format!("trace_W{w}.json"), &serde_json::to_string_pretty(&res.trace)?)?;
        if let (Some(plan), Some(data)) = (&res.plan, &res.data) {
            r.push_str(&kpi_block(plan).lines().map(|l| format!("W={w}\t{l}\n")).collect::<String>());
            run.write(&format!("plan_W{w}.json"), &serde_json::to_string_pretty(plan)?)?;
            run.write(&format!("plan_data_W{w}.json"), &serde_json::to_string_pretty(data)?)?;
        }
    }
    run.write("roll_report.txt", &r)?;
    run.write("roll_series.csv", &series)?;
    print!("{r}");
    run.finish()
}

fn measure_config(g: &Global, model: &ModelArgs) -> MeasureConfig {
    MeasureConfig {
        variant: g.variant,
        build: build_options(model),
        solver: solver_config(g, model),
    }
}

fn measures_series(rep: &MeasureReport) -> String {
    let mut s = String::from("t,eev,messv,meiv,vss_pct,mluss_pct,mluds_pct\n");
    let v = |m: MeasureValue| m.value().map_or(m.to_string(), |x| x.to_string());
    let p = |x: Percentage| match x {
        Percentage::Finite(f) => (100.0 * f).to_string(),
        other => other.to_string(),
    };
    for st in &rep.stages {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            st.t,
            v(st.eev),
            v(st.messv),
            v(st.meiv),
            p(rep.vss(st.t)),
            p(rep.mluss(st.t)),
            p(rep.mluds(st.t))
        );
    }
    s
}

fn measures_single(g: &Global, instance: &Path, tree: &Path, model: &ModelArgs) -> Result<bool> {
    let mut run = Run::new("measures", &g.out_dir, g.seed, config_json(g, Some(model)))?;
    let mut inst = read_instance(&mut run, instance)?;
    let tree = read_tree(&mut run, tree)?;
    align_horizon(&mut inst, &tree);
    let rep = compute_all(&inst, &tree, &measure_config(g, model))?;
    let mut table = rep.to_tsv();
    if !rep.exact {
        let msg = "some auxiliary problem was not solved to optimality".to_string();
        let _ = writeln!(table, "ERROR\t{msg}");
        run.error(msg);
    }
    run.write("measures.tsv", &table)?;
    run.write("measures_series.csv", &measures_series(&rep))?;
    run.write("measures.json", &serde_json::to_string_pretty(&rep)?)?;
    print!("{table}");
    run.finish()
}

/// `inst_<draw>_<n>` -> `(draw, n)`.
fn parse_instance_name(stem: &str) -> Option<(usize, usize)> {
    let rest = stem.strip_prefix("inst_")?;
    let (d, n) = rest.split_once('_')?;
    Some((d.parse().ok()?, n.parse().ok()?))
}

fn measures_batch(g: &Global, dir: &Path, tree: Option<&Path>, model: &ModelArgs) -> Result<bool> {
    let mut cfg = config_json(g, Some(model));
    cfg["batch_dir"] = json!(dir.display().to_string());
    let mut run = Run::new("measures", &g.out_dir, g.seed, cfg)?;
    let mut found: Vec<(usize, usize, PathBuf)> = Vec::new();
    for e in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = e?.path();
        if path.extension().is_some_and(|x| x == "json") {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            if let Some((d, n)) = parse_instance_name(&stem) {
                found.push((n, d, path));
            }
        }
    }
    if found.is_empty() {
        bail!("no inst_<draw>_<n>.json files in {}", dir.display());
    }
    found.sort();
    let mcfg = measure_config(g, model);
    let mut rows = String::from("instance,n,rp,ev,ws,evpi_pct,vss_pct,mluss_pct,mluds_pct,status\n");
    // per size class: sums and counts of finite %EVPI and last-stage %VSS/%MLUSS/%MLUDS, infinite counts
    let mut classes: Vec<(usize, [f64; 4], [usize; 4], [usize; 4], usize)> = Vec::new();
    for (n, draw, path) in &found {
        let name = format!("inst_{draw}_{n}");
        let tree_path = {
            let own = dir.join(format!("tree_{n}.json"));
            if own.exists() {
                own
            } else {
                tree.map(Path::to_path_buf).context("no tree_<n>.json in the batch dir and no --tree")?
            }
        };
        let outcome = (|| -> Result<MeasureReport> {
            let mut inst = read_instance(&mut run, path)?;
            let tree = read_tree(&mut run, &tree_path)?;
            align_horizon(&mut inst, &tree);
            Ok(compute_all(&inst, &tree, &mcfg)?)
        })();
        let idx = match classes.iter().position(|c| c.0 == *n) {
            Some(i) => i,
            None => {
                classes.push((*n, [0.0; 4], [0; 4], [0; 4], 0));
                classes.len() - 1
            }
        };
        match outcome {
            Ok(rep) => {
                let last = rep.stages.len();
                let ps = [rep.evpi(), rep.vss(last), rep.mluss(last), rep.mluds(last)];
                let cells: Vec<String> = ps
                    .iter()
                    .map(|p| match p {
                        Percentage::Finite(f) => format!("{:.4}", 100.0 * f),
                        other => other.to_string(),
                    })
                    .collect();
                for (k, p) in ps.iter().enumerate() {
                    match p {
                        Percentage::Finite(f) => {
                            classes[idx].1[k] += f;
                            classes[idx].2[k] += 1;
                        }
                        Percentage::Infinite => classes[idx].3[k] += 1,
                        _ => {}
                    }
                }
                classes[idx].4 += 1;
                let status = if rep.exact { "ok" } else { "ERROR: not proven optimal" };
                if !rep.exact {
                    run.error(format!("{name}: not proven optimal"));
                }
                let _ = writeln!(
                    rows,
                    "{name},{n},{},{},{},{},{}",
                    rep.rp,
                    rep.ev.value().map_or("infeasible".into(), |v| v.to_string()),
                    rep.ws.value,
                    cells.join(","),
                    status
                );
            }
            Err(e) => {
                run.error(format!("{name}: {e:#}"));
                let _ = writeln!(rows, "{name},{n},,,,,,,,ERROR: {}", format!("{e:#}").replace(',', ";"));
            }
        }
    }
    let mut summary = String::from(
        "n,instances,mean_evpi_pct,mean_vss_pct,mean_mluss_pct,mean_mluds_pct,inf_vss,inf_mluss,inf_mluds\n",
    );
    for (n, sums, counts, infs, total) in &classes {
        let mean = |k: usize| {
            if counts[k] == 0 {
                "n/a".to_string()
            } else {
                format!("{:.4}", 100.0 * sums[k] / counts[k] as f64)
            }
        };
        let _ = writeln!(
            summary,
            "{n},{total},{},{},{},{},{},{},{}",
            mean(0),
            mean(1),
            mean(2),
            mean(3),
            infs[1],
            infs[2],
            infs[3]
        );
    }
    run.write("measures_batch.csv", &rows)?;
    run.write("measures_summary.csv", &summary)?;
    print!("{summary}");
    run.finish()
}

fn stability(
    g: &Global,
    args: &InstanceArgs,
    histories: &Path,
    structures: &[String],
    runs: usize,
    iterations: usize,
    model: &ModelArgs,
) -> Result<bool> {
    let mut cfg = config_json(g, Some(model));
    cfg["structures"] = json!(structures);
    cfg["runs"] = json!(runs);
    cfg["iterations"] = json!(iterations);
    let mut run = Run::new("stability", &g.out_dir, g.seed, cfg)?;
    let mut inst = read_instance(&mut run, &args.instance)?;
    if let Some(v) = args.travel_cost {
        inst.parameters.travel_cost_per_km = v;
    }
    if let Some(v) = args.price {
        inst.parameters.selling_price_per_kg = v;
    }
    if let Some(v) = args.capacity {
        inst.parameters.vehicle_capacity_kg = v;
    }
    let hist = histories_for(&read_histories(&mut run, histories)?, &inst)?;
    let parsed: Vec<BranchingStructure> = structures.iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
    let stages = parsed.first().map(|s| s.stages()).context("no structures")?;
    if parsed.iter().any(|s| s.stages() != stages) {
        bail!("all structures need the same number of stages");
    }
    inst.parameters.horizon = stages;
    inst.validate()?;
    let bank = TrajectoryBank::from_histories(&hist, stages)?;
    let solver = solver_config(g, model);
    let opts = build_options(model);
    let rows = stability_batch(&bank, &parsed, runs, iterations, g.seed, |tree| {
        let built = build_full(&inst, tree, g.variant, opts).map_err(|e| e.to_string())?;
        let sol = solve_milp(&built.problem, &solver).map_err(|e| e.to_string())?;
        if sol.status != SolveStatus::Optimal {
            return Err(status_line(&sol.status));
        }
        let plan = decode_solution(&inst, &built, &sol).map_err(|e| e.to_string())?;
        Ok(StabilityObservation {
            profit: plan.kpis.profit,
            collected_kg: plan.kpis.collected_kg,
            distance_km: plan.kpis.distance_km,
        })
    })?;
    let mut t = String::from(
        "structure\tscenarios\truns\tfailed\tmean_profit\tstd_profit\tmean_collected_kg\tmean_distance_km\tmean_cpu_s\tmultistage_distance\n",
    );
    for r in &rows {
        let _ = writeln!(
            t,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.3}\t{}",
            r.structure,
            r.scenarios,
            r.runs,
            r.failed_runs,
            r.mean_profit,
            r.std_profit,
            r.mean_collected_kg,
            r.mean_distance_km,
            r.mean_cpu_s,
            r.multistage_distance.map_or("n/a".into(), |v| v.to_string())
        );
        for f in &r.failures {
            let _ = writeln!(t, "ERROR\t{}: {f}", r.structure);
            run.error(format!("{}: {f}", r.structure));
        }
    }
    run.write("stability.tsv", &t)?;
    print!("{t}");
    run.finish()
}

fn export(g: &Global, args: &InstanceArgs, tree: &Path, model: &ModelArgs) -> Result<bool> {
    let mut run = Run::new("export-mps", &g.out_dir, g.seed, config_json(g, Some(model)))?;
    let (inst, tree) = load_pair(&mut run, args, tree)?;
    let built = build_full(&inst, &tree, g.variant, build_options(model))?;
    write_mps(&mut run, &built, Path::new("model.mps"))?;
    let mut r = size_block(&built);
    let _ = writeln!(r, "rows\t{}", built.problem.num_rows());
    let _ = writeln!(r, "columns\t{}", built.problem.num_vars());
    run.write("build_report.txt", &r)?;
    print!("{r}");
    run.finish()
}

fn draw(
    g: &Global,
    master: Option<&Path>,
    synthetic: Option<usize>,
    horizon: usize,
    history_days: i64,
    bins: usize,
    draws: usize,
) -> Result<bool> {
    let mut run = Run::new(
        "draw-instance",
        &g.out_dir,
        g.seed,
        json!({"synthetic": synthetic, "horizon": horizon, "bins": bins, "draws": draws}),
    )?;
    let master = match (master, synthetic) {
        (Some(p), _) => read_instance(&mut run, p)?,
        (None, Some(n)) => {
            let mut m = synthetic_instance(n, Parameters::reference(horizon), 10.0, 0.0, g.seed)?;
            m.name = "master".into();
            run.write("master.json", &m.to_json())?;
            run.write("histories.csv", &histories_to_csv(&synthetic_histories(n, history_days, g.seed)))?;
            m
        }
        (None, None) => bail!("either --master or --synthetic is needed"),
    };
    for d in 1..=draws {
        let inst = draw_instance(&master, bins, d, g.seed)?;
        run.write(&format!("{}.json", inst.name), &inst.to_json())?;
        println!("{}", inst.name);
    }
    run.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_names() {
        assert_eq!(parse_instance_name("inst_3_9"), Some((3, 9)));
        assert_eq!(parse_instance_name("inst_x_9"), None);
        assert_eq!(parse_instance_name("tree_9"), None);
    }
}
