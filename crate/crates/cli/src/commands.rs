use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use fcsched::conic::export_text;
use fcsched::freqdyn::{
    certify as certify_schedule, nadir, nadir_time, rocof_max, simulate_swing, steady_state,
    FrequencyScene,
};
use fcsched::netdata::{load_case, load_scenarios, validate_case, NetworkCase, ScenarioSet};
use fcsched::sched::{
    build_model, extract_solution, infeasibility_precheck, solve_schedule, CaseMode, SchedError,
    ScheduleModel, ScheduleSolution,
};
use fcsched::solver::{ExternalBackend, MisocpResult, SolveStatus, SolverError};

use crate::config::RunConfig;
use crate::{
    CertifyArgs, ExitCode, Failure, FreqArgs, RunArgs, SolveArgs, SweepArgs, SweepParam,
    ValidateArgs,
};

type Outcome = Result<ExitCode, Failure>;

/// Config file (or defaults) with the command-line overrides applied.
pub fn resolve_config(run: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &run.config {
        Some(path) => RunConfig::load(path).map_err(Failure::input)?,
        None => match (&run.case, &run.scenarios) {
            (Some(c), Some(s)) => RunConfig::new(c.clone(), s.clone()),
            _ => {
                return Err(Failure::input(
                    "need --config, or both --case and --scenarios",
                ))
            }
        },
    };
    if let Some(c) = &run.case {
        cfg.case = c.clone();
    }
    if let Some(s) = &run.scenarios {
        cfg.scenarios = s.clone();
    }
    if let Some(o) = &run.output {
        cfg.output = o.clone();
    }
    if run.periods.is_some() {
        cfg.periods = run.periods;
    }
    if run.case_mode.is_some() {
        cfg.build.mode = run.case_mode;
    }
    if let Some(v) = run.eta {
        cfg.drcc.eta = v;
    }
    if let Some(v) = run.alpha {
        cfg.drcc.alpha = v;
    }
    if let Some(v) = run.gap {
        cfg.solver.gap_rel = v;
    }
    if let Some(v) = run.time_limit {
        cfg.solver.time_limit_s = v;
    }
    if let Some(v) = run.node_limit {
        cfg.solver.node_limit = v;
    }
    if let Some(v) = run.threads {
        cfg.solver.threads = v;
    }
    if run.deterministic {
        cfg.solver.deterministic = true;
    }
    Ok(cfg)
}

pub fn load_inputs(cfg: &RunConfig) -> Result<(NetworkCase, ScenarioSet), Failure> {
    let case = load_case(&cfg.case).map_err(|e| Failure::input(format!("case: {e}")))?;
    let diags = validate_case(&case);
    if !diags.is_empty() {
        let list: Vec<String> = diags.iter().map(ToString::to_string).collect();
        return Err(Failure::input(format!(
            "case is invalid:\n  {}",
            list.join("\n  ")
        )));
    }
    let mut sc = load_scenarios(&cfg.scenarios, &case)
        .map_err(|e| Failure::input(format!("scenarios: {e}")))?;
    if let Some(n) = cfg.periods {
        sc = sc.truncated(n);
    }
    Ok((case, sc))
}

fn sched_failure(e: SchedError) -> Failure {
    let code = match &e {
        SchedError::Case(_)
        | SchedError::Scenario(_)
        | SchedError::Options(_)
        | SchedError::Drcc(_) => ExitCode::Input,
        SchedError::Infeasible(_) => ExitCode::Infeasible,
        SchedError::NoIncumbent(SolveStatus::Infeasible) => ExitCode::Infeasible,
        SchedError::NoIncumbent(_) => ExitCode::NoIncumbent,
        SchedError::Conic(_) | SchedError::Integrality { .. } | SchedError::Invariant(_) => {
            ExitCode::Internal
        }
    };
    let message = match e {
        SchedError::Infeasible(findings) => {
            let list: Vec<String> = findings.iter().map(ToString::to_string).collect();
            format!("infeasible by construction:\n  {}", list.join("\n  "))
        }
        e => e.to_string(),
    };
    Failure::new(code, message)
}

fn solver_failure(e: SolverError) -> Failure {
    match e {
        SolverError::Options(m) => Failure::input(format!("solver options: {m}")),
        e => Failure::internal(e.to_string()),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::internal(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents)
        .map_err(|e| Failure::internal(format!("cannot write {}: {e}", path.display())))
}

/// Build, solve and extract; the building block of `solve` and `sweep`.
pub fn solve_run(
    cfg: &RunConfig,
    case: &NetworkCase,
    sc: &ScenarioSet,
) -> Result<(ScheduleModel, MisocpResult, ScheduleSolution), Failure> {
    let options = cfg.build_options();
    let model = build_model(case, sc, &options).map_err(sched_failure)?;
    let external = ExternalBackend::from_env();
    if let Some(b) = &external {
        log::info!("using external solver {b:?}");
    }
    let backend = external
        .as_ref()
        .map(|b| b as &dyn fcsched::solver::Backend);
    let result = solve_schedule(&model, &cfg.solver, backend).map_err(solver_failure)?;
    let solution =
        extract_solution(&model, case, sc, &result.point).map_err(sched_failure)?;
    Ok((model, result, solution))
}

fn solve_log(cfg: &RunConfig, result: &MisocpResult, sol: &ScheduleSolution) -> String {
    let s = &result.stats;
    let mut out = String::new();
    let _ = writeln!(out, "case: {}", cfg.case.display());
    let _ = writeln!(out, "scenarios: {}", cfg.scenarios.display());
    let _ = writeln!(
        out,
        "mode: {}",
        sol.mode.map_or("custom".to_string(), |m| m.to_string())
    );
    let _ = writeln!(out, "eta: {} alpha: {} xi: {}", sol.eta, sol.alpha, sol.xi);
    let _ = writeln!(out, "status: {}", sol.status);
    let _ = writeln!(out, "objective: {}", sol.objective);
    let _ = writeln!(out, "bound: {}", sol.bound);
    let _ = writeln!(out, "gap: {}", sol.gap());
    let _ = writeln!(out, "nodes: {}", s.nodes);
    let _ = writeln!(out, "polish_solves: {}", s.polish_solves);
    let _ = writeln!(out, "numerical_failures: {}", s.numerical_failures);
    let _ = writeln!(out, "max_depth: {}", s.max_depth);
    let _ = writeln!(out, "max_soc_residual: {}", sol.max_soc_residual);
    let _ = writeln!(out, "max_rank_gap: {}", sol.max_rank_gap);
    out
}

fn costs_csv(sol: &ScheduleSolution) -> String {
    let c = &sol.costs;
    let mut out = String::from("component,cost\n");
    for (name, v) in [
        ("startup", c.startup),
        ("fixed_running", c.fixed_running),
        ("flexible_running", c.flexible_running),
        ("shed_active", c.shed_active),
        ("shed_reactive", c.shed_reactive),
        ("import", c.import),
        ("total", c.total),
    ] {
        let _ = writeln!(out, "{name},{v}");
    }
    out
}

pub fn solve(args: &SolveArgs) -> Outcome {
    let cfg = resolve_config(&args.run)?;
    let (case, sc) = load_inputs(&cfg)?;
    let started = std::time::Instant::now();
    let (model, result, sol) = solve_run(&cfg, &case, &sc)?;
    let out = &cfg.output;
    write(&out.join("solution.json"), &sol.to_json())?;
    write(&out.join("costs.csv"), &costs_csv(&sol))?;
    write(&out.join("solve.log"), &solve_log(&cfg, &result, &sol))?;
    if cfg.report.tables {
        for (name, text) in sol.tables() {
            write(&out.join("tables").join(name), &text)?;
        }
    }
    if cfg.report.conic {
        write(&out.join("model.conic"), &export_text(&model.program))?;
    }
    if cfg.report.manifest {
        write(&out.join("manifest.md"), &model.manifest.to_markdown())?;
    }
    println!(
        "{}: objective {:.4}, bound {:.4}, gap {:.3e}, {} nodes",
        sol.status,
        sol.objective,
        sol.bound,
        sol.gap(),
        result.stats.nodes
    );
    eprintln!("solved in {:.2} s", started.elapsed().as_secs_f64());
    println!("artifacts in {}", out.display());
    Ok(ExitCode::Ok)
}

pub fn certify(args: &CertifyArgs) -> Outcome {
    let text = fs::read_to_string(&args.solution).map_err(|e| {
        Failure::input(format!(
            "missing solution {}: {e}",
            args.solution.display()
        ))
    })?;
    let sol = ScheduleSolution::from_json(&text)
        .map_err(|e| Failure::input(format!("{}: {e}", args.solution.display())))?;
    let mut run = args.run.clone();
    if run.output.is_none() {
        run.output = Some(
            args.solution
                .parent()
                .map_or_else(PathBuf::new, Path::to_path_buf),
        );
    }
    let mut cfg = resolve_config(&run)?;
    cfg.periods = Some(sol.horizon());
    if let Some(r) = args.rule {
        cfg.certify.rule = r.into();
    }
    if let Some(t) = args.tolerance {
        cfg.certify.nadir_tolerance_hz = t;
    }
    let (case, sc) = load_inputs(&cfg)?;
    let report = certify_schedule(&sol, &case, &sc, &cfg.certify);
    let text = report.to_text();
    let out = &cfg.output;
    write(&out.join("certify.txt"), &text)?;
    write(&out.join("nadir_hist.csv"), &report.nadir_csv())?;
    if let Some(trace) = &report.worst_trace {
        write(&out.join("worst_trace.csv"), &trace.to_csv())?;
    }
    print!("{text}");
    Ok(if report.all_passed() {
        ExitCode::Ok
    } else {
        ExitCode::CertifyFailed
    })
}

pub fn freq(args: &FreqArgs) -> Outcome {
    let gamma = if args.gamma.is_empty() {
        vec![0.0; args.h_wind.len()]
    } else {
        args.gamma.clone()
    };
    let scene = FrequencyScene {
        h_sg: args.h,
        h_storage: args.h_storage,
        h_wind: args.h_wind.clone(),
        gamma,
        d0: args.d,
        pfr_mw: args.r,
        t_d: args.t_d,
        disturbance_mw: args.dpl,
        constant_power_mw: args.dpc,
        constant_power_window_s: args.window.unwrap_or(f64::INFINITY),
    };
    let bad = |e: fcsched::freqdyn::FreqError| Failure::input(e.to_string());
    let rocof = rocof_max(&scene).map_err(bad)?;
    let tn = nadir_time(&scene).map_err(bad)?;
    let ss = steady_state(&scene).map_err(bad)?;
    println!("rocof_hzps: {rocof:.6}");
    println!("nadir_time_s: {:.6}", tn.t_n);
    println!("closed_form_valid: {}", tn.valid);
    if tn.valid {
        println!("nadir_hz: {:.6}", nadir(&scene).map_err(bad)?);
    } else {
        println!("nadir_hz: n/a (nadir after the ramp)");
    }
    let sim = if args.dpl > 0.0 {
        let dt = args.dt.min(scene.inertia() / scene.damping() / 10.0);
        Some(simulate_swing(&scene, dt, args.horizon).map_err(bad)?)
    } else {
        None
    };
    println!(
        "nadir_sim_hz: {:.6}",
        sim.as_ref().map_or(0.0, |s| s.nadir_value())
    );
    println!("steady_state_hz: {ss:.6}");
    if let Some(path) = &args.trace {
        let csv = sim.map_or_else(
            || format!("{}\n", fcsched::freqdyn::FrequencyTrace::CSV_HEADER),
            |s| s.trace.to_csv(),
        );
        write(path, &csv)?;
    }
    Ok(ExitCode::Ok)
}

/// Scale wind, PV and storage capacity by `k`.
pub fn scale_ibg(case: &mut NetworkCase, sc: &mut ScenarioSet, k: f64) {
    for w in &mut case.wind {
        w.capacity_mw *= k;
        w.h_si_max *= k;
    }
    for m in &mut case.pv {
        m.capacity_mw *= k;
    }
    for b in &mut case.storage {
        b.p_charge_max *= k;
        b.p_discharge_max *= k;
        b.energy_mwh *= k;
    }
    for s in &mut sc.scenarios {
        for snap in &mut s.periods {
            for v in snap
                .wind_mw
                .iter_mut()
                .chain(&mut snap.pv_mw)
                .chain(&mut snap.wind_h_max)
            {
                *v *= k;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub value: f64,
    pub mode: CaseMode,
    pub status: String,
    pub objective: f64,
    /// Expected cost per hour.
    pub avg_cost: f64,
    /// Expected import per period (MW).
    pub avg_import_mw: f64,
    pub gap: f64,
}

pub const SWEEP_HEADER: &str = "index,param,value,mode,status,objective,avg_cost,avg_import_mw,gap";

pub fn sweep_point(
    base: &RunConfig,
    case: &NetworkCase,
    sc: &ScenarioSet,
    param: SweepParam,
    value: f64,
    mode: CaseMode,
) -> Result<(String, ScheduleSolution), Failure> {
    let mut cfg = base.clone();
    cfg.build.mode = Some(mode);
    let (mut case, mut sc) = (case.clone(), sc.clone());
    match param {
        SweepParam::Alpha => cfg.drcc.alpha = value,
        SweepParam::Eta => cfg.drcc.eta = value,
        SweepParam::IbgScale => scale_ibg(&mut case, &mut sc, value),
    }
    let (_, _, sol) = solve_run(&cfg, &case, &sc)?;
    Ok((sol.status.to_string(), sol))
}

pub fn average_import(sol: &ScheduleSolution) -> f64 {
    let horizon = sol.horizon().max(1) as f64;
    sol.periods
        .iter()
        .map(|p| sol.scenarios[p.s].probability * p.event.import_mw)
        .sum::<f64>()
        / horizon
}

pub fn sweep(args: &SweepArgs) -> Outcome {
    let cfg = resolve_config(&args.run)?;
    let (case, sc) = load_inputs(&cfg)?;
    let modes = if args.modes.is_empty() {
        vec![cfg.build.mode.unwrap_or(CaseMode::CaseII)]
    } else {
        args.modes.clone()
    };
    let points: Vec<(usize, f64, CaseMode)> = modes
        .iter()
        .flat_map(|&m| args.values.iter().map(move |&v| (v, m)))
        .enumerate()
        .map(|(i, (v, m))| (i, v, m))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(|e| Failure::internal(e.to_string()))?;
    let hours = sc.horizon() as f64 * sc.dt_h;
    let rows: Vec<Result<SweepRow, Failure>> = pool.install(|| {
        points
            .par_iter()
            .map(|&(index, value, mode)| {
                let (status, sol) = sweep_point(&cfg, &case, &sc, args.param, value, mode)?;
                Ok(SweepRow {
                    index,
                    value,
                    mode,
                    status,
                    objective: sol.objective,
                    avg_cost: sol.objective / hours,
                    avg_import_mw: average_import(&sol),
                    gap: sol.gap(),
                })
            })
            .collect()
    });
    let mut csv = format!("{SWEEP_HEADER}\n");
    let mut worst = ExitCode::Ok;
    for (row, &(index, value, mode)) in rows.into_iter().zip(&points) {
        match row {
            Ok(r) => {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{}",
                    r.index,
                    args.param.name(),
                    r.value,
                    r.mode,
                    r.status,
                    r.objective,
                    r.avg_cost,
                    r.avg_import_mw,
                    r.gap
                );
            }
            Err(f) => {
                eprintln!("point {index} ({value}, {mode}): {f}");
                let _ = writeln!(
                    csv,
                    "{index},{},{value},{mode},error,,,,",
                    args.param.name()
                );
                if worst == ExitCode::Ok {
                    worst = f.code;
                }
            }
        }
    }
    write(
        &cfg.output.join(format!("sweep_{}.csv", args.param.name())),
        &csv,
    )?;
    print!("{csv}");
    Ok(worst)
}

pub fn validate(args: &ValidateArgs) -> Outcome {
    let run = &args.run;
    let case_path = match (&run.case, &run.config) {
        (Some(c), _) => c.clone(),
        (None, Some(p)) => RunConfig::load(p).map_err(Failure::input)?.case,
        (None, None) => return Err(Failure::input("need --case or --config")),
    };
    let text = fs::read_to_string(&case_path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", case_path.display())))?;
    let case =
        NetworkCase::parse_unchecked(&text).map_err(|e| Failure::input(format!("case: {e}")))?;
    let diags = validate_case(&case);
    for d in &diags {
        println!("{d}");
    }
    if !diags.is_empty() {
        println!("{} diagnostic(s)", diags.len());
        return Ok(ExitCode::Input);
    }
    println!(
        "case `{}`: {} buses, {} branches, {} units, valid",
        case.name,
        case.buses.len(),
        case.branches.len(),
        case.generators.len()
    );
    if run.scenarios.is_none() && run.config.is_none() {
        return Ok(ExitCode::Ok);
    }
    let mut run = run.clone();
    run.case = Some(case_path);
    let cfg = resolve_config(&run)?;
    let (case, sc) = load_inputs(&cfg)?;
    println!(
        "scenarios: {} x {} periods of {} h",
        sc.scenarios.len(),
        sc.horizon(),
        sc.dt_h
    );
    let findings =
        infeasibility_precheck(&case, &sc, &cfg.build_options()).map_err(sched_failure)?;
    for f in &findings {
        println!("{f}");
    }
    if findings.is_empty() {
        println!("precheck: no infeasibility found");
        Ok(ExitCode::Ok)
    } else {
        Ok(ExitCode::Infeasible)
    }
}
