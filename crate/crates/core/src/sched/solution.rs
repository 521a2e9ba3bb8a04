use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{branch_flows, CaseMode, SchedError, ScheduleModel};
use crate::netdata::{GenClass, NetworkCase, ScenarioSet};
use crate::solver::{SolutionPoint, SolveStatus};

pub const SOLUTION_SCHEMA: &str = "fcsched-solution/1";

const INTEGRALITY_TOL: f64 = 1e-5;
const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDispatch {
    pub id: String,
    pub on: bool,
    pub startup: f64,
    pub p_mw: f64,
    pub q_mvar: f64,
    pub pfr_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageDispatch {
    pub id: String,
    /// Net output `p_b`, positive when discharging.
    pub p_mw: f64,
    pub charge_mw: f64,
    pub discharge_mw: f64,
    pub soc: f64,
    pub h_si: f64,
    pub constant_power_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindDispatch {
    pub id: String,
    pub p_mw: f64,
    pub available_mw: f64,
    pub h_si: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvDispatch {
    pub id: String,
    pub p_mw: f64,
    pub available_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadShed {
    pub id: String,
    pub demand_mw: f64,
    pub p_shed_mw: f64,
    pub q_shed_mvar: f64,
    /// Epigraph value standing in for `q_shed^2` in the objective.
    pub q_shed_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub id: String,
    pub p_from_mw: f64,
    pub q_from_mvar: f64,
    pub p_to_mw: f64,
    pub q_to_mvar: f64,
    /// `W_ii W_jj - |W_ij|^2`; zero when the relaxation is exact.
    pub rank_gap: f64,
}

/// Quantities that shape the frequency response if the grid is lost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSolution {
    pub import_mw: f64,
    pub import_mvar: f64,
    /// Synchronous inertia of the committed units (MWs/Hz).
    pub h_sg: f64,
    pub inertia: f64,
    pub pfr_mw: f64,
    pub shed_mean_mw: f64,
    pub constant_power_mw: f64,
    /// Shortest hold window among the storage units (s).
    pub constant_power_window_s: Option<f64>,
    pub d0: f64,
    pub demand_mw: f64,
    /// `import - shed_mean + xi alpha shed_mean`.
    pub shifted_disturbance_mw: f64,
    /// Whether the frequency constraints were imposed here.
    pub constrained: bool,
    /// Selected linear piece of the nadir block.
    pub nadir_segment: Option<usize>,
    /// `x2` sits on its `d` floor rather than on the disturbance.
    pub x2_on_floor: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSolution {
    pub t: usize,
    pub s: usize,
    pub generators: Vec<GenDispatch>,
    pub storage: Vec<StorageDispatch>,
    pub wind: Vec<WindDispatch>,
    pub pv: Vec<PvDispatch>,
    pub loads: Vec<LoadShed>,
    pub branches: Vec<BranchFlow>,
    pub event: EventSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub id: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub startup: f64,
    pub fixed_running: f64,
    pub flexible_running: f64,
    pub shed_active: f64,
    pub shed_reactive: f64,
    pub import: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSolution {
    pub schema: String,
    pub case_name: String,
    pub mode: Option<CaseMode>,
    pub status: SolveStatus,
    pub objective: f64,
    pub bound: f64,
    pub dt_h: f64,
    pub eta: f64,
    pub alpha: f64,
    pub xi: f64,
    pub scenarios: Vec<ScenarioInfo>,
    /// Ordered by period, then scenario.
    pub periods: Vec<PeriodSolution>,
    pub costs: CostBreakdown,
    /// Largest SoC recursion residual (MWh).
    pub max_soc_residual: f64,
    /// Largest `W_ii W_jj - |W_ij|^2` over all branches and periods.
    pub max_rank_gap: f64,
}

impl ScheduleSolution {
    pub fn horizon(&self) -> usize {
        self.periods.iter().map(|p| p.t + 1).max().unwrap_or(0)
    }

    pub fn period(&self, t: usize, s: usize) -> Option<&PeriodSolution> {
        self.periods.iter().find(|p| p.t == t && p.s == s)
    }

    pub fn gap(&self) -> f64 {
        crate::solver::relative_gap(self.objective, self.bound)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("solution serialisation cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let sol: ScheduleSolution = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if sol.schema != SOLUTION_SCHEMA {
            return Err(format!(
                "unsupported schema `{}`, expected `{SOLUTION_SCHEMA}`",
                sol.schema
            ));
        }
        Ok(sol)
    }

    /// One CSV table per variable family as `(file name, contents)`.
    pub fn tables(&self) -> Vec<(&'static str, String)> {
        let mut gens = String::from("t,s,id,on,startup,p_mw,q_mvar,pfr_mw\n");
        let mut storage =
            String::from("t,s,id,p_mw,charge_mw,discharge_mw,soc,h_si,constant_power_mw\n");
        let mut wind = String::from("t,s,id,p_mw,available_mw,h_si\n");
        let mut pv = String::from("t,s,id,p_mw,available_mw\n");
        let mut loads = String::from("t,s,id,demand_mw,p_shed_mw,q_shed_mvar\n");
        let mut branches =
            String::from("t,s,id,p_from_mw,q_from_mvar,p_to_mw,q_to_mvar,rank_gap\n");
        let mut events = String::from(
            "t,s,import_mw,import_mvar,h_sg,inertia,pfr_mw,shed_mean_mw,constant_power_mw,d0,demand_mw,shifted_disturbance_mw\n",
        );
        for p in &self.periods {
            let (t, s) = (p.t, p.s);
            for g in &p.generators {
                let _ = writeln!(
                    gens,
                    "{t},{s},{},{},{},{},{},{}",
                    g.id, g.on as u8, g.startup, g.p_mw, g.q_mvar, g.pfr_mw
                );
            }
            for b in &p.storage {
                let _ = writeln!(
                    storage,
                    "{t},{s},{},{},{},{},{},{},{}",
                    b.id, b.p_mw, b.charge_mw, b.discharge_mw, b.soc, b.h_si, b.constant_power_mw
                );
            }
            for w in &p.wind {
                let _ = writeln!(
                    wind,
                    "{t},{s},{},{},{},{}",
                    w.id, w.p_mw, w.available_mw, w.h_si
                );
            }
            for m in &p.pv {
                let _ = writeln!(pv, "{t},{s},{},{},{}", m.id, m.p_mw, m.available_mw);
            }
            for l in &p.loads {
                let _ = writeln!(
                    loads,
                    "{t},{s},{},{},{},{}",
                    l.id, l.demand_mw, l.p_shed_mw, l.q_shed_mvar
                );
            }
            for br in &p.branches {
                let _ = writeln!(
                    branches,
                    "{t},{s},{},{},{},{},{},{}",
                    br.id, br.p_from_mw, br.q_from_mvar, br.p_to_mw, br.q_to_mvar, br.rank_gap
                );
            }
            let e = &p.event;
            let _ = writeln!(
                events,
                "{t},{s},{},{},{},{},{},{},{},{},{},{}",
                e.import_mw,
                e.import_mvar,
                e.h_sg,
                e.inertia,
                e.pfr_mw,
                e.shed_mean_mw,
                e.constant_power_mw,
                e.d0,
                e.demand_mw,
                e.shifted_disturbance_mw
            );
        }
        vec![
            ("generators.csv", gens),
            ("storage.csv", storage),
            ("wind.csv", wind),
            ("pv.csv", pv),
            ("loads.csv", loads),
            ("branches.csv", branches),
            ("events.csv", events),
        ]
    }
}

/// Read a solver point back into a schedule and check its invariants.
pub fn extract_solution(
    model: &ScheduleModel,
    case: &NetworkCase,
    scenarios: &ScenarioSet,
    point: &SolutionPoint,
) -> Result<ScheduleSolution, SchedError> {
    if !point.has_point() {
        return Err(SchedError::NoIncumbent(point.status));
    }
    let prog = &model.program;
    if point.values.len() != prog.num_vars() {
        return Err(SchedError::Invariant(format!(
            "point has {} values for {} variables",
            point.values.len(),
            prog.num_vars()
        )));
    }
    let mut x = point.values.clone();
    for v in prog.binaries() {
        let val = x[v.0];
        if (val - val.round()).abs() > INTEGRALITY_TOL {
            return Err(SchedError::Integrality {
                name: prog.var(v).name.clone(),
                value: val,
            });
        }
        x[v.0] = val.round();
    }
    let val = |v: crate::conic::VarId| x[v.0];
    let params = &model.options.drcc;
    let xi = params.xi()?;
    let dt = scenarios.dt_h;
    let f0 = case.frequency.nominal_hz;
    let window = case
        .storage
        .iter()
        .map(|b| b.constant_power_window_s)
        .reduce(f64::min);

    let mut periods = vec![];
    let mut max_soc_residual: f64 = 0.0;
    let mut max_rank_gap: f64 = 0.0;
    for t in 0..model.horizon() {
        for s in 0..model.num_scenarios() {
            let pv_ = &model.periods[t][s];
            let snap = scenarios.snapshot(t, s);

            let mut generators = vec![];
            let mut h_sg = 0.0;
            for (g, unit) in case.generators.iter().enumerate() {
                let on = val(pv_.gen_on[g]) > 0.5;
                let p = val(pv_.gen_p[g]);
                let q = val(pv_.gen_q[g]);
                let r = val(pv_.gen_pfr[g]);
                let y = if on { 1.0 } else { 0.0 };
                let tol = FEAS_TOL * unit.p_max.abs().max(1.0);
                if p > unit.p_max * y + tol
                    || p < unit.p_min * y - tol
                    || r > (unit.p_max * y - p) + tol
                {
                    return Err(SchedError::Invariant(format!(
                        "unit `{}` at t{t} s{s} outside its committed limits",
                        unit.id
                    )));
                }
                if on {
                    h_sg += unit.inertia_s * unit.p_max / f0;
                }
                generators.push(GenDispatch {
                    id: unit.id.clone(),
                    on,
                    startup: val(pv_.gen_startup[g]),
                    p_mw: p,
                    q_mvar: q,
                    pfr_mw: r,
                });
            }

            let mut storage = vec![];
            for (b, unit) in case.storage.iter().enumerate() {
                let sv = &pv_.storage[b];
                let prev = if t == 0 {
                    unit.soc_init
                } else {
                    val(model.periods[t - 1][s].storage[b].soc)
                };
                let (ch, dch, soc) = (val(sv.charge), val(sv.discharge), val(sv.soc));
                let residual = (unit.energy_mwh * (soc - prev)
                    - (unit.efficiency * ch - dch / unit.efficiency) * dt)
                    .abs();
                max_soc_residual = max_soc_residual.max(residual);
                storage.push(StorageDispatch {
                    id: unit.id.clone(),
                    p_mw: dch - ch,
                    charge_mw: ch,
                    discharge_mw: dch,
                    soc,
                    h_si: val(sv.h_si),
                    constant_power_mw: val(sv.constant_power),
                });
            }

            let wind = case
                .wind
                .iter()
                .enumerate()
                .map(|(w, unit)| WindDispatch {
                    id: unit.id.clone(),
                    p_mw: val(pv_.wind_p[w]),
                    available_mw: snap.wind_mw[w],
                    h_si: val(pv_.wind_h[w]),
                })
                .collect();
            let pv = case
                .pv
                .iter()
                .enumerate()
                .map(|(m, unit)| PvDispatch {
                    id: unit.id.clone(),
                    p_mw: val(pv_.pv_p[m]),
                    available_mw: snap.pv_mw[m],
                })
                .collect();
            let loads = case
                .loads
                .iter()
                .enumerate()
                .map(|(l, load)| LoadShed {
                    id: load.id.clone(),
                    demand_mw: snap.load_p[l],
                    p_shed_mw: val(pv_.shed_p[l]),
                    q_shed_mvar: val(pv_.shed_q[l]),
                    q_shed_sq: val(pv_.shed_q_sq[l]),
                })
                .collect();

            let mut branches = vec![];
            for (k, br) in case.branches.iter().enumerate() {
                let i = case.bus_index(br.from).expect("validated bus reference");
                let j = case.bus_index(br.to).expect("validated bus reference");
                let (wi, wj) = (val(pv_.bus_w[i]), val(pv_.bus_w[j]));
                let (c, sn) = (val(pv_.branch_c[k]), val(pv_.branch_s[k]));
                let [pij, qij, pji, qji] = branch_flows(br.g, br.b, wi, wj, c, sn, case.base_mva);
                let rank_gap = wi * wj - (c * c + sn * sn);
                max_rank_gap = max_rank_gap.max(rank_gap);
                branches.push(BranchFlow {
                    id: br.id.clone(),
                    p_from_mw: pij,
                    q_from_mvar: qij,
                    p_to_mw: pji,
                    q_to_mvar: qji,
                    rank_gap,
                });
            }

            let import = val(pv_.import_p);
            let shed = val(pv_.shed_mean);
            let (nadir_segment, x2_on_floor) =
                match pv_.frequency.as_ref().and_then(|f| f.nadir.as_ref()) {
                    Some(block) => (
                        block.selected(&x),
                        Some(val(block.x2) <= block.d * (1.0 + 1e-6)),
                    ),
                    None => (None, None),
                };
            let event = EventSolution {
                import_mw: import,
                import_mvar: val(pv_.import_q),
                h_sg,
                inertia: val(pv_.inertia),
                pfr_mw: val(pv_.pfr),
                shed_mean_mw: shed,
                constant_power_mw: pv_.constant_power.map_or(0.0, val),
                constant_power_window_s: window,
                d0: pv_.d0,
                demand_mw: snap.total_demand(),
                shifted_disturbance_mw: import + (xi * params.alpha - 1.0) * shed,
                constrained: pv_.frequency.is_some(),
                nadir_segment,
                x2_on_floor,
            };
            periods.push(PeriodSolution {
                t,
                s,
                generators,
                storage,
                wind,
                pv,
                loads,
                branches,
                event,
            });
        }
    }

    let energy_scale = case
        .storage
        .iter()
        .map(|b| b.energy_mwh)
        .fold(1.0, f64::max);
    if max_soc_residual > FEAS_TOL * energy_scale {
        return Err(SchedError::Invariant(format!(
            "SoC recursion residual {max_soc_residual:e} MWh"
        )));
    }
    // Slow commitments are shared variables; check the readback anyway.
    for (g, unit) in case.generators.iter().enumerate() {
        if unit.class != GenClass::Slow {
            continue;
        }
        for t in 0..model.horizon() {
            let first = &periods[t * model.num_scenarios()].generators[g];
            for s in 1..model.num_scenarios() {
                let other = &periods[t * model.num_scenarios() + s].generators[g];
                if other.on != first.on || other.startup != first.startup {
                    return Err(SchedError::Invariant(format!(
                        "slow unit `{}` commitment differs across scenarios at t{t}",
                        unit.id
                    )));
                }
            }
        }
    }

    let mut sol = ScheduleSolution {
        schema: SOLUTION_SCHEMA.to_string(),
        case_name: case.name.clone(),
        mode: model.options.mode(),
        status: point.status,
        objective: prog.objective_value(&x),
        bound: point.bound,
        dt_h: dt,
        eta: params.eta,
        alpha: params.alpha,
        xi,
        scenarios: scenarios
            .scenarios
            .iter()
            .map(|s| ScenarioInfo {
                id: s.id.clone(),
                probability: s.probability,
            })
            .collect(),
        periods,
        costs: CostBreakdown::default(),
        max_soc_residual,
        max_rank_gap,
    };
    sol.costs = cost_breakdown(&sol, case);
    Ok(sol)
}

/// Probability-weighted cost per objective term.
pub fn cost_breakdown(solution: &ScheduleSolution, case: &NetworkCase) -> CostBreakdown {
    let mut c = CostBreakdown::default();
    let dt = solution.dt_h;
    let price = case.pcc.as_ref().map_or(0.0, |p| p.import_price);
    for p in &solution.periods {
        let pi = solution.scenarios[p.s].probability;
        for (g, unit) in p.generators.iter().zip(&case.generators) {
            c.startup += pi * unit.startup_cost * g.startup;
            match unit.class {
                GenClass::Fast => {
                    c.fixed_running += pi * dt * unit.running_cost * if g.on { 1.0 } else { 0.0 }
                }
                GenClass::Slow => c.flexible_running += pi * dt * unit.running_cost * g.p_mw,
            }
        }
        for (l, load) in p.loads.iter().zip(&case.loads) {
            c.shed_active += pi * dt * load.voll * l.p_shed_mw;
            c.shed_reactive += pi * dt * load.voll * l.q_shed_sq;
        }
        c.import += pi * dt * price * p.event.import_mw;
    }
    c.total = c.startup
        + c.fixed_running
        + c.flexible_running
        + c.shed_active
        + c.shed_reactive
        + c.import;
    c
}
