//! Two-stage stochastic microgrid scheduling with islanding frequency limits.
//!
//! [`build_model`] turns a case and a scenario set into one mixed-integer
//! conic program. Slow units share their commitment across scenarios,
//! everything else is decided per `(t, s)`. Every period is assumed to be a
//! possible islanding instant, so each `(t, s)` carries its own RoCoF,
//! steady-state and nadir constraints on the disturbance `dP_L0 = P_import`.
//!
//! Powers are in MW, the voltage-product matrix `W` in p.u. on the case base.

mod precheck;
mod rounding;
mod solution;

pub use precheck::{infeasibility_precheck, PrecheckFinding};
pub use rounding::{solve_schedule, ScheduleRounding};
pub use solution::{
    cost_breakdown, extract_solution, BranchFlow, CostBreakdown, EventSolution, GenDispatch,
    LoadShed, PeriodSolution, PvDispatch, ScheduleSolution, StorageDispatch, WindDispatch,
    SOLUTION_SCHEMA,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{AffineExpr, ConeId, ConicError, ConicProgram, RowId, Sense, VarId};
use crate::drcc::{
    build_nadir_block, build_pfr_cover_constraint, build_rocof_constraint, build_ss_constraint,
    BlockContext, DrccError, DrccParams, FrequencyHandles, NadirBlock,
};
use crate::netdata::{validate_case, Diagnostic, GenClass, NetworkCase, ScenarioSet};
use crate::solver::SolveStatus;

#[derive(Debug, Error)]
pub enum SchedError {
    #[error("case is invalid: {}", join(.0))]
    Case(Vec<Diagnostic>),
    #[error("scenario set does not fit the case: {0}")]
    Scenario(String),
    #[error("infeasible by construction: {}", join(.0))]
    Infeasible(Vec<PrecheckFinding>),
    #[error("invalid options: {0}")]
    Options(String),
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error(transparent)]
    Drcc(#[from] DrccError),
    #[error("no schedule to extract (solver status {0})")]
    NoIncumbent(SolveStatus),
    #[error("binary `{name}` is {value}, not integral")]
    Integrality { name: String, value: f64 },
    #[error("solution breaks an invariant: {0}")]
    Invariant(String),
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// The three model variants compared in the case studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseMode {
    /// No frequency constraints.
    Base,
    /// Frequency constraints, no synthetic inertia.
    #[serde(rename = "case-i", alias = "caseI")]
    CaseI,
    /// Frequency constraints with synthetic inertia from storage and wind.
    #[serde(rename = "case-ii", alias = "caseII")]
    CaseII,
}

impl FromStr for CaseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "base" => Ok(CaseMode::Base),
            "casei" | "i" => Ok(CaseMode::CaseI),
            "caseii" | "ii" => Ok(CaseMode::CaseII),
            _ => Err(format!("unknown case mode `{s}` (base, caseI, caseII)")),
        }
    }
}

impl fmt::Display for CaseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseMode::Base => "base",
            CaseMode::CaseI => "case-i",
            CaseMode::CaseII => "case-ii",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildOptions {
    /// RoCoF, nadir and steady-state constraints at every `(t, s)`.
    pub frequency_constraints: bool,
    /// Allow storage and wind synthetic inertia.
    pub synthetic_inertia: bool,
    /// Allow the post-nadir constant injection from storage.
    pub constant_power: bool,
    /// Include the nadir block (only meaningful with frequency constraints).
    pub nadir: bool,
    pub drcc: DrccParams,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions::for_mode(CaseMode::CaseII)
    }
}

impl BuildOptions {
    pub fn for_mode(mode: CaseMode) -> Self {
        BuildOptions {
            frequency_constraints: mode != CaseMode::Base,
            synthetic_inertia: mode == CaseMode::CaseII,
            constant_power: true,
            nadir: true,
            drcc: DrccParams::default(),
        }
    }

    /// The named mode these flags correspond to, if any.
    pub fn mode(&self) -> Option<CaseMode> {
        match (self.frequency_constraints, self.synthetic_inertia) {
            (false, _) => Some(CaseMode::Base),
            (true, false) => Some(CaseMode::CaseI),
            (true, true) => Some(CaseMode::CaseII),
        }
    }

    pub fn validate(&self) -> Result<(), SchedError> {
        self.drcc.validate()?;
        Ok(())
    }
}

/// Program size contributed by one family of constraints.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyCount {
    pub vars: usize,
    pub binaries: usize,
    pub rows: usize,
    pub soc: usize,
    pub rsoc: usize,
}

impl FamilyCount {
    fn add(&mut self, other: FamilyCount) {
        self.vars += other.vars;
        self.binaries += other.binaries;
        self.rows += other.rows;
        self.soc += other.soc;
        self.rsoc += other.rsoc;
    }
}

/// Sizes per family, counted while the model is built.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub families: BTreeMap<String, FamilyCount>,
}

impl Manifest {
    pub fn total(&self) -> FamilyCount {
        let mut t = FamilyCount::default();
        for c in self.families.values() {
            t.add(*c);
        }
        t
    }

    /// Markdown table, one row per family plus the total.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| family | vars | binaries | rows | soc | rsoc |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        let line = |name: &str, c: &FamilyCount| {
            format!(
                "| {name} | {} | {} | {} | {} | {} |\n",
                c.vars, c.binaries, c.rows, c.soc, c.rsoc
            )
        };
        for (name, c) in &self.families {
            out.push_str(&line(name, c));
        }
        out.push_str(&line("total", &self.total()));
        out
    }
}

#[derive(Clone, Copy)]
struct Mark {
    vars: usize,
    binaries: usize,
    rows: usize,
    soc: usize,
    rsoc: usize,
}

impl Mark {
    fn of(p: &ConicProgram) -> Self {
        let rsoc = p
            .cones()
            .iter()
            .filter(|c| matches!(c, crate::conic::Cone::Rotated { .. }))
            .count();
        Mark {
            vars: p.num_vars(),
            binaries: p.num_binaries(),
            rows: p.rows().len(),
            soc: p.cones().len() - rsoc,
            rsoc,
        }
    }
}

impl Manifest {
    fn record(&mut self, family: &str, before: Mark, program: &ConicProgram) -> Mark {
        let after = Mark::of(program);
        self.families
            .entry(family.to_string())
            .or_default()
            .add(FamilyCount {
                vars: after.vars - before.vars,
                binaries: after.binaries - before.binaries,
                rows: after.rows - before.rows,
                soc: after.soc - before.soc,
                rsoc: after.rsoc - before.rsoc,
            });
        after
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageVars {
    pub charge: VarId,
    pub discharge: VarId,
    pub soc: VarId,
    pub h_si: VarId,
    pub constant_power: VarId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVars {
    pub handles: FrequencyHandles,
    pub rocof: RowId,
    pub steady: ConeId,
    pub nadir: Option<NadirBlock>,
    /// `R >= dP_Lmu + xi sigma`, present with the nadir block.
    pub pfr_cover: Option<RowId>,
}

/// Handles of one `(t, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodVars {
    pub gen_on: Vec<VarId>,
    pub gen_startup: Vec<VarId>,
    pub gen_p: Vec<VarId>,
    pub gen_q: Vec<VarId>,
    pub gen_pfr: Vec<VarId>,
    pub storage: Vec<StorageVars>,
    pub wind_p: Vec<VarId>,
    pub wind_h: Vec<VarId>,
    pub pv_p: Vec<VarId>,
    pub shed_p: Vec<VarId>,
    pub shed_q: Vec<VarId>,
    /// Epigraph of `shed_q^2`.
    pub shed_q_sq: Vec<VarId>,
    pub bus_w: Vec<VarId>,
    pub branch_c: Vec<VarId>,
    pub branch_s: Vec<VarId>,
    pub import_p: VarId,
    pub import_q: VarId,
    pub inertia: VarId,
    pub pfr: VarId,
    pub shed_mean: VarId,
    pub constant_power: Option<VarId>,
    /// Pre-event load damping `D_0` (MW/Hz).
    pub d0: f64,
    pub frequency: Option<FrequencyVars>,
}

/// Program plus everything needed to read a point back.
#[derive(Debug, Clone)]
pub struct ScheduleModel {
    pub program: ConicProgram,
    /// Indexed `[t][s]`.
    pub periods: Vec<Vec<PeriodVars>>,
    pub manifest: Manifest,
    pub options: BuildOptions,
    /// Worst-case disturbance used for big-M sizing (MW).
    pub dpl_max: f64,
}

impl ScheduleModel {
    pub fn horizon(&self) -> usize {
        self.periods.len()
    }

    pub fn num_scenarios(&self) -> usize {
        self.periods.first().map_or(0, Vec::len)
    }
}

fn check_scenarios(case: &NetworkCase, sc: &ScenarioSet) -> Result<(), SchedError> {
    let bad = |m: String| Err(SchedError::Scenario(m));
    if !(sc.dt_h > 0.0) {
        return bad(format!("period length {} h is not positive", sc.dt_h));
    }
    if sc.scenarios.is_empty() {
        return bad("no scenarios".into());
    }
    if (sc.probability_sum() - 1.0).abs() > 1e-6 {
        return bad(format!("probabilities sum to {}", sc.probability_sum()));
    }
    let horizon = sc.horizon();
    for s in &sc.scenarios {
        if s.periods.len() != horizon {
            return bad(format!(
                "scenario `{}` has {} periods, expected {horizon}",
                s.id,
                s.periods.len()
            ));
        }
        for (t, snap) in s.periods.iter().enumerate() {
            if snap.load_p.len() != case.loads.len()
                || snap.load_q.len() != case.loads.len()
                || snap.wind_mw.len() != case.wind.len()
                || snap.wind_h_max.len() != case.wind.len()
                || snap.pv_mw.len() != case.pv.len()
            {
                return bad(format!(
                    "scenario `{}` period {t} does not match the case entities",
                    s.id
                ));
            }
        }
    }
    Ok(())
}

/// Worst-case islanding disturbance for big-M sizing.
pub fn worst_disturbance(case: &NetworkCase, params: &DrccParams) -> f64 {
    params
        .dpl_max_mw
        .unwrap_or_else(|| case.pcc.as_ref().map_or(0.0, |p| p.s_max_mva))
}

/// Whether any islanding disturbance is possible at all.
fn islanding_possible(case: &NetworkCase) -> bool {
    case.pcc.as_ref().is_some_and(|p| p.s_max_mva > 0.0)
}

fn clean(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect()
}

/// Assemble the scheduling program.
pub fn build_model(
    case: &NetworkCase,
    scenarios: &ScenarioSet,
    options: &BuildOptions,
) -> Result<ScheduleModel, SchedError> {
    let diags = validate_case(case);
    if !diags.is_empty() {
        return Err(SchedError::Case(diags));
    }
    check_scenarios(case, scenarios)?;
    options.validate()?;
    let findings = infeasibility_precheck(case, scenarios, options)?;
    if !findings.is_empty() {
        return Err(SchedError::Infeasible(findings));
    }

    let mut p = ConicProgram::new();
    let mut manifest = Manifest::default();
    let horizon = scenarios.horizon();
    let ns = scenarios.scenarios.len();
    let dt = scenarios.dt_h;
    let base = case.base_mva;
    let f0 = case.frequency.nominal_hz;
    let limits = &case.frequency;
    let dpl_max = worst_disturbance(case, &options.drcc);
    let with_freq = options.frequency_constraints && islanding_possible(case);
    let si = options.synthetic_inertia;

    // Slow-unit commitment is first-stage: one y/z per period.
    let mut mark = Mark::of(&p);
    let mut slow: BTreeMap<(usize, usize), (VarId, VarId)> = BTreeMap::new();
    for (g, unit) in case.generators.iter().enumerate() {
        if unit.class != GenClass::Slow {
            continue;
        }
        for t in 0..horizon {
            let id = clean(&unit.id);
            let y = p.add_binary(&format!("y_{id}_t{t}"))?;
            p.set_priority(y, 2)?;
            let z = p.add_continuous(&format!("z_{id}_t{t}"), 0.0, 1.0)?;
            slow.insert((g, t), (y, z));
        }
        let ys: Vec<VarId> = (0..horizon).map(|t| slow[&(g, t)].0).collect();
        let zs: Vec<VarId> = (0..horizon).map(|t| slow[&(g, t)].1).collect();
        add_commitment_logic(&mut p, unit, &ys, &zs, &clean(&unit.id))?;
    }
    mark = manifest.record("commitment", mark, &p);

    let mut periods: Vec<Vec<PeriodVars>> = vec![Vec::with_capacity(ns); horizon];
    // Fast-unit commitment and storage chains run along t within a scenario.
    for s in 0..ns {
        let mut fast_y: Vec<Vec<VarId>> = vec![vec![]; case.generators.len()];
        let mut fast_z: Vec<Vec<VarId>> = vec![vec![]; case.generators.len()];
        for t in 0..horizon {
            let snap = scenarios.snapshot(t, s);
            let tag = format!("t{t}_s{s}");
            let prob = scenarios.scenarios[s].probability;

            // Commitment and dispatch of synchronous units.
            let mut gen_on = vec![];
            let mut gen_startup = vec![];
            for (g, unit) in case.generators.iter().enumerate() {
                let (y, z) = match unit.class {
                    GenClass::Slow => slow[&(g, t)],
                    GenClass::Fast => {
                        let id = clean(&unit.id);
                        let y = p.add_binary(&format!("y_{id}_{tag}"))?;
                        p.set_priority(y, 1)?;
                        let z = p.add_continuous(&format!("z_{id}_{tag}"), 0.0, 1.0)?;
                        fast_y[g].push(y);
                        fast_z[g].push(z);
                        (y, z)
                    }
                };
                gen_on.push(y);
                gen_startup.push(z);
            }
            mark = manifest.record("commitment", mark, &p);

            let mut gen_p = vec![];
            let mut gen_q = vec![];
            let mut gen_pfr = vec![];
            for (g, unit) in case.generators.iter().enumerate() {
                let id = clean(&unit.id);
                let y = gen_on[g];
                let pg = p.add_continuous(&format!("p_{id}_{tag}"), 0.0, unit.p_max)?;
                let qg = p.add_continuous(
                    &format!("q_{id}_{tag}"),
                    unit.q_min.min(0.0),
                    unit.q_max.max(0.0),
                )?;
                let rg =
                    p.add_continuous(&format!("r_{id}_{tag}"), 0.0, unit.pfr_max.min(unit.p_max))?;
                p.add_row(
                    &format!("pmin_{id}_{tag}"),
                    AffineExpr::var(pg).with_term(y, -unit.p_min),
                    Sense::Ge,
                    0.0,
                )?;
                p.add_row(
                    &format!("pmax_{id}_{tag}"),
                    AffineExpr::var(pg).with_term(y, -unit.p_max),
                    Sense::Le,
                    0.0,
                )?;
                p.add_row(
                    &format!("qmin_{id}_{tag}"),
                    AffineExpr::var(qg).with_term(y, -unit.q_min),
                    Sense::Ge,
                    0.0,
                )?;
                p.add_row(
                    &format!("qmax_{id}_{tag}"),
                    AffineExpr::var(qg).with_term(y, -unit.q_max),
                    Sense::Le,
                    0.0,
                )?;
                p.add_row(
                    &format!("rmax_{id}_{tag}"),
                    AffineExpr::var(rg).with_term(y, -unit.pfr_max),
                    Sense::Le,
                    0.0,
                )?;
                p.add_row(
                    &format!("rhead_{id}_{tag}"),
                    AffineExpr::var(rg)
                        .with_term(pg, 1.0)
                        .with_term(y, -unit.p_max),
                    Sense::Le,
                    0.0,
                )?;
                gen_p.push(pg);
                gen_q.push(qg);
                gen_pfr.push(rg);
            }
            mark = manifest.record("generation", mark, &p);

            // Storage.
            let rocof_lim = limits.rocof_hzps;
            let mut storage = vec![];
            for (b, unit) in case.storage.iter().enumerate() {
                let id = clean(&unit.id);
                let ch = p.add_continuous(&format!("pch_{id}_{tag}"), 0.0, -unit.p_charge_max)?;
                let dch =
                    p.add_continuous(&format!("pdch_{id}_{tag}"), 0.0, unit.p_discharge_max)?;
                let soc =
                    p.add_continuous(&format!("soc_{id}_{tag}"), unit.soc_min, unit.soc_max)?;
                let h_cap = if si && with_freq {
                    (unit.p_discharge_max - unit.p_charge_max) / (2.0 * rocof_lim)
                } else {
                    0.0
                };
                let h = p.add_continuous(&format!("hsi_{id}_{tag}"), 0.0, h_cap)?;
                let pc_cap = if options.constant_power && with_freq {
                    unit.p_discharge_max - unit.p_charge_max
                } else {
                    0.0
                };
                let pc = p.add_continuous(&format!("dpc_{id}_{tag}"), 0.0, pc_cap)?;
                let net = AffineExpr::var(dch).with_term(ch, -1.0);
                let si_rule = net.clone().with_term(h, 2.0 * rocof_lim);
                p.add_row(
                    &format!("si_hi_{id}_{tag}"),
                    si_rule.clone(),
                    Sense::Le,
                    unit.p_discharge_max,
                )?;
                p.add_row(
                    &format!("si_lo_{id}_{tag}"),
                    si_rule,
                    Sense::Ge,
                    unit.p_charge_max,
                )?;
                let pc_rule = net.with_term(pc, 1.0);
                p.add_row(
                    &format!("pc_hi_{id}_{tag}"),
                    pc_rule.clone(),
                    Sense::Le,
                    unit.p_discharge_max,
                )?;
                p.add_row(
                    &format!("pc_lo_{id}_{tag}"),
                    pc_rule,
                    Sense::Ge,
                    unit.p_charge_max,
                )?;
                p.add_row(
                    &format!("pc_energy_{id}_{tag}"),
                    AffineExpr::scaled(pc, unit.constant_power_window_s / 3600.0)
                        .with_term(soc, -unit.energy_mwh),
                    Sense::Le,
                    0.0,
                )?;
                // E soc_t - E soc_{t-1} - (eta ch - dch / eta) dt = 0
                let mut rec = AffineExpr::scaled(soc, unit.energy_mwh)
                    .with_term(ch, -unit.efficiency * dt)
                    .with_term(dch, dt / unit.efficiency);
                let rhs = if t == 0 {
                    unit.energy_mwh * unit.soc_init
                } else {
                    let prev: &StorageVars = &periods[t - 1][s].storage[b];
                    rec.add_term(prev.soc, -unit.energy_mwh);
                    0.0
                };
                p.add_row(&format!("soc_rec_{id}_{tag}"), rec, Sense::Eq, rhs)?;
                if t + 1 == horizon {
                    p.add_row(&format!("soc_end_{id}_s{s}"), soc, Sense::Eq, unit.soc_init)?;
                }
                storage.push(StorageVars {
                    charge: ch,
                    discharge: dch,
                    soc,
                    h_si: h,
                    constant_power: pc,
                });
            }
            mark = manifest.record("storage", mark, &p);

            // Renewables.
            let mut wind_p = vec![];
            let mut wind_h = vec![];
            for (w, unit) in case.wind.iter().enumerate() {
                let id = clean(&unit.id);
                wind_p.push(p.add_continuous(&format!("pw_{id}_{tag}"), 0.0, snap.wind_mw[w])?);
                let cap = if si && with_freq {
                    snap.wind_h_max[w]
                } else {
                    0.0
                };
                wind_h.push(p.add_continuous(&format!("hw_{id}_{tag}"), 0.0, cap)?);
            }
            let mut pv_p = vec![];
            for (m, unit) in case.pv.iter().enumerate() {
                let id = clean(&unit.id);
                pv_p.push(p.add_continuous(&format!("pm_{id}_{tag}"), 0.0, snap.pv_mw[m])?);
            }
            mark = manifest.record("renewables", mark, &p);

            // Scheduled load shedding.
            let mut shed_p = vec![];
            let mut shed_q = vec![];
            let mut shed_q_sq = vec![];
            for (l, load) in case.loads.iter().enumerate() {
                let id = clean(&load.id);
                let ql = snap.load_q[l];
                let pc = p.add_continuous(&format!("pc_{id}_{tag}"), 0.0, snap.load_p[l])?;
                let qc = p.add_continuous(&format!("qc_{id}_{tag}"), ql.min(0.0), ql.max(0.0))?;
                let sq = p.add_continuous(&format!("qc2_{id}_{tag}"), 0.0, f64::INFINITY)?;
                p.add_rotated_cone(
                    &format!("qc2_cone_{id}_{tag}"),
                    sq,
                    AffineExpr::constant(0.5),
                    vec![AffineExpr::var(qc)],
                )?;
                shed_p.push(pc);
                shed_q.push(qc);
                shed_q_sq.push(sq);
            }
            mark = manifest.record("loads", mark, &p);

            // Interchange with the main grid.
            let (s_pcc, min_imp) = case
                .pcc
                .as_ref()
                .map_or((0.0, 0.0), |c| (c.s_max_mva, c.min_import_mw));
            let import_p = p.add_continuous(&format!("pim_{tag}"), min_imp, s_pcc)?;
            let import_q = p.add_continuous(&format!("qim_{tag}"), -s_pcc, s_pcc)?;
            if s_pcc > 0.0 {
                p.add_soc(
                    &format!("pcc_rating_{tag}"),
                    AffineExpr::constant(s_pcc),
                    vec![AffineExpr::var(import_p), AffineExpr::var(import_q)],
                )?;
            }
            mark = manifest.record("pcc", mark, &p);

            // Network: W-matrix relaxation, flows, ratings, bus balance.
            let mut bus_w = vec![];
            for bus in &case.buses {
                bus_w.push(p.add_continuous(
                    &format!("w_{}_{tag}", bus.id),
                    bus.v_min * bus.v_min,
                    bus.v_max * bus.v_max,
                )?);
            }
            let nb = case.buses.len();
            let mut bal_p: Vec<AffineExpr> = vec![AffineExpr::default(); nb];
            let mut bal_q: Vec<AffineExpr> = vec![AffineExpr::default(); nb];
            let mut branch_c = vec![];
            let mut branch_s = vec![];
            for br in &case.branches {
                let id = clean(&br.id);
                let i = case.bus_index(br.from).expect("validated bus reference");
                let j = case.bus_index(br.to).expect("validated bus reference");
                let vmax = case.buses[i].v_max * case.buses[j].v_max;
                let c = p.add_continuous(&format!("wc_{id}_{tag}"), -vmax, vmax)?;
                let sn = p.add_continuous(&format!("ws_{id}_{tag}"), -vmax, vmax)?;
                p.add_rotated_cone(
                    &format!("rank_{id}_{tag}"),
                    bus_w[i],
                    AffineExpr::scaled(bus_w[j], 0.5),
                    vec![AffineExpr::var(c), AffineExpr::var(sn)],
                )?;
                let flows = branch_flow_exprs(br.g, br.b, bus_w[i], bus_w[j], c, sn, base);
                let rating = br.s_max_mva;
                let [pij, qij, pji, qji] = flows;
                p.add_soc(
                    &format!("rating_from_{id}_{tag}"),
                    AffineExpr::constant(rating),
                    vec![pij.clone(), qij.clone()],
                )?;
                p.add_soc(
                    &format!("rating_to_{id}_{tag}"),
                    AffineExpr::constant(rating),
                    vec![pji.clone(), qji.clone()],
                )?;
                bal_p[i].add_expr(&pij, -1.0);
                bal_q[i].add_expr(&qij, -1.0);
                bal_p[j].add_expr(&pji, -1.0);
                bal_q[j].add_expr(&qji, -1.0);
                branch_c.push(c);
                branch_s.push(sn);
            }
            for (i, bus) in case.buses.iter().enumerate() {
                bal_q[i].add_term(bus_w[i], bus.shunt_b * base);
            }
            let at = |bus: u32| case.bus_index(bus).expect("validated bus reference");
            for (g, unit) in case.generators.iter().enumerate() {
                bal_p[at(unit.bus)].add_term(gen_p[g], 1.0);
                bal_q[at(unit.bus)].add_term(gen_q[g], 1.0);
            }
            for (b, unit) in case.storage.iter().enumerate() {
                bal_p[at(unit.bus)].add_term(storage[b].discharge, 1.0);
                bal_p[at(unit.bus)].add_term(storage[b].charge, -1.0);
            }
            for (w, unit) in case.wind.iter().enumerate() {
                bal_p[at(unit.bus)].add_term(wind_p[w], 1.0);
            }
            for (m, unit) in case.pv.iter().enumerate() {
                bal_p[at(unit.bus)].add_term(pv_p[m], 1.0);
            }
            for (l, load) in case.loads.iter().enumerate() {
                let k = at(load.bus);
                bal_p[k].add_constant(-snap.load_p[l]);
                bal_p[k].add_term(shed_p[l], 1.0);
                bal_q[k].add_constant(-snap.load_q[l]);
                bal_q[k].add_term(shed_q[l], 1.0);
            }
            if let Some(pcc) = &case.pcc {
                bal_p[at(pcc.bus)].add_term(import_p, 1.0);
                bal_q[at(pcc.bus)].add_term(import_q, 1.0);
            }
            for (i, bus) in case.buses.iter().enumerate() {
                p.add_row(
                    &format!("bal_p_{}_{tag}", bus.id),
                    bal_p[i].clone(),
                    Sense::Eq,
                    0.0,
                )?;
                p.add_row(
                    &format!("bal_q_{}_{tag}", bus.id),
                    bal_q[i].clone(),
                    Sense::Eq,
                    0.0,
                )?;
            }
            mark = manifest.record("network", mark, &p);

            // Aggregates seen by the swing equation.
            let demand = snap.total_demand();
            let d0 = limits.damping.damping(demand);
            let inertia = p.add_continuous(&format!("h_{tag}"), 0.0, f64::INFINITY)?;
            let mut hdef = AffineExpr::var(inertia);
            for (g, unit) in case.generators.iter().enumerate() {
                hdef.add_term(gen_on[g], -unit.inertia_s * unit.p_max / f0);
            }
            for st in &storage {
                hdef.add_term(st.h_si, -1.0);
            }
            for &h in &wind_h {
                hdef.add_term(h, -1.0);
            }
            p.add_row(&format!("hdef_{tag}"), hdef, Sense::Eq, 0.0)?;
            let pfr = p.add_continuous(&format!("r_{tag}"), 0.0, f64::INFINITY)?;
            let mut rdef = AffineExpr::var(pfr);
            for &r in &gen_pfr {
                rdef.add_term(r, -1.0);
            }
            p.add_row(&format!("rdef_{tag}"), rdef, Sense::Eq, 0.0)?;
            let shed_cap: f64 = case
                .loads
                .iter()
                .enumerate()
                .map(|(l, load)| load.noncritical_share * snap.load_p[l])
                .sum();
            let shed_cap = if with_freq { shed_cap } else { 0.0 };
            let shed_mean = p.add_continuous(&format!("dpd_{tag}"), 0.0, shed_cap)?;
            p.add_row(
                &format!("dpd_le_loss_{tag}"),
                AffineExpr::var(shed_mean).with_term(import_p, -1.0),
                Sense::Le,
                0.0,
            )?;
            let constant_power = if storage.is_empty() {
                None
            } else {
                let v = p.add_continuous(&format!("dpc_{tag}"), 0.0, f64::INFINITY)?;
                let mut def = AffineExpr::var(v);
                for st in &storage {
                    def.add_term(st.constant_power, -1.0);
                }
                p.add_row(&format!("dpc_def_{tag}"), def, Sense::Eq, 0.0)?;
                Some(v)
            };
            mark = manifest.record("aggregates", mark, &p);

            let frequency = if with_freq {
                let handles = FrequencyHandles {
                    inertia,
                    pfr,
                    wind_si: wind_h
                        .iter()
                        .zip(&case.wind)
                        .map(|(&h, w)| (h, w.gamma))
                        .collect(),
                    shed_mean,
                    loss: import_p,
                    constant_power,
                };
                let ctx = BlockContext {
                    d0,
                    dpl_max,
                    tag: tag.clone(),
                };
                let rocof = build_rocof_constraint(&mut p, &handles, &options.drcc, limits, &tag)?;
                mark = manifest.record("rocof", mark, &p);
                let steady = build_ss_constraint(&mut p, &handles, &options.drcc, limits, &ctx)?;
                mark = manifest.record("steady_state", mark, &p);
                let nadir = if options.nadir {
                    let block = build_nadir_block(&mut p, &handles, &options.drcc, limits, &ctx)?;
                    let cover = build_pfr_cover_constraint(&mut p, &handles, &options.drcc, &tag)?;
                    mark = manifest.record("nadir", mark, &p);
                    Some((block, cover))
                } else {
                    None
                };
                let (nadir, pfr_cover) = nadir.unzip();
                Some(FrequencyVars {
                    handles,
                    rocof,
                    steady,
                    nadir,
                    pfr_cover,
                })
            } else {
                None
            };

            // Objective terms.
            for (g, unit) in case.generators.iter().enumerate() {
                match unit.class {
                    GenClass::Fast => {
                        p.add_objective_term(gen_startup[g], prob * unit.startup_cost);
                        p.add_objective_term(gen_on[g], prob * dt * unit.running_cost);
                    }
                    GenClass::Slow => {
                        if s == 0 {
                            // shared across scenarios, sum of probabilities is one
                            p.add_objective_term(gen_startup[g], unit.startup_cost);
                        }
                        p.add_objective_term(gen_p[g], prob * dt * unit.running_cost);
                    }
                }
            }
            for (l, load) in case.loads.iter().enumerate() {
                p.add_objective_term(shed_p[l], prob * dt * load.voll);
                p.add_objective_term(shed_q_sq[l], prob * dt * load.voll);
            }
            if let Some(pcc) = &case.pcc {
                if pcc.import_price != 0.0 {
                    p.add_objective_term(import_p, prob * dt * pcc.import_price);
                }
            }

            periods[t].push(PeriodVars {
                gen_on,
                gen_startup,
                gen_p,
                gen_q,
                gen_pfr,
                storage,
                wind_p,
                wind_h,
                pv_p,
                shed_p,
                shed_q,
                shed_q_sq,
                bus_w,
                branch_c,
                branch_s,
                import_p,
                import_q,
                inertia,
                pfr,
                shed_mean,
                constant_power,
                d0,
                frequency,
            });
        }
        for (g, unit) in case.generators.iter().enumerate() {
            if unit.class == GenClass::Fast {
                let id = format!("{}_s{s}", clean(&unit.id));
                add_commitment_logic(&mut p, unit, &fast_y[g], &fast_z[g], &id)?;
            }
        }
        mark = manifest.record("commitment", mark, &p);
    }

    Ok(ScheduleModel {
        program: p,
        periods,
        manifest,
        options: options.clone(),
        dpl_max,
    })
}

/// `[p_ij, q_ij, p_ji, q_ji]` in MW / MVAr for a series admittance `g + jb`
/// and `W_ij = c + j s`.
fn branch_flow_exprs(
    g: f64,
    b: f64,
    wi: VarId,
    wj: VarId,
    c: VarId,
    s: VarId,
    base: f64,
) -> [AffineExpr; 4] {
    let e =
        |terms: &[(VarId, f64)]| AffineExpr::from_terms(terms.iter().map(|&(v, k)| (v, k * base)));
    [
        e(&[(wi, g), (c, -g), (s, -b)]),
        e(&[(wi, -b), (c, b), (s, -g)]),
        e(&[(wj, g), (c, -g), (s, b)]),
        e(&[(wj, -b), (c, b), (s, g)]),
    ]
}

/// Flow values for a point, same order as [`branch_flow_exprs`].
pub(crate) fn branch_flows(
    g: f64,
    b: f64,
    wi: f64,
    wj: f64,
    c: f64,
    s: f64,
    base: f64,
) -> [f64; 4] {
    [
        base * (g * (wi - c) - b * s),
        base * (-b * (wi - c) - g * s),
        base * (g * (wj - c) + b * s),
        base * (-b * (wj - c) + g * s),
    ]
}

/// Start-up detection and minimum up/down times along one commitment chain.
fn add_commitment_logic(
    p: &mut ConicProgram,
    unit: &crate::netdata::SgUnit,
    y: &[VarId],
    z: &[VarId],
    id: &str,
) -> Result<(), ConicError> {
    let init = if unit.initial_on { 1.0 } else { 0.0 };
    for t in 0..y.len() {
        // z_t >= y_t - y_{t-1}
        let mut e = AffineExpr::var(z[t]).with_term(y[t], -1.0);
        let rhs = if t == 0 {
            -init
        } else {
            e.add_term(y[t - 1], 1.0);
            0.0
        };
        p.add_row(&format!("su_{id}_t{t}"), e, Sense::Ge, rhs)?;
        // Started within the last U periods => still on.
        let up = unit.min_up_h as usize;
        if up > 1 {
            let mut e = AffineExpr::var(y[t]);
            for tau in t.saturating_sub(up - 1)..=t {
                e.add_term(z[tau], -1.0);
            }
            p.add_row(&format!("minup_{id}_t{t}"), e, Sense::Ge, 0.0)?;
        }
        // Started within the last Dn periods => was not off-switched in between,
        // i.e. sum z <= 1 - y_{t-Dn}.
        let down = unit.min_down_h as usize;
        if down > 1 {
            let mut e = AffineExpr::default();
            for tau in t.saturating_sub(down - 1)..=t {
                e.add_term(z[tau], 1.0);
            }
            let rhs = if t >= down {
                e.add_term(y[t - down], 1.0);
                1.0
            } else {
                1.0 - init
            };
            p.add_row(&format!("mindown_{id}_t{t}"), e, Sense::Le, rhs)?;
        }
    }
    Ok(())
}
