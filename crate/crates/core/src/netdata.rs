//! Microgrid case and scenario data.
//!
//! A case is a single JSON document (`fcsched-case/1`) describing buses,
//! branches and the units attached to them. Scenarios are a long-format CSV
//! with header `scenario,period,entity,kind,value`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CASE_SCHEMA: &str = "fcsched-case/1";

/// Tolerance on the sum of scenario probabilities.
pub const PROBABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("reference error: {entity} refers to unknown {target}")]
    Reference { entity: String, target: String },
    #[error("bound error: {0}")]
    Bound(Diagnostic),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown entity `{entity}` for kind `{kind}`")]
    UnknownEntity { entity: String, kind: String },
    #[error("scenario probabilities sum to {sum}, expected 1")]
    ProbabilitySum { sum: f64 },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid value: {0}")]
    Value(String),
    #[error("total demand {demand_mw} MW in scenario {scenario} period {period} is outside the case range [{lo}, {hi}]")]
    DemandOutOfRange {
        scenario: String,
        period: usize,
        demand_mw: f64,
        lo: f64,
        hi: f64,
    },
}

/// One violated rule on one entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub entity: String,
    pub rule: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: u32,
    pub v_min: f64,
    pub v_max: f64,
    /// Shunt susceptance in p.u.
    #[serde(default)]
    pub shunt_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub id: String,
    pub from: u32,
    pub to: u32,
    /// Series admittance `g + jb` in p.u.
    pub g: f64,
    pub b: f64,
    pub s_max_mva: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenClass {
    /// Fast-start unit, committed per scenario, charged per committed hour.
    Fast,
    /// Slow unit, committed before uncertainty is realised, charged per MWh.
    Slow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgUnit {
    pub id: String,
    pub bus: u32,
    pub class: GenClass,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Inertia time constant in seconds.
    pub inertia_s: f64,
    /// Largest primary response this unit can deliver by `T_d` (MW).
    pub pfr_max: f64,
    pub startup_cost: f64,
    /// `c_R1` ($/h committed) for fast units, `c_R2` ($/MWh) for slow units.
    pub running_cost: f64,
    #[serde(default)]
    pub min_up_h: u32,
    #[serde(default)]
    pub min_down_h: u32,
    #[serde(default)]
    pub initial_on: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageUnit {
    pub id: String,
    pub bus: u32,
    /// Charging limit, nonpositive (MW).
    pub p_charge_max: f64,
    /// Discharging limit, nonnegative (MW).
    pub p_discharge_max: f64,
    pub energy_mwh: f64,
    pub efficiency: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_init: f64,
    /// Window over which the post-nadir constant power is held (s).
    pub constant_power_window_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindUnit {
    pub id: String,
    pub bus: u32,
    pub capacity_mw: f64,
    /// Damping penalty `gamma_w` in (MW/Hz) per (MWs/Hz)^2.
    pub gamma: f64,
    /// Default synthetic inertia cap, used when scenarios do not override it.
    pub h_si_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvUnit {
    pub id: String,
    pub bus: u32,
    pub capacity_mw: f64,
    #[serde(default)]
    pub storage: Option<String>,
}

fn default_share() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadPoint {
    pub id: String,
    pub bus: u32,
    #[serde(default = "default_share")]
    pub noncritical_share: f64,
    pub voll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pcc {
    pub bus: u32,
    pub s_max_mva: f64,
    #[serde(default)]
    pub min_import_mw: f64,
    #[serde(default)]
    pub import_price: f64,
}

/// Rule for the pre-event load damping `D_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingRule {
    /// `D_0 = fraction * total demand` (MW/Hz).
    FractionOfDemand(f64),
    /// Fixed `D_0` in MW/Hz.
    Constant(f64),
}

impl Default for DampingRule {
    fn default() -> Self {
        DampingRule::FractionOfDemand(0.005)
    }
}

impl DampingRule {
    pub fn damping(&self, total_demand_mw: f64) -> f64 {
        match *self {
            DampingRule::FractionOfDemand(frac) => frac * total_demand_mw,
            DampingRule::Constant(d) => d,
        }
    }
}

fn default_f0() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyLimits {
    pub nadir_hz: f64,
    pub steady_state_hz: f64,
    pub rocof_hzps: f64,
    #[serde(default = "default_f0")]
    pub nominal_hz: f64,
    pub pfr_delivery_s: f64,
    #[serde(default)]
    pub damping: DampingRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCase {
    pub schema: String,
    pub name: String,
    #[serde(default = "default_base")]
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<SgUnit>,
    #[serde(default)]
    pub storage: Vec<StorageUnit>,
    #[serde(default)]
    pub wind: Vec<WindUnit>,
    #[serde(default)]
    pub pv: Vec<PvUnit>,
    pub loads: Vec<LoadPoint>,
    pub pcc: Option<Pcc>,
    pub frequency: FrequencyLimits,
    #[serde(default)]
    pub demand_range_mw: Option<[f64; 2]>,
}

fn default_base() -> f64 {
    100.0
}

impl NetworkCase {
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn total_sg_capacity(&self) -> f64 {
        self.generators.iter().map(|g| g.p_max).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serialisation cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, CaseError> {
        let case = Self::parse_unchecked(text)?;
        check_references(&case)?;
        if let Some(first) = validate_case(&case).into_iter().next() {
            return Err(CaseError::Bound(first));
        }
        Ok(case)
    }

    /// Parse and check the schema only; [`validate_case`] lists the rest.
    pub fn parse_unchecked(text: &str) -> Result<Self, CaseError> {
        let case: NetworkCase =
            serde_json::from_str(text).map_err(|e| CaseError::Parse(e.to_string()))?;
        if case.schema != CASE_SCHEMA {
            return Err(CaseError::Parse(format!(
                "unsupported schema `{}`, expected `{CASE_SCHEMA}`",
                case.schema
            )));
        }
        Ok(case)
    }
}

pub fn load_case(path: impl AsRef<Path>) -> Result<NetworkCase, CaseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    NetworkCase::from_json(&text)
}

fn check_references(case: &NetworkCase) -> Result<(), CaseError> {
    let buses: HashSet<u32> = case.buses.iter().map(|b| b.id).collect();
    let dangling = |entity: String, bus: u32| -> Result<(), CaseError> {
        if buses.contains(&bus) {
            Ok(())
        } else {
            Err(CaseError::Reference {
                entity,
                target: format!("bus {bus}"),
            })
        }
    };
    for br in &case.branches {
        dangling(format!("branch {}", br.id), br.from)?;
        dangling(format!("branch {}", br.id), br.to)?;
    }
    for g in &case.generators {
        dangling(format!("generator {}", g.id), g.bus)?;
    }
    for s in &case.storage {
        dangling(format!("storage {}", s.id), s.bus)?;
    }
    for w in &case.wind {
        dangling(format!("wind {}", w.id), w.bus)?;
    }
    for m in &case.pv {
        dangling(format!("pv {}", m.id), m.bus)?;
        if let Some(st) = &m.storage {
            if !case.storage.iter().any(|s| &s.id == st) {
                return Err(CaseError::Reference {
                    entity: format!("pv {}", m.id),
                    target: format!("storage {st}"),
                });
            }
        }
    }
    for l in &case.loads {
        dangling(format!("load {}", l.id), l.bus)?;
    }
    if let Some(pcc) = &case.pcc {
        dangling("pcc".to_string(), pcc.bus)?;
    }
    Ok(())
}

/// Check every type invariant and cross-reference. Empty means the case is
/// well formed.
pub fn validate_case(case: &NetworkCase) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |entity: String, rule: &str| {
        out.push(Diagnostic {
            entity,
            rule: rule.to_string(),
        })
    };
    let finite = |x: f64| x.is_finite();

    let mut seen_bus = HashSet::new();
    for b in &case.buses {
        let e = format!("bus {}", b.id);
        if !seen_bus.insert(b.id) {
            push(e.clone(), "duplicate bus id");
        }
        if !(b.v_min > 0.0 && b.v_min < b.v_max && finite(b.v_max)) {
            push(e.clone(), "requires 0 < v_min < v_max");
        }
        if !finite(b.shunt_b) {
            push(e, "shunt susceptance must be finite");
        }
    }
    let buses: HashSet<u32> = case.buses.iter().map(|b| b.id).collect();
    let mut ids = HashSet::new();
    let mut unique = |kind: &str, id: &str, out: &mut Vec<Diagnostic>| {
        if !ids.insert(format!("{kind}:{id}")) {
            out.push(Diagnostic {
                entity: format!("{kind} {id}"),
                rule: "duplicate id".into(),
            });
        }
    };
    let mut refs: Vec<(String, u32)> = Vec::new();

    for br in &case.branches {
        let e = format!("branch {}", br.id);
        unique("branch", &br.id, &mut out);
        if !(br.s_max_mva > 0.0) {
            out.push(Diagnostic {
                entity: e.clone(),
                rule: "requires s_max > 0".into(),
            });
        }
        if br.from == br.to {
            out.push(Diagnostic {
                entity: e.clone(),
                rule: "endpoints must differ".into(),
            });
        }
        if !(finite(br.g) && finite(br.b)) || (br.g == 0.0 && br.b == 0.0) {
            out.push(Diagnostic {
                entity: e.clone(),
                rule: "series admittance must be finite and nonzero".into(),
            });
        }
        refs.push((e.clone(), br.from));
        refs.push((e, br.to));
    }
    for g in &case.generators {
        let e = format!("generator {}", g.id);
        unique("generator", &g.id, &mut out);
        let mut rule = |r: &str| {
            out.push(Diagnostic {
                entity: e.clone(),
                rule: r.into(),
            })
        };
        if !(g.p_min >= 0.0 && g.p_min <= g.p_max) {
            rule("requires 0 <= p_min <= p_max");
        }
        if !(g.q_min <= g.q_max) {
            rule("requires q_min <= q_max");
        }
        if !(g.inertia_s >= 0.0) {
            rule("requires inertia >= 0");
        }
        if !(g.pfr_max >= 0.0) {
            rule("requires pfr_max >= 0");
        }
        if !(g.startup_cost >= 0.0 && g.running_cost >= 0.0) {
            rule("costs must be nonnegative");
        }
        refs.push((e.clone(), g.bus));
    }
    for s in &case.storage {
        let e = format!("storage {}", s.id);
        unique("storage", &s.id, &mut out);
        let mut rule = |r: &str| {
            out.push(Diagnostic {
                entity: e.clone(),
                rule: r.into(),
            })
        };
        if !(s.p_charge_max <= 0.0 && s.p_discharge_max >= 0.0) {
            rule("requires p_charge_max <= 0 <= p_discharge_max");
        }
        if !(s.soc_min < s.soc_max && s.soc_min >= 0.0 && s.soc_max <= 1.0) {
            rule("requires 0 <= soc_min < soc_max <= 1");
        } else if !(s.soc_init >= s.soc_min && s.soc_init <= s.soc_max) {
            rule("initial soc outside [soc_min, soc_max]");
        }
        if !(s.efficiency > 0.0 && s.efficiency <= 1.0) {
            rule("requires 0 < efficiency <= 1");
        }
        if !(s.energy_mwh > 0.0) {
            rule("requires energy capacity > 0");
        }
        if !(s.constant_power_window_s > 0.0) {
            rule("requires constant-power window > 0");
        }
        refs.push((e.clone(), s.bus));
    }
    for w in &case.wind {
        let e = format!("wind {}", w.id);
        unique("wind", &w.id, &mut out);
        if !(w.gamma >= 0.0) {
            out.push(Diagnostic {
                entity: e.clone(),
                rule: "requires gamma >= 0".into(),
            });
        }
        if !(w.h_si_max >= 0.0) {
            out.push(Diagnostic {
                entity: e.clone(),
                rule: "requires h_si_max >= 0".into(),
            });
        }
        if !(w.capacity_mw >= 0.0) {
            out.push(Diagnostic {
                entity: e.clone(),
                rule: "requires capacity >= 0".into(),
            });
        }
        refs.push((e, w.bus));
    }
    for m in &case.pv {
        let e = format!("pv {}", m.id);
        unique("pv", &m.id, &mut out);
        if !(m.capacity_mw >= 0.0) {
            out.push(Diagnostic {
                entity: e.clone(),
                rule: "requires capacity >= 0".into(),
            });
        }
        if let Some(st) = &m.storage {
            if !case.storage.iter().any(|s| &s.id == st) {
                out.push(Diagnostic {
                    entity: e.clone(),
                    rule: format!("unknown storage {st}"),
                });
            }
        }
        refs.push((e, m.bus));
    }
    for l in &case.loads {
        let e = format!("load {}", l.id);
        unique("load", &l.id, &mut out);
        if !(0.0..=1.0).contains(&l.noncritical_share) {
            out.push(Diagnostic {
                entity: e.clone(),
                rule: "requires 0 <= noncritical share <= 1".into(),
            });
        }
        if !(l.voll >= 0.0) {
            out.push(Diagnostic {
                entity: e.clone(),
                rule: "requires voll >= 0".into(),
            });
        }
        refs.push((e, l.bus));
    }
    if let Some(pcc) = &case.pcc {
        if !(pcc.s_max_mva >= 0.0) {
            out.push(Diagnostic {
                entity: "pcc".into(),
                rule: "requires s_max >= 0".into(),
            });
        }
        if !(pcc.min_import_mw >= 0.0 && pcc.min_import_mw <= pcc.s_max_mva) {
            out.push(Diagnostic {
                entity: "pcc".into(),
                rule: "requires 0 <= min_import <= s_max".into(),
            });
        }
        refs.push(("pcc".into(), pcc.bus));
    }
    for (entity, bus) in refs {
        if !buses.contains(&bus) {
            out.push(Diagnostic {
                entity,
                rule: format!("unknown bus {bus}"),
            });
        }
    }

    let f = &case.frequency;
    let e = "frequency".to_string();
    for (name, v) in [
        ("nadir limit", f.nadir_hz),
        ("steady-state limit", f.steady_state_hz),
        ("rocof limit", f.rocof_hzps),
        ("nominal frequency", f.nominal_hz),
        ("pfr delivery time", f.pfr_delivery_s),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            out.push(Diagnostic {
                entity: e.clone(),
                rule: format!("{name} must be positive"),
            });
        }
    }
    let damping_ok = match f.damping {
        DampingRule::FractionOfDemand(x) | DampingRule::Constant(x) => x > 0.0 && x.is_finite(),
    };
    if !damping_ok {
        out.push(Diagnostic {
            entity: e.clone(),
            rule: "damping must be positive".into(),
        });
    }
    if f.steady_state_hz > f.nadir_hz {
        out.push(Diagnostic {
            entity: e,
            rule: "steady-state limit must not exceed nadir limit".into(),
        });
    }
    if case.base_mva <= 0.0 {
        out.push(Diagnostic {
            entity: "case".into(),
            rule: "base_mva must be positive".into(),
        });
    }
    out
}

/// Realised data for one (scenario, period).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Active demand per load, indexed like `NetworkCase::loads` (MW).
    pub load_p: Vec<f64>,
    /// Reactive demand per load (MVAr).
    pub load_q: Vec<f64>,
    /// Available wind power per wind unit (MW).
    pub wind_mw: Vec<f64>,
    /// Available PV power per PV unit (MW).
    pub pv_mw: Vec<f64>,
    /// Synthetic inertia cap per wind unit (MWs/Hz).
    pub wind_h_max: Vec<f64>,
}

impl Snapshot {
    pub fn total_demand(&self) -> f64 {
        self.load_p.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub probability: f64,
    /// One snapshot per period.
    pub periods: Vec<Snapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub dt_h: f64,
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn horizon(&self) -> usize {
        self.scenarios.first().map_or(0, |s| s.periods.len())
    }

    pub fn snapshot(&self, t: usize, s: usize) -> &Snapshot {
        &self.scenarios[s].periods[t]
    }

    pub fn probability_sum(&self) -> f64 {
        self.scenarios.iter().map(|s| s.probability).sum()
    }

    /// Keep only the first `periods` periods of every scenario.
    pub fn truncated(&self, periods: usize) -> ScenarioSet {
        let mut out = self.clone();
        for s in &mut out.scenarios {
            s.periods.truncate(periods);
        }
        out
    }

    /// Write the long-format CSV this set was (or could have been) read from.
    pub fn to_csv(&self, case: &NetworkCase) -> String {
        let mut out = String::from("scenario,period,entity,kind,value\n");
        out.push_str(&format!("*,*,*,dt_h,{}\n", self.dt_h));
        for sc in &self.scenarios {
            out.push_str(&format!("{},*,*,probability,{}\n", sc.id, sc.probability));
        }
        for sc in &self.scenarios {
            for (t, snap) in sc.periods.iter().enumerate() {
                for (i, l) in case.loads.iter().enumerate() {
                    out.push_str(&format!("{},{t},{},p_mw,{}\n", sc.id, l.id, snap.load_p[i]));
                    out.push_str(&format!(
                        "{},{t},{},q_mvar,{}\n",
                        sc.id, l.id, snap.load_q[i]
                    ));
                }
                for (i, w) in case.wind.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{t},{},avail_mw,{}\n",
                        sc.id, w.id, snap.wind_mw[i]
                    ));
                    out.push_str(&format!(
                        "{},{t},{},h_si_max,{}\n",
                        sc.id, w.id, snap.wind_h_max[i]
                    ));
                }
                for (i, m) in case.pv.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{t},{},avail_mw,{}\n",
                        sc.id, m.id, snap.pv_mw[i]
                    ));
                }
            }
        }
        out
    }
}

#[derive(Debug, Deserialize)]
struct ScenarioRow {
    scenario: String,
    period: String,
    entity: String,
    kind: String,
    value: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
enum Field {
    LoadP(usize),
    LoadQ(usize),
    Wind(usize),
    WindH(usize),
    Pv(usize),
}

pub fn load_scenarios(
    path: impl AsRef<Path>,
    case: &NetworkCase,
) -> Result<ScenarioSet, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenarios(&text, case)
}

/// Parse the long-format scenario CSV against `case`.
pub fn parse_scenarios(text: &str, case: &NetworkCase) -> Result<ScenarioSet, ScenarioError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| ScenarioError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let expected = ["scenario", "period", "entity", "kind", "value"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(ScenarioError::Parse {
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }

    let loads: HashMap<&str, usize> = case
        .loads
        .iter()
        .enumerate()
        .map(|(i, l)| (l.id.as_str(), i))
        .collect();
    let winds: HashMap<&str, usize> = case
        .wind
        .iter()
        .enumerate()
        .map(|(i, w)| (w.id.as_str(), i))
        .collect();
    let pvs: HashMap<&str, usize> = case
        .pv
        .iter()
        .enumerate()
        .map(|(i, m)| (m.id.as_str(), i))
        .collect();

    let mut dt_h = 1.0;
    let mut order: Vec<String> = Vec::new();
    let mut probs: HashMap<String, f64> = HashMap::new();
    let mut values: BTreeMap<(String, usize, Field), f64> = BTreeMap::new();
    let mut max_period: Option<usize> = None;

    for (i, rec) in reader.deserialize::<ScenarioRow>().enumerate() {
        let line = i + 2;
        let row = rec.map_err(|e| ScenarioError::Parse {
            line,
            message: e.to_string(),
        })?;
        if !row.value.is_finite() {
            return Err(ScenarioError::Value(format!(
                "non-finite value at line {line}"
            )));
        }
        match row.kind.as_str() {
            "dt_h" => {
                if !(row.value > 0.0) {
                    return Err(ScenarioError::Value("dt_h must be positive".into()));
                }
                dt_h = row.value;
                continue;
            }
            "probability" => {
                if !(0.0..=1.0).contains(&row.value) {
                    return Err(ScenarioError::Value(format!(
                        "probability {} of scenario {} outside [0,1]",
                        row.value, row.scenario
                    )));
                }
                if !order.contains(&row.scenario) {
                    order.push(row.scenario.clone());
                }
                probs.insert(row.scenario, row.value);
                continue;
            }
            _ => {}
        }
        let period: usize = row.period.parse().map_err(|_| ScenarioError::Parse {
            line,
            message: format!("period `{}` is not a nonnegative integer", row.period),
        })?;
        let unknown = || ScenarioError::UnknownEntity {
            entity: row.entity.clone(),
            kind: row.kind.clone(),
        };
        let field = match row.kind.as_str() {
            "p_mw" => Field::LoadP(*loads.get(row.entity.as_str()).ok_or_else(unknown)?),
            "q_mvar" => Field::LoadQ(*loads.get(row.entity.as_str()).ok_or_else(unknown)?),
            "h_si_max" => Field::WindH(*winds.get(row.entity.as_str()).ok_or_else(unknown)?),
            "avail_mw" => {
                if let Some(&w) = winds.get(row.entity.as_str()) {
                    Field::Wind(w)
                } else if let Some(&m) = pvs.get(row.entity.as_str()) {
                    Field::Pv(m)
                } else {
                    return Err(unknown());
                }
            }
            other => {
                return Err(ScenarioError::Parse {
                    line,
                    message: format!("unknown kind `{other}`"),
                })
            }
        };
        if row.value < 0.0 && !matches!(field, Field::LoadQ(_)) {
            return Err(ScenarioError::Value(format!(
                "negative {} for {} at line {line}",
                row.kind, row.entity
            )));
        }
        if !order.contains(&row.scenario) {
            order.push(row.scenario.clone());
        }
        max_period = Some(max_period.map_or(period, |m: usize| m.max(period)));
        values.insert((row.scenario, period, field), row.value);
    }

    let horizon = max_period.map_or(0, |m| m + 1);
    let mut scenarios = Vec::with_capacity(order.len());
    for id in &order {
        let probability = *probs.get(id).ok_or_else(|| {
            ScenarioError::LengthMismatch(format!("scenario {id} has no probability row"))
        })?;
        let mut periods = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let get = |field: Field, required: bool, default: f64| match values.get(&(
                id.clone(),
                t,
                field,
            )) {
                Some(v) => Ok(*v),
                None if required => Err(ScenarioError::LengthMismatch(format!(
                    "scenario {id} period {t}: missing {field:?}"
                ))),
                None => Ok(default),
            };
            let mut snap = Snapshot {
                load_p: Vec::with_capacity(case.loads.len()),
                load_q: Vec::with_capacity(case.loads.len()),
                wind_mw: Vec::with_capacity(case.wind.len()),
                pv_mw: Vec::with_capacity(case.pv.len()),
                wind_h_max: Vec::with_capacity(case.wind.len()),
            };
            for l in 0..case.loads.len() {
                snap.load_p.push(get(Field::LoadP(l), true, 0.0)?);
                snap.load_q.push(get(Field::LoadQ(l), false, 0.0)?);
            }
            for (w, unit) in case.wind.iter().enumerate() {
                snap.wind_mw.push(get(Field::Wind(w), true, 0.0)?);
                snap.wind_h_max
                    .push(get(Field::WindH(w), false, unit.h_si_max)?);
            }
            for m in 0..case.pv.len() {
                snap.pv_mw.push(get(Field::Pv(m), true, 0.0)?);
            }
            periods.push(snap);
        }
        scenarios.push(Scenario {
            id: id.clone(),
            probability,
            periods,
        });
    }
    if scenarios.is_empty() {
        return Err(ScenarioError::LengthMismatch("no scenarios".into()));
    }

    let set = ScenarioSet { dt_h, scenarios };
    let sum = set.probability_sum();
    if (sum - 1.0).abs() > PROBABILITY_TOL {
        return Err(ScenarioError::ProbabilitySum { sum });
    }
    if let Some([lo, hi]) = case.demand_range_mw {
        for sc in &set.scenarios {
            for (t, snap) in sc.periods.iter().enumerate() {
                let d = snap.total_demand();
                if d < lo - 1e-9 || d > hi + 1e-9 {
                    return Err(ScenarioError::DemandOutOfRange {
                        scenario: sc.id.clone(),
                        period: t,
                        demand_mw: d,
                        lo,
                        hi,
                    });
                }
            }
        }
    }
    Ok(set)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn one_bus_case() -> NetworkCase {
        NetworkCase {
            schema: CASE_SCHEMA.into(),
            name: "one-bus".into(),
            base_mva: 100.0,
            buses: vec![Bus {
                id: 1,
                v_min: 0.95,
                v_max: 1.05,
                shunt_b: 0.0,
            }],
            branches: vec![],
            generators: vec![SgUnit {
                id: "G1".into(),
                bus: 1,
                class: GenClass::Slow,
                p_min: 0.0,
                p_max: 100.0,
                q_min: -50.0,
                q_max: 50.0,
                inertia_s: 5.0,
                pfr_max: 20.0,
                startup_cost: 0.0,
                running_cost: 10.0,
                min_up_h: 0,
                min_down_h: 0,
                initial_on: true,
            }],
            storage: vec![],
            wind: vec![],
            pv: vec![],
            loads: vec![LoadPoint {
                id: "L1".into(),
                bus: 1,
                noncritical_share: 0.3,
                voll: 1000.0,
            }],
            pcc: None,
            frequency: FrequencyLimits {
                nadir_hz: 0.8,
                steady_state_hz: 0.5,
                rocof_hzps: 0.5,
                nominal_hz: 50.0,
                pfr_delivery_s: 10.0,
                damping: DampingRule::default(),
            },
            demand_range_mw: None,
        }
    }

    #[test]
    fn minimal_case_is_valid() {
        let case = one_bus_case();
        assert!(validate_case(&case).is_empty());
        let back = NetworkCase::from_json(&case.to_json()).unwrap();
        assert_eq!(back, case);
    }

    #[test]
    fn dangling_bus_is_reference_error() {
        let mut case = one_bus_case();
        case.loads[0].bus = 99;
        match NetworkCase::from_json(&case.to_json()) {
            Err(CaseError::Reference { entity, target }) => {
                assert_eq!(entity, "load L1");
                assert_eq!(target, "bus 99");
            }
            other => panic!("expected reference error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_document_is_parse_error() {
        assert!(matches!(
            NetworkCase::from_json("{\"schema\": "),
            Err(CaseError::Parse(_))
        ));
        let mut case = one_bus_case();
        case.schema = "something-else".into();
        assert!(matches!(
            NetworkCase::from_json(&case.to_json()),
            Err(CaseError::Parse(_))
        ));
    }

    #[test]
    fn inverted_soc_bounds_give_one_diagnostic() {
        let mut case = one_bus_case();
        case.storage.push(StorageUnit {
            id: "B1".into(),
            bus: 1,
            p_charge_max: -10.0,
            p_discharge_max: 10.0,
            energy_mwh: 30.0,
            efficiency: 0.9,
            soc_min: 0.9,
            soc_max: 0.85,
            soc_init: 0.87,
            constant_power_window_s: 600.0,
        });
        let diags = validate_case(&case);
        assert_eq!(diags.len(), 1, "{diags:?}");
        assert_eq!(diags[0].entity, "storage B1");
        assert!(matches!(
            NetworkCase::from_json(&case.to_json()),
            Err(CaseError::Bound(_))
        ));
    }

    #[test]
    fn zero_rating_branch_gives_one_diagnostic() {
        let mut case = one_bus_case();
        case.buses.push(Bus {
            id: 2,
            v_min: 0.95,
            v_max: 1.05,
            shunt_b: 0.0,
        });
        case.branches.push(Branch {
            id: "1-2".into(),
            from: 1,
            to: 2,
            g: 1.0,
            b: -5.0,
            s_max_mva: 0.0,
        });
        let diags = validate_case(&case);
        assert_eq!(diags.len(), 1, "{diags:?}");
        assert_eq!(diags[0].entity, "branch 1-2");
    }

    #[test]
    fn frequency_limit_ordering_checked() {
        let mut case = one_bus_case();
        case.frequency.steady_state_hz = 1.0;
        let diags = validate_case(&case);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].entity, "frequency");
    }

    fn two_scenario_csv(p2: f64) -> String {
        let mut s = String::from("scenario,period,entity,kind,value\n");
        s.push_str(&format!(
            "s1,*,*,probability,0.6\ns2,*,*,probability,{p2}\n"
        ));
        for sc in ["s1", "s2"] {
            for t in 0..24 {
                s.push_str(&format!("{sc},{t},L1,p_mw,{}\n", 50.0 + t as f64));
            }
        }
        s
    }

    #[test]
    fn scenarios_parse_and_sum_to_one() {
        let case = one_bus_case();
        let set = parse_scenarios(&two_scenario_csv(0.4), &case).unwrap();
        assert_eq!(set.scenarios.len(), 2);
        assert_eq!(set.horizon(), 24);
        assert!((set.probability_sum() - 1.0).abs() < 1e-12);
        assert_eq!(set.snapshot(3, 1).load_p[0], 53.0);
        assert_eq!(set.dt_h, 1.0);
        let again = parse_scenarios(&set.to_csv(&case), &case).unwrap();
        assert_eq!(again, set);
    }

    #[test]
    fn bad_probability_sum_rejected() {
        let case = one_bus_case();
        assert!(matches!(
            parse_scenarios(&two_scenario_csv(0.5), &case),
            Err(ScenarioError::ProbabilitySum { .. })
        ));
    }

    #[test]
    fn missing_period_is_length_mismatch() {
        let case = one_bus_case();
        let text = two_scenario_csv(0.4).replace("s2,23,L1,p_mw,73\n", "");
        assert!(matches!(
            parse_scenarios(&text, &case),
            Err(ScenarioError::LengthMismatch(_))
        ));
    }

    #[test]
    fn unknown_entity_rejected() {
        let case = one_bus_case();
        let text = two_scenario_csv(0.4) + "s1,0,L9,p_mw,3\n";
        assert!(matches!(
            parse_scenarios(&text, &case),
            Err(ScenarioError::UnknownEntity { .. })
        ));
    }

    #[test]
    fn demand_range_enforced() {
        let mut case = one_bus_case();
        case.demand_range_mw = Some([0.0, 60.0]);
        assert!(matches!(
            parse_scenarios(&two_scenario_csv(0.4), &case),
            Err(ScenarioError::DemandOutOfRange { .. })
        ));
    }
}
