use std::fmt;

use serde::{Deserialize, Serialize};

use super::{islanding_possible, BuildOptions, SchedError};
use crate::drcc::{pwl_coefficients, size_big_m, BlockContext};
use crate::netdata::{NetworkCase, ScenarioSet};

/// A constraint that no schedule can meet at one `(t, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecheckFinding {
    pub period: usize,
    pub scenario: usize,
    pub constraint: String,
    /// Best value any schedule can reach.
    pub reachable: f64,
    /// Value the constraint needs.
    pub required: f64,
}

impl fmt::Display for PrecheckFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t{} s{}: {} needs {:.6} but at most {:.6} is reachable",
            self.period, self.scenario, self.constraint, self.required, self.reachable
        )
    }
}

/// Interval bounds on the frequency aggregates and the energy balance,
/// reporting every `(t, s)` where even the most favourable values fail.
///
/// Only proves infeasibility; an empty result says nothing about
/// feasibility.
pub fn infeasibility_precheck(
    case: &NetworkCase,
    scenarios: &ScenarioSet,
    options: &BuildOptions,
) -> Result<Vec<PrecheckFinding>, SchedError> {
    let mut out = vec![];
    let lim = &case.frequency;
    let min_import = case.pcc.as_ref().map_or(0.0, |p| p.min_import_mw);
    let charge_cap: f64 = case.storage.iter().map(|b| -b.p_charge_max).sum();
    let si = options.synthetic_inertia;
    let h_sg: f64 = case
        .generators
        .iter()
        .map(|g| g.inertia_s * g.p_max / lim.nominal_hz)
        .sum();
    let h_storage: f64 = if si {
        case.storage
            .iter()
            .map(|b| (b.p_discharge_max - b.p_charge_max) / (2.0 * lim.rocof_hzps))
            .sum()
    } else {
        0.0
    };
    let r_max: f64 = case.generators.iter().map(|g| g.pfr_max.min(g.p_max)).sum();
    let pc_max: f64 = if options.constant_power {
        case.storage
            .iter()
            .map(|b| b.p_discharge_max - b.p_charge_max)
            .sum()
    } else {
        0.0
    };
    let params = &options.drcc;
    let xi = params.xi()?;
    let with_freq = options.frequency_constraints && islanding_possible(case);

    for s in 0..scenarios.scenarios.len() {
        for t in 0..scenarios.horizon() {
            let snap = scenarios.snapshot(t, s);
            let demand = snap.total_demand();
            let mut find = |constraint: &str, reachable: f64, required: f64| {
                out.push(PrecheckFinding {
                    period: t,
                    scenario: s,
                    constraint: constraint.to_string(),
                    reachable,
                    required,
                })
            };
            // Forced import must be absorbed by load and charging.
            if min_import > demand + charge_cap + 1e-9 {
                find(
                    "forced import absorption (MW)",
                    demand + charge_cap,
                    min_import,
                );
            }
            if !with_freq {
                continue;
            }
            // Smallest shifted disturbance: forced import minus the most
            // shedding that still lowers it.
            let shed_cap: f64 = case
                .loads
                .iter()
                .zip(&snap.load_p)
                .map(|(l, p)| l.noncritical_share * p)
                .sum();
            let relief = (1.0 - xi * params.alpha).max(0.0) * shed_cap.min(min_import);
            let dist = min_import - relief;
            let h_wind: f64 = if si {
                snap.wind_h_max.iter().sum()
            } else {
                0.0
            };
            let h_max = h_sg + h_storage + h_wind;
            let d0 = lim.damping.damping(demand);

            if 2.0 * lim.rocof_hzps * h_max < dist - 1e-9 {
                find("rocof (MW)", 2.0 * lim.rocof_hzps * h_max, dist);
            }
            let ss_reach = r_max + pc_max + d0 * lim.steady_state_hz;
            if ss_reach < dist - 1e-9 {
                find("steady state (MW)", ss_reach, dist);
            }
            if options.nadir && r_max < dist - 1e-9 {
                find("primary response cover (MW)", r_max, dist);
            }
            if options.nadir {
                let ctx = BlockContext {
                    d0,
                    dpl_max: super::worst_disturbance(case, params),
                    tag: String::new(),
                };
                let sq = lim.nadir_hz.sqrt();
                let d = sq * d0;
                let big_m = size_big_m(params, lim, &ctx)?;
                let x2_lo = (dist / sq).max(d);
                if x2_lo > big_m.x2_max * (1.0 + 1e-9) {
                    find("nadir x2 range", big_m.x2_max, x2_lo);
                    continue;
                }
                // Least piece value over the reachable x2 range; every piece
                // is increasing so its minimum sits at its left end.
                let segs = pwl_coefficients(params.segments, params.range_k)?;
                let x1_min = segs
                    .iter()
                    .filter(|sg| sg.hi * d > x2_lo)
                    .map(|sg| sg.value(x2_lo.max(sg.lo * d), d))
                    .fold(f64::INFINITY, f64::min)
                    .max(0.0);
                let need = lim.pfr_delivery_s / 4.0 * x1_min * x1_min;
                if h_max * r_max < need - 1e-9 {
                    find("nadir H*R (MW^2 s/Hz)", h_max * r_max, need);
                }
            }
        }
    }
    Ok(out)
}
