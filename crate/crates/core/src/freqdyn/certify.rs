//! Post-hoc check of a schedule against the swing dynamics.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{nadir_time, rocof_max, simulate_swing, steady_state, FrequencyScene, FrequencyTrace};
use crate::netdata::{NetworkCase, ScenarioSet};
use crate::sched::{PeriodSolution, ScheduleSolution};

/// Which disturbance a period is checked at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceRule {
    /// Import minus the mean shed load.
    Mean,
    /// Mean plus `xi sigma`, the level the constraints were written for.
    Robust,
    /// Full import, no shedding.
    NoShedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyOptions {
    pub rule: DisturbanceRule,
    /// Integration step (s); shortened when the scene needs it.
    pub dt_s: f64,
    pub horizon_s: f64,
    /// Allowed nadir overshoot beyond the limit (Hz).
    pub nadir_tolerance_hz: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            rule: DisturbanceRule::Robust,
            dt_s: 0.01,
            horizon_s: 60.0,
            nadir_tolerance_hz: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodCertificate {
    pub t: usize,
    pub s: usize,
    pub disturbance_mw: f64,
    pub inertia: f64,
    pub damping: f64,
    pub pfr_mw: f64,
    /// No disturbance: nothing to certify.
    pub vacuous: bool,
    pub rocof_hzps: f64,
    pub nadir_closed_hz: Option<f64>,
    pub nadir_time_s: Option<f64>,
    /// Nadir time within the ramp, where the closed form holds.
    pub closed_form_valid: bool,
    pub nadir_sim_hz: f64,
    /// Closed-form asymptote; positive when the response over-delivers.
    pub steady_state_hz: f64,
    /// `limit - |rocof|` (Hz/s).
    pub rocof_margin: f64,
    /// `nadir_sim + limit` (Hz).
    pub nadir_margin: f64,
    /// `steady_state + limit` (Hz).
    pub steady_margin: f64,
    pub rocof_ok: bool,
    pub nadir_ok: bool,
    pub steady_ok: bool,
    pub note: Option<String>,
}

impl PeriodCertificate {
    pub fn passed(&self) -> bool {
        self.rocof_ok && self.nadir_ok && self.steady_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub rule: DisturbanceRule,
    pub nadir_limit_hz: f64,
    pub rocof_limit_hzps: f64,
    pub steady_limit_hz: f64,
    pub nadir_tolerance_hz: f64,
    /// Ordered by period, then scenario.
    pub periods: Vec<PeriodCertificate>,
    /// Simulated trace of the period with the smallest nadir margin.
    pub worst_trace: Option<FrequencyTrace>,
}

impl CertificationReport {
    pub fn all_passed(&self) -> bool {
        self.periods.iter().all(PeriodCertificate::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PeriodCertificate> {
        self.periods.iter().filter(|p| !p.passed())
    }

    /// Smallest nadir margin over the non-vacuous periods.
    pub fn worst(&self) -> Option<&PeriodCertificate> {
        self.periods
            .iter()
            .filter(|p| !p.vacuous)
            .min_by(|a, b| a.nadir_margin.total_cmp(&b.nadir_margin))
    }

    /// Per-period table as plain text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "frequency certification");
        let _ = writeln!(out, "rule: {:?}", self.rule);
        let _ = writeln!(
            out,
            "limits: nadir {} Hz (tolerance {} Hz), rocof {} Hz/s, steady state {} Hz",
            self.nadir_limit_hz,
            self.nadir_tolerance_hz,
            self.rocof_limit_hzps,
            self.steady_limit_hz
        );
        let _ = writeln!(
            out,
            "periods: {}, failed: {}",
            self.periods.len(),
            self.failures().count()
        );
        let _ = writeln!(
            out,
            "{:>4} {:>3} {:>10} {:>10} {:>10} {:>10} {:>10}  result",
            "t", "s", "dP_MW", "rocof", "nadir", "steady", "margin"
        );
        for p in &self.periods {
            let verdict = if p.vacuous {
                "pass (no disturbance)".to_string()
            } else if p.passed() {
                "pass".to_string()
            } else {
                let mut what = vec![];
                if !p.rocof_ok {
                    what.push("rocof");
                }
                if !p.nadir_ok {
                    what.push("nadir");
                }
                if !p.steady_ok {
                    what.push("steady");
                }
                format!("FAIL {}", what.join(","))
            };
            let _ = writeln!(
                out,
                "{:>4} {:>3} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}  {}{}",
                p.t,
                p.s,
                p.disturbance_mw,
                p.rocof_hzps,
                p.nadir_sim_hz,
                p.steady_state_hz,
                p.nadir_margin,
                verdict,
                p.note
                    .as_deref()
                    .map(|n| format!(" ({n})"))
                    .unwrap_or_default()
            );
        }
        out
    }

    /// `t,s,disturbance_mw,nadir_hz,nadir_closed_hz,margin_hz`, the data of
    /// the nadir histogram.
    pub fn nadir_csv(&self) -> String {
        let mut out = String::from("t,s,disturbance_mw,nadir_hz,nadir_closed_hz,margin_hz\n");
        for p in &self.periods {
            let closed = p.nadir_closed_hz.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.t, p.s, p.disturbance_mw, p.nadir_sim_hz, closed, p.nadir_margin
            );
        }
        out
    }
}

/// Scene of one period under `rule`.
pub fn scene_for(
    period: &PeriodSolution,
    case: &NetworkCase,
    xi: f64,
    alpha: f64,
    rule: DisturbanceRule,
) -> FrequencyScene {
    let e = &period.event;
    let disturbance = match rule {
        DisturbanceRule::Mean => e.import_mw - e.shed_mean_mw,
        DisturbanceRule::Robust => e.import_mw - e.shed_mean_mw + xi * alpha * e.shed_mean_mw,
        DisturbanceRule::NoShedding => e.import_mw,
    };
    FrequencyScene {
        h_sg: e.h_sg,
        h_storage: period.storage.iter().map(|b| b.h_si).sum(),
        h_wind: period.wind.iter().map(|w| w.h_si).collect(),
        gamma: case.wind.iter().map(|w| w.gamma).collect(),
        d0: e.d0,
        pfr_mw: e.pfr_mw,
        t_d: case.frequency.pfr_delivery_s,
        disturbance_mw: disturbance,
        constant_power_mw: e.constant_power_mw,
        constant_power_window_s: e.constant_power_window_s.unwrap_or(f64::INFINITY),
    }
}

fn missing(t: usize, s: usize) -> PeriodCertificate {
    PeriodCertificate {
        t,
        s,
        disturbance_mw: f64::NAN,
        inertia: f64::NAN,
        damping: f64::NAN,
        pfr_mw: f64::NAN,
        vacuous: false,
        rocof_hzps: f64::NAN,
        nadir_closed_hz: None,
        nadir_time_s: None,
        closed_form_valid: false,
        nadir_sim_hz: f64::NAN,
        steady_state_hz: f64::NAN,
        rocof_margin: f64::NEG_INFINITY,
        nadir_margin: f64::NEG_INFINITY,
        steady_margin: f64::NEG_INFINITY,
        rocof_ok: false,
        nadir_ok: false,
        steady_ok: false,
        note: Some("period missing from the solution".into()),
    }
}

fn check_period(
    period: &PeriodSolution,
    case: &NetworkCase,
    xi: f64,
    alpha: f64,
    options: &CertifyOptions,
) -> (PeriodCertificate, Option<FrequencyTrace>) {
    let lim = &case.frequency;
    let scene = scene_for(period, case, xi, alpha, options.rule);
    let mut cert = missing(period.t, period.s);
    cert.note = None;
    cert.disturbance_mw = scene.disturbance_mw;
    cert.inertia = scene.inertia();
    cert.damping = scene.damping();
    cert.pfr_mw = scene.pfr_mw;

    if scene.disturbance_mw <= 0.0 {
        cert.vacuous = true;
        cert.rocof_hzps = 0.0;
        cert.nadir_sim_hz = 0.0;
        cert.steady_state_hz = 0.0;
        cert.rocof_margin = lim.rocof_hzps;
        cert.nadir_margin = lim.nadir_hz;
        cert.steady_margin = lim.steady_state_hz;
        cert.rocof_ok = true;
        cert.nadir_ok = true;
        cert.steady_ok = true;
        return (cert, None);
    }

    let fail = |mut cert: PeriodCertificate, why: String| {
        cert.note = Some(why);
        (cert, None)
    };
    let rocof = match rocof_max(&scene) {
        Ok(r) => r,
        Err(e) => return fail(cert, e.to_string()),
    };
    cert.rocof_hzps = rocof;
    cert.rocof_margin = lim.rocof_hzps - rocof.abs();
    cert.rocof_ok = cert.rocof_margin >= -1e-9 * lim.rocof_hzps;

    let ss = match steady_state(&scene) {
        Ok(v) => v,
        Err(e) => return fail(cert, e.to_string()),
    };
    cert.steady_state_hz = ss;
    cert.steady_margin = ss + lim.steady_state_hz;
    cert.steady_ok = cert.steady_margin >= -1e-9;

    match nadir_time(&scene) {
        Ok(nt) => {
            cert.nadir_time_s = Some(nt.t_n);
            cert.closed_form_valid = nt.valid;
            if nt.valid {
                cert.nadir_closed_hz = super::nadir(&scene).ok();
            } else {
                cert.note = Some("nadir after the ramp; simulation only".into());
            }
        }
        Err(e) => cert.note = Some(e.to_string()),
    }

    let h = scene.inertia();
    let d = scene.damping();
    let dt = options.dt_s.min(h / d / 10.0);
    let horizon = options.horizon_s.max(scene.t_d);
    let sim = match simulate_swing(&scene, dt, horizon) {
        Ok(s) => s,
        Err(e) => return fail(cert, e.to_string()),
    };
    cert.nadir_sim_hz = sim.nadir_value();
    cert.nadir_margin = cert.nadir_sim_hz + lim.nadir_hz;
    cert.nadir_ok = cert.nadir_margin >= -options.nadir_tolerance_hz;
    (cert, Some(sim.trace))
}

/// Rebuild every period's scene from `solution` and check it in closed form
/// and by simulation. Periods of `scenarios` missing from the solution are
/// reported as failures.
pub fn certify(
    solution: &ScheduleSolution,
    case: &NetworkCase,
    scenarios: &ScenarioSet,
    options: &CertifyOptions,
) -> CertificationReport {
    let expected: Vec<(usize, usize)> = (0..scenarios.horizon())
        .flat_map(|t| (0..scenarios.scenarios.len()).map(move |s| (t, s)))
        .collect();
    let results: Vec<(PeriodCertificate, Option<FrequencyTrace>)> = expected
        .par_iter()
        .map(|&(t, s)| match solution.period(t, s) {
            Some(p) => check_period(p, case, solution.xi, solution.alpha, options),
            None => (missing(t, s), None),
        })
        .collect();
    let mut worst: Option<(f64, FrequencyTrace)> = None;
    let mut periods = vec![];
    for (cert, trace) in results {
        if let Some(tr) = trace {
            if worst.as_ref().is_none_or(|(m, _)| cert.nadir_margin < *m) {
                worst = Some((cert.nadir_margin, tr));
            }
        }
        periods.push(cert);
    }
    let lim = &case.frequency;
    CertificationReport {
        rule: options.rule,
        nadir_limit_hz: lim.nadir_hz,
        rocof_limit_hzps: lim.rocof_hzps,
        steady_limit_hz: lim.steady_state_hz,
        nadir_tolerance_hz: options.nadir_tolerance_hz,
        periods,
        worst_trace: worst.map(|w| w.1),
    }
}
