//! Post-islanding frequency metrics for the centre-of-inertia swing model.
//!
//! The closed forms assume the primary response ramps linearly to `R` over
//! `T_d` seconds and are only valid up to the nadir. [`simulate_swing`]
//! integrates the same dynamics numerically and is used as the independent
//! check of every closed form.

mod certify;

pub use certify::{
    certify, CertificationReport, CertifyOptions, DisturbanceRule, PeriodCertificate,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreqError {
    #[error("total inertia must be positive, got {0} MWs/Hz")]
    NonPositiveInertia(f64),
    #[error("effective damping must be positive, got {0} MW/Hz")]
    NonPositiveDamping(f64),
    #[error("primary response is zero; no nadir before the steady decline")]
    DegeneratePfr,
    #[error("closed form invalid: nadir time {t_n:.3} s exceeds delivery time {t_d} s")]
    ClosedFormInvalid { t_n: f64, t_d: f64 },
    #[error("time {0} s is outside the closed-form validity window")]
    OutsideValidity(f64),
    #[error("step size {dt} s too large, must be at most {max} s")]
    StepSize { dt: f64, max: f64 },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

/// Aggregated quantities seen by the swing equation at the islanding instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyScene {
    /// Synchronous inertia `H_c` (MWs/Hz).
    pub h_sg: f64,
    /// Storage synthetic inertia, summed over units (MWs/Hz).
    pub h_storage: f64,
    /// Wind synthetic inertia per unit (MWs/Hz).
    pub h_wind: Vec<f64>,
    /// Damping penalty per wind unit, same order as `h_wind`.
    pub gamma: Vec<f64>,
    /// Pre-event load damping `D_0` (MW/Hz).
    pub d0: f64,
    /// Primary response delivered by `t_d` (MW).
    pub pfr_mw: f64,
    pub t_d: f64,
    /// Equivalent generation loss (MW).
    pub disturbance_mw: f64,
    /// Post-nadir constant injection from storage (MW).
    #[serde(default)]
    pub constant_power_mw: f64,
    /// How long the post-nadir injection is held (s).
    #[serde(default = "infinite")]
    pub constant_power_window_s: f64,
}

fn infinite() -> f64 {
    f64::INFINITY
}

impl FrequencyScene {
    /// Scene with only synchronous inertia and no synthetic support.
    pub fn simple(h: f64, d: f64, r: f64, t_d: f64, disturbance: f64) -> Self {
        FrequencyScene {
            h_sg: h,
            h_storage: 0.0,
            h_wind: vec![],
            gamma: vec![],
            d0: d,
            pfr_mw: r,
            t_d,
            disturbance_mw: disturbance,
            constant_power_mw: 0.0,
            constant_power_window_s: f64::INFINITY,
        }
    }

    pub fn inertia(&self) -> f64 {
        self.h_sg + self.h_storage + self.h_wind.iter().sum::<f64>()
    }

    /// Wind damping penalty `sum gamma_w H_sw^2`.
    pub fn wind_damping(&self) -> f64 {
        self.gamma
            .iter()
            .zip(&self.h_wind)
            .map(|(g, h)| g * h * h)
            .sum()
    }

    pub fn damping(&self) -> f64 {
        self.d0 - self.wind_damping()
    }

    fn check_inertia(&self) -> Result<f64, FreqError> {
        let h = self.inertia();
        if h > 0.0 && h.is_finite() {
            Ok(h)
        } else {
            Err(FreqError::NonPositiveInertia(h))
        }
    }

    fn check_damping(&self) -> Result<f64, FreqError> {
        let d = self.damping();
        if d > 0.0 && d.is_finite() {
            Ok(d)
        } else {
            Err(FreqError::NonPositiveDamping(d))
        }
    }

    fn check_basic(&self) -> Result<(), FreqError> {
        if self.h_wind.len() != self.gamma.len() {
            return Err(FreqError::InvalidScene(
                "h_wind and gamma lengths differ".into(),
            ));
        }
        if !(self.pfr_mw >= 0.0) {
            return Err(FreqError::InvalidScene("pfr must be nonnegative".into()));
        }
        if !(self.disturbance_mw >= 0.0) {
            return Err(FreqError::InvalidScene(
                "disturbance must be nonnegative".into(),
            ));
        }
        if !(self.t_d > 0.0) {
            return Err(FreqError::InvalidScene("t_d must be positive".into()));
        }
        Ok(())
    }
}

/// Initial rate of change of frequency, `-dP_L / 2H` (Hz/s).
pub fn rocof_max(scene: &FrequencyScene) -> Result<f64, FreqError> {
    let h = scene.check_inertia()?;
    if scene.disturbance_mw == 0.0 {
        return Ok(0.0);
    }
    Ok(-scene.disturbance_mw / (2.0 * h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NadirTime {
    pub t_n: f64,
    /// False when `t_n > T_d`; the closed forms then no longer hold.
    pub valid: bool,
}

/// Time of the frequency nadir under the ramp regime.
pub fn nadir_time(scene: &FrequencyScene) -> Result<NadirTime, FreqError> {
    scene.check_basic()?;
    let h = scene.check_inertia()?;
    let d = scene.check_damping()?;
    if scene.disturbance_mw == 0.0 {
        return Ok(NadirTime {
            t_n: 0.0,
            valid: true,
        });
    }
    if scene.pfr_mw == 0.0 {
        return Err(FreqError::DegeneratePfr);
    }
    let x = scene.t_d * d * scene.disturbance_mw / (2.0 * h * scene.pfr_mw);
    let t_n = 2.0 * h / d * x.ln_1p();
    Ok(NadirTime {
        t_n,
        valid: t_n <= scene.t_d,
    })
}

/// Frequency deviation at the nadir (Hz, negative for a generation loss).
pub fn nadir(scene: &FrequencyScene) -> Result<f64, FreqError> {
    let tn = nadir_time(scene)?;
    if !tn.valid {
        return Err(FreqError::ClosedFormInvalid {
            t_n: tn.t_n,
            t_d: scene.t_d,
        });
    }
    if scene.disturbance_mw == 0.0 {
        return Ok(0.0);
    }
    let h = scene.inertia();
    let d = scene.damping();
    let (r, t_d, dp) = (scene.pfr_mw, scene.t_d, scene.disturbance_mw);
    let x = t_d * d * dp / (2.0 * h * r);
    Ok(2.0 * h * r / (t_d * d * d) * x.ln_1p() - dp / d)
}

/// Steady-state deviation `(R + dP_C - dP_L) / D` (Hz).
///
/// Positive values mean the response over-delivers; they are returned as
/// computed. Without a disturbance nothing responds and the result is zero.
pub fn steady_state(scene: &FrequencyScene) -> Result<f64, FreqError> {
    let d = scene.check_damping()?;
    if scene.disturbance_mw == 0.0 {
        return Ok(0.0);
    }
    Ok((scene.pfr_mw + scene.constant_power_mw - scene.disturbance_mw) / d)
}

/// Time series of the frequency response and of each injection component.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTrace {
    pub time_s: Vec<f64>,
    pub df_hz: Vec<f64>,
    pub dfdt_hzps: Vec<f64>,
    pub p_pfr_mw: Vec<f64>,
    pub p_si_mw: Vec<f64>,
    pub p_mpe_mw: Vec<f64>,
    pub p_c_mw: Vec<f64>,
}

impl FrequencyTrace {
    pub const CSV_HEADER: &'static str = "time_s,df_hz,dfdt_hzps,p_pfr_mw,p_si_mw,p_mpe_mw,p_c_mw";

    pub fn len(&self) -> usize {
        self.time_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_s.is_empty()
    }

    fn push(&mut self, scene: &FrequencyScene, t: f64, df: f64, dfdt: f64, p_c: f64) {
        let h_synthetic = scene.h_storage + scene.h_wind.iter().sum::<f64>();
        self.time_s.push(t);
        self.df_hz.push(df);
        self.dfdt_hzps.push(dfdt);
        self.p_pfr_mw.push(pfr_at(scene, t));
        self.p_si_mw.push(-2.0 * h_synthetic * dfdt);
        self.p_mpe_mw.push(scene.wind_damping() * df);
        self.p_c_mw.push(p_c);
    }

    /// Smallest deviation and the time it occurs.
    pub fn minimum(&self) -> Option<(f64, f64)> {
        self.time_s
            .iter()
            .zip(&self.df_hz)
            .map(|(t, f)| (*t, *f))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.len() + 1));
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                self.time_s[i],
                self.df_hz[i],
                self.dfdt_hzps[i],
                self.p_pfr_mw[i],
                self.p_si_mw[i],
                self.p_mpe_mw[i],
                self.p_c_mw[i]
            ));
        }
        out
    }
}

fn pfr_at(scene: &FrequencyScene, t: f64) -> f64 {
    if scene.disturbance_mw == 0.0 {
        0.0
    } else if t < scene.t_d {
        scene.pfr_mw * t / scene.t_d
    } else {
        scene.pfr_mw
    }
}

/// Evaluate the closed-form trajectory on `grid`, which must lie in `[0, t_n]`.
pub fn analytic_trajectory(
    scene: &FrequencyScene,
    grid: &[f64],
) -> Result<FrequencyTrace, FreqError> {
    let tn = nadir_time(scene)?;
    if !tn.valid {
        return Err(FreqError::ClosedFormInvalid {
            t_n: tn.t_n,
            t_d: scene.t_d,
        });
    }
    let limit = tn.t_n * (1.0 + 1e-12) + 1e-12;
    let h = scene.inertia();
    let d = scene.damping();
    let (r, t_d, dp) = (scene.pfr_mw, scene.t_d, scene.disturbance_mw);
    let amp = dp / d + 2.0 * h * r / (t_d * d * d);
    let mut trace = FrequencyTrace::default();
    for &t in grid {
        if !(t >= 0.0 && t <= limit) {
            return Err(FreqError::OutsideValidity(t));
        }
        let decay = -d / (2.0 * h) * t;
        let df = amp * decay.exp_m1() + r * t / (t_d * d);
        let dfdt = -(dp / (2.0 * h) + r / (t_d * d)) * decay.exp() + r / (t_d * d);
        trace.push(scene, t, df, dfdt, 0.0);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedNadir {
    pub time_s: f64,
    pub df_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub trace: FrequencyTrace,
    /// First zero crossing of the frequency derivative, if one occurred.
    pub nadir: Option<DetectedNadir>,
}

impl Simulation {
    /// Detected nadir, or the trace minimum when the derivative never
    /// changed sign within the horizon.
    pub fn nadir_value(&self) -> f64 {
        match self.nadir {
            Some(n) => n.df_hz,
            None => self.trace.minimum().map_or(0.0, |m| m.1),
        }
    }
}

/// Integrate `2H df' = -D df + dR(t) + dP_C(t) - dP_L` with classical RK4.
///
/// The post-nadir injection switches on at the first sign change of `df'`
/// (located by linear interpolation inside the step) and is held for the
/// scene's constant-power window. Steps are shortened to land exactly on the
/// end of the ramp and of the hold window.
pub fn simulate_swing(
    scene: &FrequencyScene,
    dt: f64,
    horizon: f64,
) -> Result<Simulation, FreqError> {
    scene.check_basic()?;
    let h = scene.check_inertia()?;
    let d = scene.check_damping()?;
    let max_dt = h / d / 10.0;
    if !(dt > 0.0) || dt > max_dt {
        return Err(FreqError::StepSize { dt, max: max_dt });
    }
    if !(horizon >= scene.t_d) {
        return Err(FreqError::InvalidScene(format!(
            "horizon {horizon} s shorter than delivery time {} s",
            scene.t_d
        )));
    }

    let mut trace = FrequencyTrace::default();
    if scene.disturbance_mw == 0.0 {
        let steps = (horizon / dt).ceil() as usize;
        for i in 0..=steps {
            let t = (i as f64 * dt).min(horizon);
            trace.push(scene, t, 0.0, 0.0, 0.0);
        }
        return Ok(Simulation { trace, nadir: None });
    }

    let dp = scene.disturbance_mw;
    // p_c_on: Some(start) once the post-nadir injection has begun.
    let injection = |t: f64, start: Option<f64>| -> f64 {
        match start {
            Some(s) if t >= s && t < s + scene.constant_power_window_s => scene.constant_power_mw,
            _ => 0.0,
        }
    };
    let rhs = |t: f64, f: f64, start: Option<f64>| -> f64 {
        (-d * f + pfr_at(scene, t) + injection(t, start) - dp) / (2.0 * h)
    };

    let mut t = 0.0;
    let mut f = 0.0;
    let mut start: Option<f64> = None;
    let mut nadir = None;
    let mut slope = rhs(t, f, start);
    trace.push(scene, t, f, slope, injection(t, start));

    const EPS: f64 = 1e-12;
    while t < horizon - EPS {
        let mut step = dt.min(horizon - t);
        let mut breakpoints = vec![scene.t_d];
        if let Some(s) = start {
            breakpoints.push(s + scene.constant_power_window_s);
        }
        for bp in breakpoints {
            if bp > t + EPS && bp < t + step {
                step = bp - t;
            }
        }
        // RK4 stages evaluate the piecewise forcing at the left limit of
        // the step so that kinks fall on step boundaries.
        let k1 = rhs(t, f, start);
        let k2 = rhs(t + 0.5 * step, f + 0.5 * step * k1, start);
        let k3 = rhs(t + 0.5 * step, f + 0.5 * step * k2, start);
        let k4 = rhs((t + step) - EPS.min(step * 1e-9), f + step * k3, start);
        let f_next = f + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let t_next = t + step;
        let slope_next = rhs(t_next, f_next, start);

        if nadir.is_none() && slope < 0.0 && slope_next >= 0.0 {
            // Linear interpolation of the derivative locates the crossing;
            // the cubic Hermite interpolant gives the value there.
            let theta = slope / (slope - slope_next);
            let tc = t + theta * step;
            let fc = hermite(f, f_next, slope, slope_next, step, theta);
            nadir = Some(DetectedNadir {
                time_s: tc,
                df_hz: fc,
            });
            if tc > t + EPS {
                start = Some(tc);
                t = tc;
                f = fc;
                slope = rhs(t, f, start);
                trace.push(scene, t, f, slope, injection(t, start));
                continue;
            }
            start = Some(t_next);
        }
        t = t_next;
        f = f_next;
        slope = rhs(t, f, start);
        trace.push(scene, t, f, slope, injection(t, start));
    }
    Ok(Simulation { trace, nadir })
}

fn hermite(f0: f64, f1: f64, d0: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * f0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * f1
        + (s3 - s2) * h * d1
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn reference_point() -> FrequencyScene {
        FrequencyScene::simple(86.0, 0.005 * 162.7, 50.1, 10.0, 37.0)
    }

    fn emt_point() -> FrequencyScene {
        FrequencyScene::simple(48.7, 0.005 * 199.6, 57.0, 10.0, 30.2)
    }

    #[test]
    fn rocof_examples() {
        assert_abs_diff_eq!(
            rocof_max(&reference_point()).unwrap(),
            -0.215116,
            epsilon = 1e-6
        );
        let emt = rocof_max(&emt_point()).unwrap();
        assert_abs_diff_eq!(emt, -0.310062, epsilon = 1e-6);
        assert!(emt.abs() < 0.5);
        let mut s = reference_point();
        s.disturbance_mw = 0.0;
        assert_eq!(rocof_max(&s).unwrap(), 0.0);
        s.h_sg = 0.0;
        assert!(matches!(
            rocof_max(&s),
            Err(FreqError::NonPositiveInertia(_))
        ));
    }

    #[test]
    fn nadir_time_example() {
        let tn = nadir_time(&reference_point()).unwrap();
        assert_abs_diff_eq!(tn.t_n, 7.26, epsilon = 0.01);
        assert!(tn.valid);
    }

    #[test]
    fn nadir_time_tends_to_zero() {
        let mut s = reference_point();
        s.disturbance_mw = 1e-9;
        assert!(nadir_time(&s).unwrap().t_n < 1e-6);
        s.disturbance_mw = 0.0;
        assert_eq!(nadir_time(&s).unwrap().t_n, 0.0);
    }

    #[test]
    fn degenerate_pfr_rejected() {
        let mut s = reference_point();
        s.pfr_mw = 0.0;
        assert_eq!(nadir_time(&s), Err(FreqError::DegeneratePfr));
    }

    #[test]
    fn small_pfr_flags_invalid_closed_form() {
        // Bisection on R for the point where t_n crosses T_d, then step
        // below it.
        let base = reference_point();
        let tn_of = |r: f64| {
            let mut s = base.clone();
            s.pfr_mw = r;
            nadir_time(&s).unwrap().t_n
        };
        let (mut lo, mut hi) = (1e-3, 50.1);
        assert!(tn_of(lo) > base.t_d && tn_of(hi) < base.t_d);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if tn_of(mid) > base.t_d {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut s = base.clone();
        s.pfr_mw = 0.9 * lo;
        let tn = nadir_time(&s).unwrap();
        assert!(!tn.valid && tn.t_n > s.t_d);
        assert!(matches!(
            nadir(&s),
            Err(FreqError::ClosedFormInvalid { .. })
        ));
        s.pfr_mw = 1.1 * hi;
        assert!(nadir_time(&s).unwrap().valid);
    }

    #[test]
    fn nadir_examples() {
        let n = nadir(&reference_point()).unwrap();
        assert!((n - -0.77).abs() <= 0.02, "nadir {n}");
        assert_abs_diff_eq!(n, -0.7760, epsilon = 1e-3);
        let e = nadir(&emt_point()).unwrap();
        assert!((-0.80..=-0.77).contains(&e), "nadir {e}");
        let mut s = reference_point();
        s.disturbance_mw = 0.0;
        assert_eq!(nadir(&s).unwrap(), 0.0);
    }

    #[test]
    fn steady_state_examples() {
        let mut s = reference_point();
        s.pfr_mw = 37.0;
        assert_eq!(steady_state(&s).unwrap(), 0.0);
        let s = reference_point();
        assert_abs_diff_eq!(steady_state(&s).unwrap(), 16.1033, epsilon = 1e-3);
        let mut s = reference_point();
        s.pfr_mw = 25.0;
        s.constant_power_mw = 5.0;
        assert_abs_diff_eq!(steady_state(&s).unwrap(), -8.6048, epsilon = 1e-3);
        let mut s = reference_point();
        s.disturbance_mw = 0.0;
        assert_eq!(steady_state(&s).unwrap(), 0.0);
    }

    #[test]
    fn trajectory_endpoints() {
        let s = reference_point();
        let tn = nadir_time(&s).unwrap().t_n;
        let tr = analytic_trajectory(&s, &[0.0, tn]).unwrap();
        assert_eq!(tr.df_hz[0], 0.0);
        assert_abs_diff_eq!(tr.df_hz[1], nadir(&s).unwrap(), epsilon = 1e-9);
        assert_abs_diff_eq!(tr.dfdt_hzps[1], 0.0, epsilon = 1e-9);
        assert!(matches!(
            analytic_trajectory(&s, &[tn + 1.0]),
            Err(FreqError::OutsideValidity(_))
        ));
    }

    #[test]
    fn trajectory_matches_simulation_at_two_seconds() {
        let s = reference_point();
        let tr = analytic_trajectory(&s, &[2.0]).unwrap();
        let sim = simulate_swing(&s, 1e-3, 60.0).unwrap();
        let i = sim
            .trace
            .time_s
            .iter()
            .position(|t| (t - 2.0).abs() < 1e-9)
            .unwrap();
        assert_abs_diff_eq!(tr.df_hz[0], sim.trace.df_hz[i], epsilon = 1e-3);
    }

    #[test]
    fn trajectory_derivative_matches_finite_differences() {
        let s = reference_point();
        let tn = nadir_time(&s).unwrap().t_n;
        let h = 1e-3;
        let grid: Vec<f64> = (1..70)
            .map(|i| i as f64 * 0.1)
            .filter(|t| t + h < tn)
            .collect();
        let plus: Vec<f64> = grid.iter().map(|t| t + h).collect();
        let minus: Vec<f64> = grid.iter().map(|t| t - h).collect();
        let mid = analytic_trajectory(&s, &grid).unwrap();
        let fp = analytic_trajectory(&s, &plus).unwrap();
        let fm = analytic_trajectory(&s, &minus).unwrap();
        for i in 0..grid.len() {
            let fd = (fp.df_hz[i] - fm.df_hz[i]) / (2.0 * h);
            assert_abs_diff_eq!(fd, mid.dfdt_hzps[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn simulation_matches_closed_form_nadir() {
        let s = reference_point();
        let sim = simulate_swing(&s, 1e-3, 60.0).unwrap();
        let n = sim.nadir.unwrap();
        assert_abs_diff_eq!(n.df_hz, nadir(&s).unwrap(), epsilon = 0.01);
        assert_abs_diff_eq!(n.time_s, nadir_time(&s).unwrap().t_n, epsilon = 2e-3);
        assert_abs_diff_eq!(
            sim.trace.dfdt_hzps[0],
            rocof_max(&s).unwrap(),
            epsilon = 1e-12
        );
        assert!(sim.trace.time_s.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn zero_disturbance_gives_zero_trace() {
        let mut s = reference_point();
        s.disturbance_mw = 0.0;
        let sim = simulate_swing(&s, 0.01, 20.0).unwrap();
        assert!(sim.trace.df_hz.iter().all(|f| *f == 0.0));
        assert!(sim.trace.p_pfr_mw.iter().all(|f| *f == 0.0));
        assert!(sim.nadir.is_none());
    }

    #[test]
    fn constant_power_sets_asymptote() {
        let mut s = reference_point();
        s.pfr_mw = 40.0;
        s.constant_power_mw = 5.0;
        let tau = 2.0 * s.inertia() / s.damping();
        let sim = simulate_swing(&s, 0.5, 60.0 * tau).unwrap();
        let last = *sim.trace.df_hz.last().unwrap();
        assert_abs_diff_eq!(last, steady_state(&s).unwrap(), epsilon = 1e-3);
        let on = sim.trace.p_c_mw.iter().position(|p| *p > 0.0).unwrap();
        assert_abs_diff_eq!(
            sim.trace.time_s[on],
            sim.nadir.unwrap().time_s,
            epsilon = 1e-12
        );
    }

    #[test]
    fn step_size_guard() {
        let s = reference_point();
        let max = s.inertia() / s.damping() / 10.0;
        assert!(matches!(
            simulate_swing(&s, max * 1.01, 60.0),
            Err(FreqError::StepSize { .. })
        ));
        assert!(simulate_swing(&s, max, 60.0).is_ok());
    }

    #[test]
    fn trace_csv_header() {
        let s = reference_point();
        let sim = simulate_swing(&s, 0.5, 10.0).unwrap();
        let csv = sim.trace.to_csv();
        assert!(csv.starts_with("time_s,df_hz,dfdt_hzps,p_pfr_mw,p_si_mw,p_mpe_mw,p_c_mw\n"));
        assert_eq!(csv.lines().count(), sim.trace.len() + 1);
    }

    #[test]
    fn wind_support_lowers_damping() {
        let mut s = reference_point();
        s.h_sg = 60.0;
        s.h_wind = vec![26.0];
        s.gamma = vec![1e-4];
        assert_abs_diff_eq!(s.inertia(), 86.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.damping(), 0.8135 - 1e-4 * 676.0, epsilon = 1e-12);
        let sim = simulate_swing(&s, 1e-3, 30.0).unwrap();
        assert_abs_diff_eq!(sim.nadir_value(), nadir(&s).unwrap(), epsilon = 1e-3);
    }
}
