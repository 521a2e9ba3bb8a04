//! Distributionally robust frequency constraints.
//!
//! The load shed at islanding has mean `dP_Dmu` and standard deviation
//! `sigma = alpha * dP_Dmu`; only these two moments are known. By the
//! one-sided Chebyshev (Cantelli) bound, requiring a constraint at the
//! shifted disturbance `dP_L0 - dP_Dmu + xi * sigma` with
//! `xi = sqrt(eta / (1 - eta))` makes it hold with probability at least
//! `eta` under every distribution with those moments.
//!
//! The nadir limit becomes `H R >= (T_d / 4) x1^2 + wind term` with
//! `x1 >= sqrt(x2^2 - d x2)`, `x2 = dP / sqrt(df_lim)` and
//! `d = sqrt(df_lim) D_0`. The concave square root is replaced by tangent
//! lines selected with big-M interval logic, which over-estimates it and
//! keeps the constraint conservative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{AffineExpr, ConeId, ConicError, ConicProgram, RowId, Sense, VarId};
use crate::netdata::FrequencyLimits;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DrccError {
    #[error("confidence level must lie in (0, 1), got {0}")]
    Confidence(f64),
    #[error("invalid linearization: {0}")]
    Linearization(String),
    #[error("big-M {name} = {given} is below the certified bound {required}")]
    Sizing {
        name: &'static str,
        given: f64,
        required: f64,
    },
    #[error("sampler moments ({mean}, {std}) deviate from ({mu}, {sigma}) by more than 1%")]
    SamplerMoments {
        mean: f64,
        std: f64,
        mu: f64,
        sigma: f64,
    },
    #[error("invalid block input: {0}")]
    Input(String),
    #[error(transparent)]
    Conic(#[from] ConicError),
}

fn default_eta() -> f64 {
    0.95
}
fn default_alpha() -> f64 {
    0.1
}
fn default_segments() -> usize {
    8
}
fn default_range() -> f64 {
    12.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrccParams {
    /// Confidence level of the chance constraints.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Shed uncertainty slope, `sigma = alpha * dP_Dmu`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Worst-case disturbance (MW); the PCC rating when unset.
    #[serde(default)]
    pub dpl_max_mw: Option<f64>,
    /// Number of linear pieces `N`.
    #[serde(default = "default_segments")]
    pub segments: usize,
    /// Range multiplier `K`: tangent pieces cover `x2 / d` up to `K + 1`.
    #[serde(default = "default_range")]
    pub range_k: f64,
    /// Interval big-M; certified minimum when unset.
    #[serde(default)]
    pub big_m: Option<f64>,
    /// Segment big-M; certified minimum when unset.
    #[serde(default)]
    pub big_m_prime: Option<f64>,
}

impl Default for DrccParams {
    fn default() -> Self {
        DrccParams {
            eta: default_eta(),
            alpha: default_alpha(),
            dpl_max_mw: None,
            segments: default_segments(),
            range_k: default_range(),
            big_m: None,
            big_m_prime: None,
        }
    }
}

impl DrccParams {
    pub fn xi(&self) -> Result<f64, DrccError> {
        xi(self.eta)
    }

    /// Step `k = K / (N - 1)` between tangent points (in units of `d`).
    pub fn step(&self) -> f64 {
        self.range_k / (self.segments as f64 - 1.0)
    }

    pub fn validate(&self) -> Result<(), DrccError> {
        xi(self.eta)?;
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(DrccError::Input(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if self.segments < 2 || !(self.range_k > 0.0) || !self.range_k.is_finite() {
            return Err(DrccError::Linearization(format!(
                "need N >= 2 and K > 0, got N = {}, K = {}",
                self.segments, self.range_k
            )));
        }
        if let Some(m) = self.dpl_max_mw {
            if !(m >= 0.0) {
                return Err(DrccError::Input(format!(
                    "dpl_max_mw must be >= 0, got {m}"
                )));
            }
        }
        Ok(())
    }
}

/// Cantelli multiplier `sqrt(eta / (1 - eta))`.
pub fn xi(eta: f64) -> Result<f64, DrccError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(DrccError::Confidence(eta));
    }
    Ok((eta / (1.0 - eta)).sqrt())
}

/// One linear piece `x1 >= a x2 + b d`, active for `x2 / d` in `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub lo: f64,
    /// `f64::INFINITY` for the last piece.
    pub hi: f64,
}

impl Segment {
    pub fn value(&self, x2: f64, d: f64) -> f64 {
        self.a * x2 + self.b * d
    }

    pub fn contains(&self, ratio: f64) -> bool {
        ratio >= self.lo && ratio < self.hi
    }
}

/// Pieces `n = 1..N-1` are tangent to `sqrt(x2^2 - d x2)` at
/// `x2 = (k n + 1) d`; piece `N` is the asymptote `x2 - d / 2`.
pub fn pwl_coefficients(segments: usize, range_k: f64) -> Result<Vec<Segment>, DrccError> {
    if segments < 2 || !(range_k > 0.0) || !range_k.is_finite() {
        return Err(DrccError::Linearization(format!(
            "need N >= 2 and K > 0, got N = {segments}, K = {range_k}"
        )));
    }
    let k = range_k / (segments as f64 - 1.0);
    let mut out = Vec::with_capacity(segments);
    for n in 1..segments {
        let nk = n as f64 * k;
        let root = (nk * nk + nk).sqrt();
        out.push(Segment {
            n,
            a: (2.0 * nk + 1.0) / (2.0 * root),
            b: (-nk - 1.0) / (2.0 * root),
            lo: k * (n as f64 - 1.0) + 1.0,
            hi: nk + 1.0,
        });
    }
    out.push(Segment {
        n: segments,
        a: 1.0,
        b: -0.5,
        lo: range_k + 1.0,
        hi: f64::INFINITY,
    });
    Ok(out)
}

/// The piece whose interval contains `x2 / d` (the first piece below `d`).
pub fn active_segment(segments: &[Segment], x2: f64, d: f64) -> &Segment {
    let ratio = x2 / d;
    segments
        .iter()
        .find(|s| s.contains(ratio))
        .unwrap_or(&segments[0])
}

/// Variables of one islanding event.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyHandles {
    /// Total inertia `H` (MWs/Hz), continuous.
    pub inertia: VarId,
    /// PFR magnitude `R` (MW).
    pub pfr: VarId,
    /// Synthetic inertia per wind unit with its damping penalty `gamma`.
    pub wind_si: Vec<(VarId, f64)>,
    /// Mean shed load `dP_Dmu` (MW).
    pub shed_mean: VarId,
    /// Pre-event import `dP_L0` (MW).
    pub loss: VarId,
    /// Post-nadir constant injection `dP_C` (MW), if modelled.
    pub constant_power: Option<VarId>,
}

/// Per-event constants of the frequency blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockContext {
    /// Pre-event load damping `D_0` (MW/Hz).
    pub d0: f64,
    /// Worst-case disturbance `dP_L^max` (MW).
    pub dpl_max: f64,
    /// Suffix making variable and row names unique, e.g. `t3_s1`.
    pub tag: String,
}

/// `dP_L0 + (xi alpha - 1) dP_Dmu`, the shifted disturbance `dP_Lmu + xi sigma`.
pub fn shifted_disturbance(h: &FrequencyHandles, xi: f64, alpha: f64) -> AffineExpr {
    AffineExpr::var(h.loss).with_term(h.shed_mean, xi * alpha - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigM {
    /// Interval logic constant `M`.
    pub m: f64,
    /// Segment relaxation constant `M'`.
    pub m_prime: f64,
    /// Largest reachable `x2`.
    pub x2_max: f64,
}

/// Smallest safe big-M values for the event and the supplied overrides,
/// checked against them.
pub fn size_big_m(
    params: &DrccParams,
    limits: &FrequencyLimits,
    ctx: &BlockContext,
) -> Result<BigM, DrccError> {
    let xi = params.xi()?;
    let d = limits.nadir_hz.sqrt() * ctx.d0;
    let segs = pwl_coefficients(params.segments, params.range_k)?;
    let x2_max = (ctx.dpl_max * (1.0 + xi * params.alpha) / limits.nadir_hz.sqrt()).max(d);
    let eps = interval_eps(d);
    let m_required = (x2_max - d + eps).max(params.range_k * d);
    let mp_required = segs.iter().map(|s| s.value(x2_max, d)).fold(0.0, f64::max);
    let m = params.big_m.unwrap_or(x2_max + (params.range_k + 1.0) * d);
    let m_prime = params
        .big_m_prime
        .unwrap_or(segs[0].a * x2_max + segs[0].b.abs() * d);
    if m < m_required {
        return Err(DrccError::Sizing {
            name: "M",
            given: m,
            required: m_required,
        });
    }
    if m_prime < mp_required {
        return Err(DrccError::Sizing {
            name: "M'",
            given: m_prime,
            required: mp_required,
        });
    }
    Ok(BigM { m, m_prime, x2_max })
}

/// Width by which strict interval bounds are tightened.
pub fn interval_eps(d: f64) -> f64 {
    1e-6 * d
}

#[derive(Debug, Clone, PartialEq)]
pub struct NadirBlock {
    pub x1: VarId,
    pub x2: VarId,
    pub d: f64,
    /// `u_n = 1` iff `x2 >= lo_n d`, for the tangent pieces.
    pub above: Vec<VarId>,
    /// `v_n = 1` iff `x2 < hi_n d`, for the tangent pieces.
    pub below: Vec<VarId>,
    /// Piece selectors `z_1..z_N`: `u_n + v_n - 1` for tangent pieces, a
    /// binary for the last.
    pub select: Vec<VarId>,
    pub segments: Vec<Segment>,
    pub big_m: BigM,
    pub cone: ConeId,
    /// `x2 >= d`.
    pub floor_row: RowId,
}

impl NadirBlock {
    /// Index of the selected piece at an integral point.
    pub fn selected(&self, x: &[f64]) -> Option<usize> {
        self.select.iter().position(|z| x[z.0] > 0.5)
    }
}

/// Add the linearized distributionally robust nadir constraint.
pub fn build_nadir_block(
    program: &mut ConicProgram,
    h: &FrequencyHandles,
    params: &DrccParams,
    limits: &FrequencyLimits,
    ctx: &BlockContext,
) -> Result<NadirBlock, DrccError> {
    params.validate()?;
    if !(ctx.d0 > 0.0) || !(limits.nadir_hz > 0.0) {
        return Err(DrccError::Input(format!(
            "need D_0 > 0 and nadir limit > 0, got {} and {}",
            ctx.d0, limits.nadir_hz
        )));
    }
    let xi = params.xi()?;
    let sq = limits.nadir_hz.sqrt();
    let d = sq * ctx.d0;
    let t_d = limits.pfr_delivery_s;
    let big_m = size_big_m(params, limits, ctx)?;
    let segments = pwl_coefficients(params.segments, params.range_k)?;
    let eps = interval_eps(d);
    let tag = &ctx.tag;
    let (m, mp) = (big_m.m, big_m.m_prime);

    let x1 = program.add_continuous(&format!("nadir_x1_{tag}"), 0.0, f64::INFINITY)?;
    let x2 = program.add_continuous(&format!("nadir_x2_{tag}"), 0.0, big_m.x2_max)?;
    let mut def = AffineExpr::scaled(x2, sq);
    def.add_expr(&shifted_disturbance(h, xi, params.alpha), -1.0);
    program.add_row(&format!("nadir_x2def_{tag}"), def, Sense::Ge, 0.0)?;
    let floor_row = program.add_row(&format!("nadir_x2floor_{tag}"), x2, Sense::Ge, d)?;

    let mut u = vec![AffineExpr::scaled(x1, (t_d / 2.0).sqrt())];
    for &(w, gamma) in &h.wind_si {
        u.push(AffineExpr::scaled(
            w,
            (ctx.dpl_max * t_d * gamma / 2.0).sqrt(),
        ));
    }
    let cone = program.add_rotated_cone(&format!("nadir_hr_{tag}"), h.inertia, h.pfr, u)?;

    let mut above = vec![];
    let mut below = vec![];
    let mut select = vec![];
    let mut pick = AffineExpr::default();
    for s in &segments {
        let n = s.n;
        let z = if s.hi.is_finite() {
            let un = program.add_binary(&format!("nadir_u{n}_{tag}"))?;
            let vn = program.add_binary(&format!("nadir_v{n}_{tag}"))?;
            let (lo, hi) = (s.lo * d, s.hi * d);
            // u = 1 => x2 >= lo ; u = 0 => x2 <= lo - eps
            program.add_row(
                &format!("nadir_u{n}on_{tag}"),
                AffineExpr::var(x2).with_term(un, -m),
                Sense::Ge,
                lo - m,
            )?;
            program.add_row(
                &format!("nadir_u{n}off_{tag}"),
                AffineExpr::var(x2).with_term(un, -m),
                Sense::Le,
                lo - eps,
            )?;
            // v = 1 => x2 <= hi - eps ; v = 0 => x2 >= hi
            program.add_row(
                &format!("nadir_v{n}on_{tag}"),
                AffineExpr::var(x2).with_term(vn, m),
                Sense::Le,
                hi - eps + m,
            )?;
            program.add_row(
                &format!("nadir_v{n}off_{tag}"),
                AffineExpr::var(x2).with_term(vn, m),
                Sense::Ge,
                hi,
            )?;
            let zn = program.add_continuous(&format!("nadir_z{n}_{tag}"), 0.0, 1.0)?;
            program.add_row(
                &format!("nadir_z{n}def_{tag}"),
                AffineExpr::var(zn).with_term(un, -1.0).with_term(vn, -1.0),
                Sense::Eq,
                -1.0,
            )?;
            above.push(un);
            below.push(vn);
            zn
        } else {
            let zn = program.add_binary(&format!("nadir_z{n}_{tag}"))?;
            let lo = s.lo * d;
            program.add_row(
                &format!("nadir_z{n}on_{tag}"),
                AffineExpr::var(x2).with_term(zn, -m),
                Sense::Ge,
                lo - m,
            )?;
            program.add_row(
                &format!("nadir_z{n}off_{tag}"),
                AffineExpr::var(x2).with_term(zn, -m),
                Sense::Le,
                lo - eps,
            )?;
            zn
        };
        // x1 >= a x2 + b d - (1 - z) M'
        program.add_row(
            &format!("nadir_seg{n}_{tag}"),
            AffineExpr::var(x1).with_term(x2, -s.a).with_term(z, -mp),
            Sense::Ge,
            s.b * d - mp,
        )?;
        pick.add_term(z, 1.0);
        select.push(z);
    }
    program.add_row(&format!("nadir_onehot_{tag}"), pick, Sense::Eq, 1.0)?;

    // Valid inequalities: every piece lies above sqrt(x2^2 - d x2) >= x2 - d,
    // and the interval indicators are nested.
    // The last piece is x2 - d / 2, so selecting it lifts the cut by d / 2.
    let last = select[select.len() - 1];
    program.add_row(
        &format!("nadir_x1cut_{tag}"),
        AffineExpr::var(x1)
            .with_term(x2, -1.0)
            .with_term(last, -0.5 * d),
        Sense::Ge,
        -d,
    )?;
    for (n, &vn) in below.iter().enumerate() {
        let next = above.get(n + 1).copied().unwrap_or(select[select.len() - 1]);
        program.add_row(
            &format!("nadir_link{}_{tag}", n + 1),
            AffineExpr::var(next).with_term(vn, 1.0),
            Sense::Eq,
            1.0,
        )?;
        program.add_row(
            &format!("nadir_order{}_{tag}", n + 1),
            AffineExpr::var(next).with_term(above[n], -1.0),
            Sense::Le,
            0.0,
        )?;
    }

    Ok(NadirBlock {
        x1,
        x2,
        d,
        above,
        below,
        select,
        segments,
        big_m,
        cone,
        floor_row,
    })
}

/// `2 H rocof_lim >= dP_Lmu + xi sigma`.
pub fn build_rocof_constraint(
    program: &mut ConicProgram,
    h: &FrequencyHandles,
    params: &DrccParams,
    limits: &FrequencyLimits,
    tag: &str,
) -> Result<RowId, DrccError> {
    let xi = params.xi()?;
    let mut e = AffineExpr::scaled(h.inertia, 2.0 * limits.rocof_hzps);
    e.add_expr(&shifted_disturbance(h, xi, params.alpha), -1.0);
    Ok(program.add_row(&format!("rocof_{tag}"), e, Sense::Ge, 0.0)?)
}

/// `R >= dP_Lmu + xi sigma`: the primary response covers the disturbance,
/// which puts the nadir inside the ramp where the nadir bound applies.
pub fn build_pfr_cover_constraint(
    program: &mut ConicProgram,
    h: &FrequencyHandles,
    params: &DrccParams,
    tag: &str,
) -> Result<RowId, DrccError> {
    let xi = params.xi()?;
    let mut e = AffineExpr::var(h.pfr);
    e.add_expr(&shifted_disturbance(h, xi, params.alpha), -1.0);
    Ok(program.add_row(&format!("pfr_cover_{tag}"), e, Sense::Ge, 0.0)?)
}

/// `R + dP_C + D_0 df_ss - dP_Lmu - xi sigma >= df_ss sum(gamma H_sw^2)` as
/// the rotated cone `2 p (1/2) >= sum (sqrt(df_ss gamma) H_sw)^2`.
pub fn build_ss_constraint(
    program: &mut ConicProgram,
    h: &FrequencyHandles,
    params: &DrccParams,
    limits: &FrequencyLimits,
    ctx: &BlockContext,
) -> Result<ConeId, DrccError> {
    let xi = params.xi()?;
    let ss = limits.steady_state_hz;
    let mut p = AffineExpr::var(h.pfr).with_constant(ctx.d0 * ss);
    if let Some(c) = h.constant_power {
        p.add_term(c, 1.0);
    }
    p.add_expr(&shifted_disturbance(h, xi, params.alpha), -1.0);
    let u = h
        .wind_si
        .iter()
        .map(|&(w, gamma)| AffineExpr::scaled(w, (ss * gamma).sqrt()))
        .collect();
    Ok(program.add_rotated_cone(&format!("steady_{}", ctx.tag), p, 0.5, u)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NadirCheck {
    pub holds: bool,
    /// `H R` minus the exact requirement (MW MWs/Hz).
    pub margin: f64,
}

/// Exact (unlinearized) sufficient nadir condition
/// `H R >= dP^2 T_d / (4 df_lim) - dP T_d D_0 / 4 + dP T_d sum(gamma H^2) / 4`.
pub fn deterministic_nadir_check(
    h: f64,
    r: f64,
    d0: f64,
    gamma_h2: f64,
    t_d: f64,
    df_lim: f64,
    dp: f64,
) -> NadirCheck {
    let need = dp * dp * t_d / (4.0 * df_lim) - dp * t_d * d0 / 4.0 + dp * t_d * gamma_h2 / 4.0;
    let margin = h * r - need;
    NadirCheck {
        holds: margin >= 0.0,
        margin,
    }
}

/// Fraction of `n` samples strictly below `mu + xi(eta) sigma`.
///
/// The strict inequality keeps the two-point distribution that attains the
/// Cantelli bound at coverage `eta` instead of 1. The sampler's empirical
/// mean and standard deviation must match `(mu, sigma)` within 1%.
pub fn empirical_coverage(
    mu: f64,
    sigma: f64,
    eta: f64,
    mut sampler: impl FnMut() -> f64,
    n: usize,
) -> Result<f64, DrccError> {
    let xi = xi(eta)?;
    if n == 0 {
        return Err(DrccError::Input("need at least one sample".into()));
    }
    let threshold = mu + xi * sigma;
    let samples: Vec<f64> = (0..n).map(|_| sampler()).collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    let scale = mu.abs().max(sigma).max(f64::MIN_POSITIVE);
    let mean_ok = (mean - mu).abs() <= 0.01 * scale;
    let std_ok = if sigma == 0.0 {
        std <= 1e-12 * scale
    } else {
        (std - sigma).abs() <= 0.01 * sigma
    };
    if !mean_ok || !std_ok {
        return Err(DrccError::SamplerMoments {
            mean,
            std,
            mu,
            sigma,
        });
    }
    if sigma == 0.0 {
        return Ok(1.0);
    }
    let hits = samples.iter().filter(|&&x| x < threshold).count();
    Ok(hits as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{enumerate_oracle, solve_relaxation, SolveStatus};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn limits() -> FrequencyLimits {
        FrequencyLimits {
            nadir_hz: 0.8,
            steady_state_hz: 0.5,
            rocof_hzps: 0.5,
            nominal_hz: 50.0,
            pfr_delivery_s: 10.0,
            damping: Default::default(),
        }
    }

    #[test]
    fn xi_values() {
        assert_abs_diff_eq!(xi(0.95).unwrap(), 19f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(xi(0.95).unwrap(), 4.3589, epsilon = 1e-4);
        assert_eq!(xi(0.5).unwrap(), 1.0);
        assert_abs_diff_eq!(xi(0.9).unwrap(), 3.0, epsilon = 1e-12);
        assert!(matches!(xi(0.0), Err(DrccError::Confidence(_))));
        assert!(matches!(xi(1.0), Err(DrccError::Confidence(_))));
    }

    #[test]
    fn coefficients_k2() {
        let s = pwl_coefficients(6, 10.0).unwrap();
        assert_eq!(s.len(), 6);
        assert_abs_diff_eq!(s[0].a, 5.0 / (2.0 * 6f64.sqrt()), epsilon = 1e-12);
        assert_abs_diff_eq!(s[0].a, 1.02062, epsilon = 1e-5);
        assert_abs_diff_eq!(s[0].b, -3.0 / (2.0 * 6f64.sqrt()), epsilon = 1e-12);
        assert_abs_diff_eq!(s[0].b, -0.61237, epsilon = 1e-5);
        assert_eq!((s[5].a, s[5].b), (1.0, -0.5));
        assert_eq!((s[1].lo, s[1].hi), (3.0, 5.0));
        assert_eq!((s[5].lo, s[5].hi), (11.0, f64::INFINITY));
    }

    #[test]
    fn tangent_points() {
        let d = 0.7276;
        for (n_seg, k) in [(6, 10.0), (8, 12.0), (3, 1.0)] {
            let segs = pwl_coefficients(n_seg, k).unwrap();
            for s in &segs[..segs.len() - 1] {
                let x2 = s.hi * d;
                let exact = (x2 * (x2 - d)).sqrt();
                assert_abs_diff_eq!(s.value(x2, d), exact, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn invalid_linearization() {
        assert!(pwl_coefficients(1, 12.0).is_err());
        assert!(pwl_coefficients(8, 0.0).is_err());
    }

    #[test]
    fn reference_point_check() {
        // dP = 37 MW, df_lim = 0.8 Hz, D_0 = 0.005 * 162.7, H = 86, R = 50.1.
        let d0 = 0.005 * 162.7;
        let x2 = 37.0 / 0.8f64.sqrt();
        let d = 0.8f64.sqrt() * d0;
        assert_abs_diff_eq!(x2, 41.3673, epsilon = 1e-4);
        let rhs = 10.0 / 4.0 * x2 * (x2 - d);
        assert_abs_diff_eq!(rhs, 4202.876, epsilon = 1e-2);
        let c = deterministic_nadir_check(86.0, 50.1, d0, 0.0, 10.0, 0.8, 37.0);
        assert!(c.holds);
        assert_abs_diff_eq!(c.margin, 86.0 * 50.1 - rhs, epsilon = 1e-9);
        assert_abs_diff_eq!(c.margin, 105.72, epsilon = 1e-2);

        let zero = deterministic_nadir_check(86.0, 50.1, d0, 0.0, 10.0, 0.8, 0.0);
        assert!(zero.holds);
        assert_abs_diff_eq!(zero.margin, 86.0 * 50.1, epsilon = 1e-9);

        // H R one below the requirement.
        let r = (rhs - 1.0) / 86.0;
        let c = deterministic_nadir_check(86.0, r, d0, 0.0, 10.0, 0.8, 37.0);
        assert!(!c.holds);
        assert_abs_diff_eq!(c.margin, -1.0, epsilon = 1e-9);
    }

    /// Program with a nadir block whose disturbance is fixed at `dp` (MW),
    /// minimizing `H` at fixed `R`.
    fn fixed_disturbance(
        dp: f64,
        params: &DrccParams,
        d0: f64,
    ) -> (ConicProgram, NadirBlock, VarId) {
        let mut p = ConicProgram::new();
        let h = p.add_continuous("H", 0.0, 1e4).unwrap();
        let r = p.add_continuous("R", 50.0, 50.0).unwrap();
        let shed = p.add_continuous("shed", 0.0, 0.0).unwrap();
        let loss = p.add_continuous("loss", dp, dp).unwrap();
        let handles = FrequencyHandles {
            inertia: h,
            pfr: r,
            wind_si: vec![],
            shed_mean: shed,
            loss,
            constant_power: None,
        };
        let ctx = BlockContext {
            d0,
            dpl_max: 80.0,
            tag: "t1_s1".into(),
        };
        let block = build_nadir_block(&mut p, &handles, params, &limits(), &ctx).unwrap();
        p.add_objective_term(h, 1.0);
        (p, block, h)
    }

    #[test]
    fn fixed_x2_selects_interval() {
        let params = DrccParams {
            segments: 6,
            range_k: 10.0,
            ..DrccParams::default()
        };
        let d0 = 0.8135;
        let d = 0.8f64.sqrt() * d0;
        // x2 = dP / sqrt(0.8) = 3 d exactly lands on the [3, 5) boundary.
        let dp = 3.0 * d * 0.8f64.sqrt();
        let (mut p, block, h) = fixed_disturbance(dp, &params, d0);
        p.set_bounds(block.x2, 3.0 * d, 3.0 * d).unwrap();
        assert_eq!(p.num_binaries(), 11);
        let s = enumerate_oracle(&p).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(block.selected(&s.values), Some(1));
        let zsum: f64 = block.select.iter().map(|z| s.value(*z)).sum();
        assert_abs_diff_eq!(zsum, 1.0, epsilon = 1e-9);
        // H = (T_d / 4) x1^2 / R with x1 on piece 2.
        let x1 = block.segments[1].value(3.0 * d, d);
        assert_abs_diff_eq!(s.value(block.x1), x1, epsilon = 1e-6);
        assert_abs_diff_eq!(s.value(h), 2.5 * x1 * x1 / 50.0, epsilon = 1e-4);
        assert!(p.check_point(&s.values).unwrap().is_clean(1e-6));
    }

    #[test]
    fn floor_gives_zero_requirement() {
        // A tiny disturbance puts x2 on its floor d, where piece 1 gives
        // a x2 + b d = (a + b) d > 0 but the exact requirement is 0.
        let params = DrccParams {
            segments: 3,
            range_k: 2.0,
            ..DrccParams::default()
        };
        let d0 = 0.8135;
        let d = 0.8f64.sqrt() * d0;
        let (p, block, _) = fixed_disturbance(0.1, &params, d0);
        let s = enumerate_oracle(&p).unwrap();
        assert_abs_diff_eq!(s.value(block.x2), d, epsilon = 1e-6);
        assert_eq!(block.selected(&s.values), Some(0));
        let seg = block.segments[0];
        assert_abs_diff_eq!(s.value(block.x1), (seg.a + seg.b) * d, epsilon = 1e-6);
        assert!((seg.a + seg.b) * d >= 0.0);
    }

    #[test]
    fn linearization_never_weaker_than_exact() {
        let params = DrccParams {
            segments: 4,
            range_k: 6.0,
            ..DrccParams::default()
        };
        let d0 = 0.8135;
        for dp in [5.0, 12.0, 37.0, 70.0] {
            let (p, block, h) = fixed_disturbance(dp, &params, d0);
            let s = enumerate_oracle(&p).unwrap();
            let x2 = s.value(block.x2);
            let check = deterministic_nadir_check(s.value(h), 50.0, d0, 0.0, 10.0, 0.8, dp);
            assert!(check.margin >= -1e-6, "{dp}: {check:?}");
            assert!(s.value(block.x1).powi(2) >= x2 * (x2 - block.d) - 1e-6);
        }
    }

    #[test]
    fn big_m_sizing() {
        let params = DrccParams::default();
        let ctx = BlockContext {
            d0: 0.8135,
            dpl_max: 80.0,
            tag: "x".into(),
        };
        let m = size_big_m(&params, &limits(), &ctx).unwrap();
        let xi = params.xi().unwrap();
        assert_abs_diff_eq!(
            m.x2_max,
            80.0 * (1.0 + 0.1 * xi) / 0.8f64.sqrt(),
            epsilon = 1e-9
        );
        let bad = DrccParams {
            big_m: Some(1.0),
            ..DrccParams::default()
        };
        assert!(matches!(
            size_big_m(&bad, &limits(), &ctx),
            Err(DrccError::Sizing { name: "M", .. })
        ));
        let bad = DrccParams {
            big_m_prime: Some(1.0),
            ..DrccParams::default()
        };
        assert!(matches!(
            size_big_m(&bad, &limits(), &ctx),
            Err(DrccError::Sizing { name: "M'", .. })
        ));
    }

    fn rocof_program(h_fixed: Option<f64>, dp: f64) -> (ConicProgram, VarId) {
        let mut p = ConicProgram::new();
        let (lo, hi) = h_fixed.map_or((0.0, 1e3), |h| (h, h));
        let h = p.add_continuous("H", lo, hi).unwrap();
        let r = p.add_continuous("R", 0.0, 100.0).unwrap();
        let shed = p.add_continuous("shed", 0.0, 0.0).unwrap();
        let loss = p.add_continuous("loss", dp, dp).unwrap();
        let handles = FrequencyHandles {
            inertia: h,
            pfr: r,
            wind_si: vec![],
            shed_mean: shed,
            loss,
            constant_power: None,
        };
        build_rocof_constraint(&mut p, &handles, &DrccParams::default(), &limits(), "t1").unwrap();
        p.add_objective_term(h, 1.0);
        (p, h)
    }

    #[test]
    fn rocof_examples() {
        let (p, h) = rocof_program(None, 37.0);
        let s = solve_relaxation(&p, &[]).unwrap();
        assert_abs_diff_eq!(s.value(h), 37.0, epsilon = 1e-6);
        let (p, h) = rocof_program(None, 0.0);
        let s = solve_relaxation(&p, &[]).unwrap();
        assert_abs_diff_eq!(s.value(h), 0.0, epsilon = 1e-6);
        let (p, _) = rocof_program(Some(48.7), 30.2);
        assert_eq!(
            solve_relaxation(&p, &[]).unwrap().status,
            SolveStatus::Optimal
        );
        let (p, _) = rocof_program(Some(30.0), 30.2);
        assert_eq!(
            solve_relaxation(&p, &[]).unwrap().status,
            SolveStatus::Infeasible
        );
    }

    #[test]
    fn steady_state_examples() {
        let ss_program = |r: f64, dpc: f64, d0: f64, dp: f64, wind: Option<(f64, f64)>| {
            let mut p = ConicProgram::new();
            let h = p.add_continuous("H", 0.0, 1e3).unwrap();
            let rv = p.add_continuous("R", r, r).unwrap();
            let c = p.add_continuous("C", dpc, dpc).unwrap();
            let shed = p.add_continuous("shed", 0.0, 0.0).unwrap();
            let loss = p.add_continuous("loss", dp, dp).unwrap();
            let mut wind_si = vec![];
            if let Some((gamma, hw)) = wind {
                wind_si.push((p.add_continuous("Hw", hw, hw).unwrap(), gamma));
            }
            let handles = FrequencyHandles {
                inertia: h,
                pfr: rv,
                wind_si,
                shed_mean: shed,
                loss,
                constant_power: Some(c),
            };
            let ctx = BlockContext {
                d0,
                dpl_max: 80.0,
                tag: "t1".into(),
            };
            build_ss_constraint(&mut p, &handles, &DrccParams::default(), &limits(), &ctx).unwrap();
            p
        };
        let d0: f64 = 0.998;
        // R + dP_C - dP = -D_0 df_ss exactly: binding.
        let p = ss_program(30.0 - d0 * 0.5, 0.0, d0, 30.0, None);
        let rep = p
            .check_point(&[0.0, 30.0 - d0 * 0.5, 0.0, 0.0, 30.0])
            .unwrap();
        assert!(rep.is_clean(1e-12));
        // Wind term 0.5 * 0.01 * 10^2 = 0.5 MW of extra requirement.
        let need = 30.0 - d0 * 0.5 + 0.5;
        let p = ss_program(need, 0.0, d0, 30.0, Some((0.01, 10.0)));
        assert!(p
            .check_point(&[0.0, need, 0.0, 0.0, 30.0, 10.0])
            .unwrap()
            .is_clean(1e-12));
        let x = [0.0, need - 0.01, 0.0, 0.0, 30.0, 10.0];
        let p = ss_program(need - 0.01, 0.0, d0, 30.0, Some((0.01, 10.0)));
        assert!(!p.check_point(&x).unwrap().is_clean(1e-6));
        // Second operating point: slack 57 + 0.499 - 30.2 = 27.3 MW.
        let slack: f64 = 57.0 + d0 * 0.5 - 30.2;
        assert_abs_diff_eq!(slack, 27.3, epsilon = 0.01);
        let p = ss_program(57.0, 0.0, d0, 30.2, None);
        assert_eq!(
            solve_relaxation(&p, &[]).unwrap().status,
            SolveStatus::Optimal
        );
    }

    #[test]
    fn coverage_degenerate_and_moment_guard() {
        assert_eq!(
            empirical_coverage(37.0, 0.0, 0.95, || 37.0, 100).unwrap(),
            1.0
        );
        let mut flip = false;
        let bad = empirical_coverage(
            0.0,
            1.0,
            0.9,
            || {
                flip = !flip;
                if flip {
                    3.0
                } else {
                    -3.0
                }
            },
            1000,
        );
        assert!(matches!(bad, Err(DrccError::SamplerMoments { .. })));
    }

    proptest! {
        #[test]
        fn segments_over_estimate(ratio in 1.0f64..17.0, d in 0.01f64..10.0) {
            let segs = pwl_coefficients(8, 12.0).unwrap();
            let x2 = ratio * d;
            let s = active_segment(&segs, x2, d);
            let exact = (x2 * x2 - d * x2).max(0.0).sqrt();
            prop_assert!(s.value(x2, d) >= exact - 1e-12 * x2);
            for t in &segs {
                prop_assert!(t.value(x2, d) >= exact - 1e-12 * x2);
            }
        }

        #[test]
        fn added_cut_is_valid(ratio in 1.0f64..30.0, d in 0.01f64..10.0) {
            let segs = pwl_coefficients(8, 12.0).unwrap();
            let x2 = ratio * d;
            let s = active_segment(&segs, x2, d);
            let last = if s.n == segs.len() { 1.0 } else { 0.0 };
            prop_assert!(s.value(x2, d) >= x2 - d + 0.5 * d * last - 1e-12 * x2);
        }

        #[test]
        fn xi_monotone_and_reciprocal(a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-9);
            prop_assert!(xi(lo).unwrap() < xi(hi).unwrap());
            prop_assert!((xi(a).unwrap() * xi(1.0 - a).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn constant_wind_term_is_conservative(
            dp_frac in 0.0f64..1.0,
            dpl_max in 1.0f64..200.0,
            gamma in 0.0f64..0.1,
            hw in 0.0f64..50.0,
        ) {
            let dp = dp_frac * dpl_max;
            let t_d = 10.0;
            let replaced = dpl_max * t_d / 4.0 * gamma * hw * hw;
            let exact = dp * t_d / 4.0 * gamma * hw * hw;
            prop_assert!(replaced >= exact);
        }
    }
}
