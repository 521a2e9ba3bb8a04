//! Branch-and-bound over a continuous conic backend.
//!
//! A [`Backend`] solves the continuous relaxation of a [`ConicProgram`] under
//! per-variable bound overrides; [`solve_misocp`] searches over the binaries
//! with best-bound node selection and most-fractional branching, and
//! [`enumerate_oracle`] solves small programs exhaustively as a test oracle.

mod bnb;
mod clarabel_backend;
mod external;

pub use bnb::{
    solve_misocp, solve_misocp_rounded, solve_misocp_with, BoundSample, MisocpResult, Rounding,
    SearchStats,
};
pub use clarabel_backend::ClarabelBackend;
pub use external::{ExternalBackend, EXTERNAL_SOLVER_ENV};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{ConicProgram, VarId, VarKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("backend `{backend}` failed{context}: {message}")]
    Backend {
        backend: String,
        context: String,
        message: String,
    },
    #[error("enumeration supports at most {max} binaries, program has {got}")]
    TooManyBinaries { max: usize, got: usize },
    #[error("invalid solve options: {0}")]
    Options(String),
    #[error("fixing refers to {0:?}, which is not a binary variable")]
    NotBinary(VarId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    /// Proven optimal (within the gap tolerance for mixed-integer programs).
    Optimal,
    /// A usable point without an optimality proof.
    Feasible,
    Infeasible,
    Unbounded,
    /// Node or time limit reached; `values` holds the incumbent if any.
    Limit,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Limit => "limit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionPoint {
    pub status: SolveStatus,
    /// One value per program variable; empty when there is no point.
    pub values: Vec<f64>,
    pub objective: f64,
    /// Lower bound on the optimum (minimisation).
    pub bound: f64,
}

impl SolutionPoint {
    pub fn without_point(status: SolveStatus) -> Self {
        let (objective, bound) = match status {
            SolveStatus::Unbounded => (f64::NEG_INFINITY, f64::NEG_INFINITY),
            _ => (f64::INFINITY, f64::INFINITY),
        };
        SolutionPoint {
            status,
            values: vec![],
            objective,
            bound,
        }
    }

    pub fn has_point(&self) -> bool {
        !self.values.is_empty()
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }

    /// Relative gap between objective and bound.
    pub fn gap(&self) -> f64 {
        relative_gap(self.objective, self.bound)
    }
}

pub(crate) fn relative_gap(objective: f64, bound: f64) -> f64 {
    if objective == bound {
        return 0.0;
    }
    if !objective.is_finite() || !bound.is_finite() {
        return f64::INFINITY;
    }
    (objective - bound).max(0.0) / objective.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeSelection {
    BestBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branching {
    /// Most fractional binary within the highest priority class that has
    /// a fractional member.
    MostFractional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub gap_rel: f64,
    pub gap_abs: f64,
    pub integrality_tol: f64,
    pub node_limit: usize,
    pub time_limit_s: f64,
    pub node_selection: NodeSelection,
    pub branching: Branching,
    /// Worker threads for sibling node solves; 1 solves sequentially.
    pub threads: usize,
    /// Forces sequential exploration regardless of `threads`.
    pub deterministic: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            gap_rel: 1e-4,
            gap_abs: 1e-6,
            integrality_tol: 1e-5,
            node_limit: 100_000,
            time_limit_s: 3600.0,
            node_selection: NodeSelection::BestBound,
            branching: Branching::MostFractional,
            threads: 1,
            deterministic: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = |x: f64| x > 0.0;
        if !positive(self.gap_rel) || !positive(self.gap_abs) || !positive(self.integrality_tol) {
            return Err(SolverError::Options("tolerances must be positive".into()));
        }
        if self.integrality_tol >= 0.5 {
            return Err(SolverError::Options(
                "integrality tolerance must be below 0.5".into(),
            ));
        }
        if self.node_limit == 0 || !positive(self.time_limit_s) || self.threads == 0 {
            return Err(SolverError::Options(
                "limits and thread count must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub second_order_cones: bool,
    pub rotated_cones: bool,
}

/// Result of one continuous solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Relaxation {
    pub status: SolveStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub bound: f64,
}

/// Continuous conic solver: binaries are treated as continuous variables
/// inside `[lower, upper]`, which override the program's own bounds.
pub trait Backend: Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn solve(
        &self,
        program: &ConicProgram,
        lower: &[f64],
        upper: &[f64],
    ) -> Result<Relaxation, SolverError>;
}

/// Program bounds with `fixings` applied.
pub(crate) fn bounds_with(
    program: &ConicProgram,
    fixings: &[(VarId, bool)],
) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    let mut lo: Vec<f64> = program.vars().iter().map(|v| v.lower).collect();
    let mut hi: Vec<f64> = program.vars().iter().map(|v| v.upper).collect();
    for &(v, on) in fixings {
        match program.vars().get(v.0) {
            Some(var) if var.kind == VarKind::Binary => {
                let x = if on { 1.0 } else { 0.0 };
                lo[v.0] = x;
                hi[v.0] = x;
            }
            _ => return Err(SolverError::NotBinary(v)),
        }
    }
    Ok((lo, hi))
}

fn relaxation_point(r: Relaxation) -> SolutionPoint {
    match r.status {
        SolveStatus::Infeasible | SolveStatus::Unbounded => SolutionPoint::without_point(r.status),
        status => SolutionPoint {
            status,
            values: r.values,
            objective: r.objective,
            bound: r.bound,
        },
    }
}

/// Continuous relaxation under `fixings`, binaries relaxed to `[0, 1]`.
pub fn solve_relaxation(
    program: &ConicProgram,
    fixings: &[(VarId, bool)],
) -> Result<SolutionPoint, SolverError> {
    solve_relaxation_with(&ClarabelBackend::default(), program, fixings)
}

pub fn solve_relaxation_with(
    backend: &dyn Backend,
    program: &ConicProgram,
    fixings: &[(VarId, bool)],
) -> Result<SolutionPoint, SolverError> {
    let (lo, hi) = bounds_with(program, fixings)?;
    backend.solve(program, &lo, &hi).map(relaxation_point)
}

pub const ORACLE_MAX_BINARIES: usize = 12;

/// Exact optimum by solving every binary assignment. Ties keep the first
/// assignment in counting order (binary `i` is bit `i`).
pub fn enumerate_oracle(program: &ConicProgram) -> Result<SolutionPoint, SolverError> {
    enumerate_oracle_with(&ClarabelBackend::default(), program)
}

pub fn enumerate_oracle_with(
    backend: &dyn Backend,
    program: &ConicProgram,
) -> Result<SolutionPoint, SolverError> {
    let bins = program.binaries();
    if bins.len() > ORACLE_MAX_BINARIES {
        return Err(SolverError::TooManyBinaries {
            max: ORACLE_MAX_BINARIES,
            got: bins.len(),
        });
    }
    let mut best: Option<SolutionPoint> = None;
    let mut unbounded = false;
    for mask in 0u32..(1 << bins.len()) {
        let fix: Vec<(VarId, bool)> = bins
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, mask >> i & 1 == 1))
            .collect();
        let (lo, hi) = bounds_with(program, &fix)?;
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            continue;
        }
        let r = backend.solve(program, &lo, &hi)?;
        match r.status {
            SolveStatus::Infeasible => {}
            SolveStatus::Unbounded => unbounded = true,
            _ => {
                if best.as_ref().is_none_or(|b| r.objective < b.objective) {
                    let mut values = r.values;
                    for &(v, on) in &fix {
                        values[v.0] = if on { 1.0 } else { 0.0 };
                    }
                    best = Some(SolutionPoint {
                        status: SolveStatus::Optimal,
                        values,
                        objective: r.objective,
                        bound: r.objective,
                    });
                }
            }
        }
    }
    if unbounded {
        return Ok(SolutionPoint::without_point(SolveStatus::Unbounded));
    }
    Ok(best.unwrap_or_else(|| SolutionPoint::without_point(SolveStatus::Infeasible)))
}
