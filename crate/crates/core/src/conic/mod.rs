//! Solver-agnostic mixed-integer conic program.
//!
//! Variables are real scalars, either continuous or binary. Constraints are
//! linear rows, second-order cones `||u|| <= t` and rotated cones
//! `2 p q >= ||u||^2, p, q >= 0`. Cone members are affine expressions so that
//! scaled variables and constants can appear directly. The objective is
//! linear; quadratic cost terms enter through epigraph variables.

mod text;

pub use text::{export_text, parse_text, TextError, FORMAT_HEADER};

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    /// Branching priority; higher classes are branched on first.
    pub priority: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("invalid name `{0}`: names must be nonempty and contain no whitespace")]
    InvalidName(String),
    #[error("bounds [{lower}, {upper}] of `{name}` are empty or not numbers")]
    Bounds {
        name: String,
        lower: f64,
        upper: f64,
    },
    #[error("unknown variable handle {0}")]
    UnknownVariable(usize),
    #[error("binary variable `{0}` cannot appear in a cone")]
    BinaryInCone(String),
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("point has {got} values, program has {expected} variables")]
    MissingVariable { expected: usize, got: usize },
}

/// `constant + sum(coef * var)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub constant: f64,
    pub terms: Vec<(VarId, f64)>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr {
            constant: c,
            terms: vec![],
        }
    }

    pub fn var(v: VarId) -> Self {
        AffineExpr {
            constant: 0.0,
            terms: vec![(v, 1.0)],
        }
    }

    pub fn scaled(v: VarId, coef: f64) -> Self {
        AffineExpr {
            constant: 0.0,
            terms: vec![(v, coef)],
        }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (VarId, f64)>) -> Self {
        let mut e = AffineExpr::default();
        for (v, c) in terms {
            e.add_term(v, c);
        }
        e
    }

    /// Add `coef * v`, merging with an existing term on the same variable.
    pub fn add_term(&mut self, v: VarId, coef: f64) -> &mut Self {
        if let Some(t) = self.terms.iter_mut().find(|t| t.0 == v) {
            t.1 += coef;
        } else {
            self.terms.push((v, coef));
        }
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_expr(&mut self, other: &AffineExpr, scale: f64) -> &mut Self {
        self.constant += scale * other.constant;
        for &(v, c) in &other.terms {
            self.add_term(v, scale * c);
        }
        self
    }

    pub fn with_term(mut self, v: VarId, coef: f64) -> Self {
        self.add_term(v, coef);
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * x[v.0]).sum::<f64>()
    }

    /// `|constant| + sum |coef * x|`, the magnitude used for relative checks.
    fn magnitude(&self, x: &[f64]) -> f64 {
        self.constant.abs()
            + self
                .terms
                .iter()
                .map(|(v, c)| (c * x[v.0]).abs())
                .sum::<f64>()
    }
}

impl From<VarId> for AffineExpr {
    fn from(v: VarId) -> Self {
        AffineExpr::var(v)
    }
}

impl From<f64> for AffineExpr {
    fn from(c: f64) -> Self {
        AffineExpr::constant(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

/// `sum(coef * var) sense rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cone {
    /// `||u|| <= t`.
    SecondOrder {
        name: String,
        t: AffineExpr,
        u: Vec<AffineExpr>,
    },
    /// `2 p q >= ||u||^2` with `p, q >= 0`.
    Rotated {
        name: String,
        p: AffineExpr,
        q: AffineExpr,
        u: Vec<AffineExpr>,
    },
}

impl Cone {
    pub fn name(&self) -> &str {
        match self {
            Cone::SecondOrder { name, .. } | Cone::Rotated { name, .. } => name,
        }
    }

    /// Dimension of the equivalent standard second-order cone.
    pub fn dim(&self) -> usize {
        match self {
            Cone::SecondOrder { u, .. } => 1 + u.len(),
            Cone::Rotated { u, .. } => 2 + u.len(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    vars: Vec<Variable>,
    index: HashMap<String, VarId>,
    rows: Vec<LinearRow>,
    cones: Vec<Cone>,
    objective: AffineExpr,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(char::is_whitespace)
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_variable(
        &mut self,
        name: &str,
        kind: VarKind,
        lower: f64,
        upper: f64,
    ) -> Result<VarId, ConicError> {
        if !valid_name(name) {
            return Err(ConicError::InvalidName(name.to_string()));
        }
        if self.index.contains_key(name) {
            return Err(ConicError::DuplicateName(name.to_string()));
        }
        let (lower, upper) = match kind {
            VarKind::Continuous => (lower, upper),
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
        };
        if lower.is_nan()
            || upper.is_nan()
            || lower > upper
            || lower == f64::INFINITY
            || upper == f64::NEG_INFINITY
        {
            return Err(ConicError::Bounds {
                name: name.to_string(),
                lower,
                upper,
            });
        }
        let id = VarId(self.vars.len());
        self.vars.push(Variable {
            name: name.to_string(),
            kind,
            lower,
            upper,
            priority: 0,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_continuous(
        &mut self,
        name: &str,
        lower: f64,
        upper: f64,
    ) -> Result<VarId, ConicError> {
        self.add_variable(name, VarKind::Continuous, lower, upper)
    }

    pub fn add_binary(&mut self, name: &str) -> Result<VarId, ConicError> {
        self.add_variable(name, VarKind::Binary, 0.0, 1.0)
    }

    fn check_expr(&self, e: &AffineExpr, what: &str) -> Result<(), ConicError> {
        if !e.constant.is_finite() {
            return Err(ConicError::NonFinite(what.to_string()));
        }
        for &(v, c) in &e.terms {
            if v.0 >= self.vars.len() {
                return Err(ConicError::UnknownVariable(v.0));
            }
            if !c.is_finite() {
                return Err(ConicError::NonFinite(what.to_string()));
            }
        }
        Ok(())
    }

    /// Add `expr sense rhs`; the constant of `expr` moves to the right side.
    pub fn add_row(
        &mut self,
        name: &str,
        expr: impl Into<AffineExpr>,
        sense: Sense,
        rhs: f64,
    ) -> Result<RowId, ConicError> {
        let expr = expr.into();
        if !valid_name(name) {
            return Err(ConicError::InvalidName(name.to_string()));
        }
        self.check_expr(&expr, name)?;
        if !rhs.is_finite() {
            return Err(ConicError::NonFinite(name.to_string()));
        }
        let mut merged = AffineExpr::default();
        merged.add_expr(&expr, 1.0);
        let id = RowId(self.rows.len());
        self.rows.push(LinearRow {
            name: name.to_string(),
            terms: merged.terms,
            sense,
            rhs: rhs - expr.constant,
        });
        Ok(id)
    }

    fn check_cone_members(&self, name: &str, exprs: &[&AffineExpr]) -> Result<(), ConicError> {
        if !valid_name(name) {
            return Err(ConicError::InvalidName(name.to_string()));
        }
        for e in exprs {
            self.check_expr(e, name)?;
            for (v, _) in &e.terms {
                if self.vars[v.0].kind == VarKind::Binary {
                    return Err(ConicError::BinaryInCone(self.vars[v.0].name.clone()));
                }
            }
        }
        Ok(())
    }

    /// Register `||u|| <= t`.
    pub fn add_soc(
        &mut self,
        name: &str,
        t: impl Into<AffineExpr>,
        u: Vec<AffineExpr>,
    ) -> Result<ConeId, ConicError> {
        let t = t.into();
        let mut members = vec![&t];
        members.extend(u.iter());
        self.check_cone_members(name, &members)?;
        self.cones.push(Cone::SecondOrder {
            name: name.to_string(),
            t,
            u,
        });
        Ok(ConeId(self.cones.len() - 1))
    }

    /// Register `2 p q >= ||u||^2, p, q >= 0`.
    ///
    /// Backends that only know the standard cone use the equivalent
    /// `||(p - q, sqrt(2) u)|| <= p + q`.
    pub fn add_rotated_cone(
        &mut self,
        name: &str,
        p: impl Into<AffineExpr>,
        q: impl Into<AffineExpr>,
        u: Vec<AffineExpr>,
    ) -> Result<ConeId, ConicError> {
        let p = p.into();
        let q = q.into();
        let mut members = vec![&p, &q];
        members.extend(u.iter());
        self.check_cone_members(name, &members)?;
        self.cones.push(Cone::Rotated {
            name: name.to_string(),
            p,
            q,
            u,
        });
        Ok(ConeId(self.cones.len() - 1))
    }

    /// Add `coef * v` to the objective (minimisation).
    pub fn add_objective_term(&mut self, v: VarId, coef: f64) {
        self.objective.add_term(v, coef);
    }

    pub fn add_objective_constant(&mut self, c: f64) {
        self.objective.constant += c;
    }

    pub fn set_objective(&mut self, obj: AffineExpr) -> Result<(), ConicError> {
        self.check_expr(&obj, "objective")?;
        let mut merged = AffineExpr::constant(obj.constant);
        merged.add_expr(&AffineExpr::from_terms(obj.terms), 1.0);
        self.objective = merged;
        Ok(())
    }

    pub fn objective(&self) -> &AffineExpr {
        &self.objective
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn rows(&self) -> &[LinearRow] {
        &self.rows
    }

    pub fn cones(&self) -> &[Cone] {
        &self.cones
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn binaries(&self) -> Vec<VarId> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| VarId(i))
            .collect()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .count()
    }

    /// Tighten the bounds of an existing variable (used by the builders to
    /// switch features off without changing the program layout).
    pub fn set_priority(&mut self, v: VarId, priority: u32) -> Result<(), ConicError> {
        self.vars
            .get_mut(v.0)
            .ok_or(ConicError::UnknownVariable(v.0))?
            .priority = priority;
        Ok(())
    }

    pub fn set_bounds(&mut self, v: VarId, lower: f64, upper: f64) -> Result<(), ConicError> {
        let var = self
            .vars
            .get_mut(v.0)
            .ok_or(ConicError::UnknownVariable(v.0))?;
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(ConicError::Bounds {
                name: var.name.clone(),
                lower,
                upper,
            });
        }
        var.lower = lower;
        var.upper = upper;
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// Maximum violation of every constraint family at `x`.
    pub fn check_point(&self, x: &[f64]) -> Result<ResidualReport, ConicError> {
        if x.len() != self.vars.len() {
            return Err(ConicError::MissingVariable {
                expected: self.vars.len(),
                got: x.len(),
            });
        }
        let mut rep = ResidualReport::default();
        for (i, v) in self.vars.iter().enumerate() {
            let viol = (v.lower - x[i]).max(x[i] - v.upper).max(0.0);
            rep.bound.update(viol, viol / (1.0 + x[i].abs()), &v.name);
            if v.kind == VarKind::Binary {
                let frac = (x[i] - x[i].round()).abs();
                rep.integrality.update(frac, frac, &v.name);
            }
        }
        for row in &self.rows {
            let lhs: f64 = row.terms.iter().map(|(v, c)| c * x[v.0]).sum();
            let scale = 1.0
                + row.rhs.abs()
                + row
                    .terms
                    .iter()
                    .map(|(v, c)| (c * x[v.0]).abs())
                    .sum::<f64>();
            let viol = match row.sense {
                Sense::Le => (lhs - row.rhs).max(0.0),
                Sense::Ge => (row.rhs - lhs).max(0.0),
                Sense::Eq => (lhs - row.rhs).abs(),
            };
            rep.row.update(viol, viol / scale, &row.name);
        }
        for cone in &self.cones {
            let (viol, scale) = match cone {
                Cone::SecondOrder { t, u, .. } => {
                    let tv = t.eval(x);
                    let norm = u.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
                    let scale =
                        1.0 + t.magnitude(x) + u.iter().map(|e| e.magnitude(x)).sum::<f64>();
                    ((norm - tv).max(0.0), scale)
                }
                Cone::Rotated { p, q, u, .. } => {
                    let pv = p.eval(x);
                    let qv = q.eval(x);
                    let sq = u.iter().map(|e| e.eval(x).powi(2)).sum::<f64>();
                    let scale = 1.0
                        + 2.0 * p.magnitude(x) * q.magnitude(x)
                        + u.iter().map(|e| e.magnitude(x).powi(2)).sum::<f64>();
                    let viol = (sq - 2.0 * pv * qv).max(-pv).max(-qv).max(0.0);
                    (viol, scale)
                }
            };
            rep.cone.update(viol, viol / scale, cone.name());
        }
        Ok(rep)
    }
}

/// Largest violation in one constraint family.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Absolute violation.
    pub max: f64,
    /// Violation divided by the magnitude of the terms involved.
    pub max_relative: f64,
    /// Name of the worst entry (by relative violation).
    pub worst: Option<String>,
}

impl Violation {
    fn update(&mut self, abs: f64, rel: f64, name: &str) {
        self.max = self.max.max(abs);
        if rel > self.max_relative {
            self.max_relative = rel;
            self.worst = Some(name.to_string());
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub bound: Violation,
    pub row: Violation,
    pub cone: Violation,
    pub integrality: Violation,
}

impl ResidualReport {
    /// Bounds, rows and cones within `tol` relative to the magnitude of
    /// their terms; binaries within `tol` of an integer.
    pub fn is_clean(&self, tol: f64) -> bool {
        self.bound.max_relative <= tol
            && self.row.max_relative <= tol
            && self.cone.max_relative <= tol
            && self.integrality.max <= tol
    }

    /// Same as [`is_clean`](Self::is_clean) with a separate tolerance for
    /// the continuous families.
    pub fn is_clean_with(&self, feas_tol: f64, int_tol: f64) -> bool {
        self.bound.max_relative <= feas_tol
            && self.row.max_relative <= feas_tol
            && self.cone.max_relative <= feas_tol
            && self.integrality.max <= int_tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_bounds_forced() {
        let mut p = ConicProgram::new();
        let y = p
            .add_variable("y_t1_s1_g2", VarKind::Binary, -5.0, 7.0)
            .unwrap();
        assert_eq!((p.var(y).lower, p.var(y).upper), (0.0, 1.0));
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut p = ConicProgram::new();
        p.add_continuous("x", 0.0, 1.0).unwrap();
        assert_eq!(
            p.add_continuous("x", 0.0, 1.0),
            Err(ConicError::DuplicateName("x".into()))
        );
    }

    #[test]
    fn inverted_bounds_rejected() {
        let mut p = ConicProgram::new();
        assert!(matches!(
            p.add_continuous("x", 5.0, 3.0),
            Err(ConicError::Bounds { .. })
        ));
        assert!(matches!(
            p.add_continuous("has space", 0.0, 1.0),
            Err(ConicError::InvalidName(_))
        ));
    }

    #[test]
    fn binary_in_cone_rejected() {
        let mut p = ConicProgram::new();
        let z = p.add_binary("z").unwrap();
        let x = p.add_continuous("x", 0.0, 1.0).unwrap();
        assert!(matches!(
            p.add_rotated_cone("c", x, 1.0, vec![z.into()]),
            Err(ConicError::BinaryInCone(_))
        ));
    }

    #[test]
    fn unknown_handle_rejected() {
        let mut p = ConicProgram::new();
        assert_eq!(
            p.add_row("r", AffineExpr::var(VarId(3)), Sense::Le, 1.0),
            Err(ConicError::UnknownVariable(3))
        );
    }

    #[test]
    fn rotated_cone_residuals() {
        let mut p = ConicProgram::new();
        let a = p
            .add_continuous("p", f64::NEG_INFINITY, f64::INFINITY)
            .unwrap();
        let b = p
            .add_continuous("q", f64::NEG_INFINITY, f64::INFINITY)
            .unwrap();
        let u = p
            .add_continuous("u", f64::NEG_INFINITY, f64::INFINITY)
            .unwrap();
        p.add_rotated_cone("hr", a, b, vec![u.into()]).unwrap();
        let rep = p.check_point(&[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(rep.cone.max, 2.0);
        assert!(!rep.is_clean(1e-6));
        let rep = p.check_point(&[1.0, 2.0, 2.0]).unwrap();
        assert!(rep.is_clean(1e-6));
    }

    #[test]
    fn empty_rotated_cone_is_nonnegativity() {
        let mut p = ConicProgram::new();
        let a = p.add_continuous("p", -1.0, 1.0).unwrap();
        let b = p.add_continuous("q", -1.0, 1.0).unwrap();
        p.add_rotated_cone("c", a, b, vec![]).unwrap();
        assert!(p.check_point(&[0.5, 0.2]).unwrap().is_clean(1e-9));
        assert!(p.check_point(&[-0.5, -0.2]).unwrap().cone.max > 0.0);
    }

    #[test]
    fn self_rotated_cone_accepts_nonnegative() {
        let mut p = ConicProgram::new();
        let v = p
            .add_continuous("v", f64::NEG_INFINITY, f64::INFINITY)
            .unwrap();
        p.add_rotated_cone("c", v, v, vec![v.into()]).unwrap();
        for x in [0.0, 0.3, 7.0, 1e3] {
            assert!(p.check_point(&[x]).unwrap().is_clean(1e-12), "{x}");
        }
        assert!(!p.check_point(&[-1.0]).unwrap().is_clean(1e-6));
    }

    #[test]
    fn integrality_and_rows() {
        let mut p = ConicProgram::new();
        let z = p.add_binary("z").unwrap();
        let x = p.add_continuous("x", 0.0, 10.0).unwrap();
        p.add_row(
            "link",
            AffineExpr::var(x).with_term(z, -10.0),
            Sense::Le,
            0.0,
        )
        .unwrap();
        let rep = p.check_point(&[0.5, 5.0]).unwrap();
        assert_eq!(rep.integrality.max, 0.5);
        assert_eq!(rep.row.max, 0.0);
        assert!(p.check_point(&[1.0, 5.0]).unwrap().is_clean(1e-6));
        assert_eq!(
            p.check_point(&[1.0]),
            Err(ConicError::MissingVariable {
                expected: 2,
                got: 1
            })
        );
    }

    #[test]
    fn row_constant_moves_to_rhs() {
        let mut p = ConicProgram::new();
        let x = p.add_continuous("x", 0.0, 10.0).unwrap();
        p.add_row(
            "r",
            AffineExpr::var(x).with_constant(2.0).with_term(x, 1.0),
            Sense::Ge,
            5.0,
        )
        .unwrap();
        assert_eq!(p.rows()[0].rhs, 3.0);
        assert_eq!(p.rows()[0].terms, vec![(x, 2.0)]);
    }
}
