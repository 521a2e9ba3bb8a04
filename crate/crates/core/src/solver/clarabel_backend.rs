use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{Backend, Capabilities, Relaxation, SolveStatus, SolverError};
use crate::conic::{AffineExpr, Cone, ConicProgram, Sense};

/// Interior-point backend on the `clarabel` crate.
///
/// The program is mapped to `A x + s = b, s in K` with the cone blocks
/// ordered zero, nonnegative, second-order. Fixed variables become equality
/// rows. A rotated cone `2 p q >= |u|^2` enters as the standard cone
/// `|(p - q, sqrt(2) u)| <= p + q`. A failed solve is retried once with
/// stronger regularization.
#[derive(Debug, Clone)]
pub struct ClarabelBackend {
    pub max_iter: u32,
    pub tol_feas: f64,
    pub tol_gap_rel: f64,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        ClarabelBackend {
            max_iter: 200,
            tol_feas: 1e-8,
            tol_gap_rel: 1e-8,
        }
    }
}

struct Rows {
    cols: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn new() -> Self {
        Rows {
            cols: vec![],
            rows: vec![],
            vals: vec![],
            b: vec![],
        }
    }

    /// Append the row `s = rhs - coef . x`.
    fn push(&mut self, terms: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let r = self.b.len();
        for (c, v) in terms {
            if v != 0.0 {
                self.rows.push(r);
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.b.push(rhs);
    }

    /// Append `s = e(x)` for an affine member of a cone.
    fn push_member(&mut self, e: &AffineExpr, scale: f64) {
        self.push(
            e.terms.iter().map(|(v, c)| (v.0, -scale * c)),
            scale * e.constant,
        );
    }

    fn push_difference(&mut self, a: &AffineExpr, b: &AffineExpr, sign: f64) {
        let mut e = a.clone();
        e.add_expr(b, sign);
        self.push_member(&e, 1.0);
    }
}

impl ClarabelBackend {
    fn settings(&self, retry: bool) -> DefaultSettings<f64> {
        let mut b = DefaultSettingsBuilder::default();
        b.verbose(false)
            .max_iter(if retry {
                2 * self.max_iter
            } else {
                self.max_iter
            })
            .tol_feas(self.tol_feas)
            .tol_gap_rel(self.tol_gap_rel)
            .tol_gap_abs(self.tol_gap_rel)
            .max_threads(1);
        if retry {
            b.static_regularization_constant(1e-7)
                .static_regularization_proportional(f64::EPSILON.sqrt())
                .iterative_refinement_max_iter(30)
                .equilibrate_max_iter(50);
        }
        b.build().expect("static solver settings are valid")
    }

    fn assemble(
        program: &ConicProgram,
        lower: &[f64],
        upper: &[f64],
    ) -> (CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>) {
        let mut zero = Rows::new();
        let mut nonneg = Rows::new();
        for row in program.rows() {
            let terms = row.terms.iter().map(|(v, c)| (v.0, *c));
            match row.sense {
                Sense::Eq => zero.push(terms, row.rhs),
                Sense::Le => nonneg.push(terms, row.rhs),
                Sense::Ge => nonneg.push(terms.map(|(v, c)| (v, -c)), -row.rhs),
            }
        }
        for (i, (&lo, &hi)) in lower.iter().zip(upper).enumerate() {
            if lo == hi {
                zero.push([(i, 1.0)], lo);
                continue;
            }
            if lo.is_finite() {
                nonneg.push([(i, -1.0)], -lo);
            }
            if hi.is_finite() {
                nonneg.push([(i, 1.0)], hi);
            }
        }
        let mut socs = Rows::new();
        let mut dims = vec![];
        for cone in program.cones() {
            match cone {
                Cone::SecondOrder { t, u, .. } => {
                    socs.push_member(t, 1.0);
                    for e in u {
                        socs.push_member(e, 1.0);
                    }
                    dims.push(1 + u.len());
                }
                Cone::Rotated { p, q, u, .. } => {
                    socs.push_difference(p, q, 1.0);
                    socs.push_difference(p, q, -1.0);
                    for e in u {
                        socs.push_member(e, std::f64::consts::SQRT_2);
                    }
                    dims.push(2 + u.len());
                }
            }
        }

        let mut cones = vec![];
        if !zero.b.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(zero.b.len()));
        }
        if !nonneg.b.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(nonneg.b.len()));
        }
        cones.extend(dims.into_iter().map(SupportedConeT::SecondOrderConeT));

        let (mut ri, mut ci, mut vi, mut b) = (vec![], vec![], vec![], vec![]);
        for block in [zero, nonneg, socs] {
            let off = b.len();
            ri.extend(block.rows.iter().map(|r| r + off));
            ci.extend(block.cols);
            vi.extend(block.vals);
            b.extend(block.b);
        }
        let a = CscMatrix::new_from_triplets(b.len(), program.num_vars(), ri, ci, vi);
        (a, b, cones)
    }

    fn run(
        &self,
        program: &ConicProgram,
        a: &CscMatrix<f64>,
        b: &[f64],
        cones: &[SupportedConeT<f64>],
        retry: bool,
    ) -> Result<Option<Relaxation>, SolverError> {
        let n = program.num_vars();
        let mut q = vec![0.0; n];
        for (v, c) in &program.objective().terms {
            q[v.0] += c;
        }
        let p = CscMatrix::zeros((n, n));
        let mut solver =
            DefaultSolver::new(&p, &q, a, b, cones, self.settings(retry)).map_err(|e| {
                SolverError::Backend {
                    backend: self.name().into(),
                    context: String::new(),
                    message: e.to_string(),
                }
            })?;
        solver.solve();
        let sol = &solver.solution;
        let constant = program.objective().constant;
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::Feasible,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                return Ok(Some(Relaxation {
                    status: SolveStatus::Infeasible,
                    values: vec![],
                    objective: f64::INFINITY,
                    bound: f64::INFINITY,
                }))
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                return Ok(Some(Relaxation {
                    status: SolveStatus::Unbounded,
                    values: vec![],
                    objective: f64::NEG_INFINITY,
                    bound: f64::NEG_INFINITY,
                }))
            }
            _ => return Ok(None),
        };
        let objective = program.objective().eval(&sol.x);
        let bound = (sol.obj_val_dual + constant).min(objective);
        Ok(Some(Relaxation {
            status,
            values: sol.x.clone(),
            objective,
            bound,
        }))
    }
}

impl Backend for ClarabelBackend {
    fn name(&self) -> &str {
        "clarabel"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            second_order_cones: true,
            rotated_cones: true,
        }
    }

    fn solve(
        &self,
        program: &ConicProgram,
        lower: &[f64],
        upper: &[f64],
    ) -> Result<Relaxation, SolverError> {
        if lower.iter().zip(upper).any(|(l, h)| l > h) {
            return Ok(Relaxation {
                status: SolveStatus::Infeasible,
                values: vec![],
                objective: f64::INFINITY,
                bound: f64::INFINITY,
            });
        }
        let (a, b, cones) = Self::assemble(program, lower, upper);
        if let Some(r) = self.run(program, &a, &b, &cones, false)? {
            return Ok(r);
        }
        match self.run(program, &a, &b, &cones, true)? {
            Some(r) => Ok(r),
            None => Err(SolverError::Backend {
                backend: self.name().into(),
                context: String::new(),
                message: "no solution after regularized retry".into(),
            }),
        }
    }
}
