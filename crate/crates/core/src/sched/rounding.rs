use super::ScheduleModel;
use crate::conic::VarId;
use crate::drcc::NadirBlock;
use crate::solver::{
    solve_misocp_rounded, Backend, ClarabelBackend, MisocpResult, Rounding, SolveOptions,
    SolverError,
};

/// Commitments above this are rounded up.
const ON_THRESHOLD: f64 = 1e-3;

/// Rounds commitments up and sets every nadir block's interval indicators
/// to match its relaxed `x2`, so the fixed program keeps the relaxed
/// disturbance within reach.
pub struct ScheduleRounding<'a> {
    model: &'a ScheduleModel,
}

impl<'a> ScheduleRounding<'a> {
    pub fn new(model: &'a ScheduleModel) -> Self {
        ScheduleRounding { model }
    }

    fn blocks(&self) -> impl Iterator<Item = &NadirBlock> {
        self.model
            .periods
            .iter()
            .flatten()
            .filter_map(|p| p.frequency.as_ref()?.nadir.as_ref())
    }

    fn commitments(&self, x: &[f64], all_on: bool) -> Vec<(VarId, bool)> {
        let mut out = vec![];
        for p in self.model.periods.iter().flatten() {
            for &y in &p.gen_on {
                out.push((y, all_on || x[y.0] > ON_THRESHOLD));
            }
        }
        out
    }
}

/// Index of the piece holding `x2`, lowered by `shift`.
fn piece_index(block: &NadirBlock, x2: f64, shift: usize) -> usize {
    let ratio = x2 / block.d + 1e-9;
    let i = block
        .segments
        .iter()
        .position(|s| s.contains(ratio))
        .unwrap_or(0);
    i.saturating_sub(shift)
}

fn select_piece(block: &NadirBlock, i: usize, out: &mut Vec<(VarId, bool)>) {
    for (j, (&u, &v)) in block.above.iter().zip(&block.below).enumerate() {
        out.push((u, j <= i));
        out.push((v, j >= i));
    }
    let last = block.segments.len() - 1;
    out.push((block.select[last], i == last));
}

impl Rounding for ScheduleRounding<'_> {
    fn propose(&self, x: &[f64]) -> Vec<Vec<(VarId, bool)>> {
        let with_pieces = |mut fix: Vec<(VarId, bool)>, shift: usize| {
            for b in self.blocks() {
                select_piece(b, piece_index(b, x[b.x2.0], shift), &mut fix);
            }
            fix
        };
        vec![
            with_pieces(self.commitments(x, false), 0),
            with_pieces(self.commitments(x, false), 1),
            with_pieces(self.commitments(x, true), 0),
        ]
    }
}

/// Branch-and-bound on `model` with the schedule rounding as primal
/// heuristic.
pub fn solve_schedule(
    model: &ScheduleModel,
    options: &SolveOptions,
    backend: Option<&dyn Backend>,
) -> Result<MisocpResult, SolverError> {
    let default = ClarabelBackend::default();
    let backend = backend.unwrap_or(&default);
    let rounding = ScheduleRounding::new(model);
    solve_misocp_rounded(backend, &model.program, options, Some(&rounding))
}
