use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    bounds_with, relative_gap, Backend, ClarabelBackend, Relaxation, SolutionPoint, SolveOptions,
    SolveStatus, SolverError,
};
use crate::conic::{ConicProgram, VarId};

/// Problem-specific rounding of a fractional point into binary fixings
/// worth polishing. Binaries left out are rounded at 0.5.
pub trait Rounding: Sync {
    /// Candidate fixings in order of preference; each costs one solve.
    fn propose(&self, x: &[f64]) -> Vec<Vec<(VarId, bool)>>;
}

/// Relaxations between two calls of the rounding hook during the search.
const ROUNDING_PERIOD: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSample {
    pub nodes: usize,
    pub bound: f64,
    pub incumbent: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Relaxations solved as search nodes (the root counts as one).
    pub nodes: usize,
    /// Extra solves with every binary fixed, used to polish incumbents.
    pub polish_solves: usize,
    /// Nodes whose relaxation failed numerically and were branched blind.
    pub numerical_failures: usize,
    pub max_depth: usize,
    pub elapsed_s: f64,
    /// Global bound and incumbent each time a node is expanded.
    pub bound_trace: Vec<BoundSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisocpResult {
    pub point: SolutionPoint,
    pub stats: SearchStats,
}

struct Node {
    bound: f64,
    id: usize,
    depth: usize,
    /// Per binary position: `None` free, `Some(v)` fixed.
    fixed: Vec<Option<bool>>,
    branch_on: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound, then the oldest node,
    // compares greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

enum Outcome {
    Pruned,
    Integral(Relaxation),
    Branch { bound: f64, branch_on: usize },
    Failed,
}

struct Search<'a> {
    program: &'a ConicProgram,
    backend: &'a dyn Backend,
    options: &'a SolveOptions,
    binaries: Vec<VarId>,
    rounding: Option<&'a dyn Rounding>,
    incumbent: Option<SolutionPoint>,
    stats: SearchStats,
    next_id: usize,
    /// Smallest bound among nodes dropped by the gap cutoff.
    cut_bound: f64,
}

impl<'a> Search<'a> {
    fn bounds(&self, fixed: &[Option<bool>]) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
        let fix: Vec<(VarId, bool)> = fixed
            .iter()
            .zip(&self.binaries)
            .filter_map(|(f, &v)| f.map(|on| (v, on)))
            .collect();
        bounds_with(self.program, &fix)
    }

    fn relax(&self, fixed: &[Option<bool>]) -> Result<Option<Relaxation>, SolverError> {
        let (lo, hi) = self.bounds(fixed)?;
        match self.backend.solve(self.program, &lo, &hi) {
            Ok(r) => Ok(Some(r)),
            Err(SolverError::Backend { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Most fractional free binary of the highest priority, lowest position
    /// on ties.
    fn most_fractional(&self, x: &[f64], fixed: &[Option<bool>]) -> Option<usize> {
        let tol = self.options.integrality_tol;
        let mut best: Option<(usize, u32, f64)> = None;
        for (i, &v) in self.binaries.iter().enumerate() {
            if fixed[i].is_some() {
                continue;
            }
            let frac = (x[v.0] - x[v.0].floor()).min(x[v.0].ceil() - x[v.0]);
            if frac <= tol {
                continue;
            }
            let prio = self.program.var(v).priority;
            if best.is_none_or(|(_, p, f)| prio > p || (prio == p && frac > f)) {
                best = Some((i, prio, frac));
            }
        }
        best.map(|(i, _, _)| i)
    }

    fn classify(&self, fixed: &[Option<bool>], r: Option<Relaxation>) -> Outcome {
        let Some(r) = r else {
            return Outcome::Failed;
        };
        match r.status {
            SolveStatus::Infeasible => Outcome::Pruned,
            SolveStatus::Unbounded => Outcome::Pruned,
            _ => match self.most_fractional(&r.values, fixed) {
                None => Outcome::Integral(r),
                Some(i) => Outcome::Branch {
                    bound: r.bound,
                    branch_on: i,
                },
            },
        }
    }

    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some(inc) => {
                inc.objective
                    - self
                        .options
                        .gap_abs
                        .max(self.options.gap_rel * inc.objective.abs().max(1.0))
            }
            None => f64::INFINITY,
        }
    }

    /// Fix every binary at its rounded value and re-solve; offer the result
    /// as incumbent.
    fn polish(&mut self, x: &[f64]) -> Result<(), SolverError> {
        let fixed: Vec<Option<bool>> = self.binaries.iter().map(|v| Some(x[v.0] > 0.5)).collect();
        self.polish_fixed(fixed)?;
        Ok(())
    }

    /// Polish the rounding hook's candidates until one is feasible.
    fn polish_rounded(&mut self, x: &[f64]) -> Result<(), SolverError> {
        let Some(rounding) = self.rounding else {
            return Ok(());
        };
        let position: std::collections::HashMap<VarId, usize> = self
            .binaries
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i))
            .collect();
        for candidate in rounding.propose(x) {
            let mut fixed: Vec<Option<bool>> =
                self.binaries.iter().map(|v| Some(x[v.0] > 0.5)).collect();
            for (v, on) in candidate {
                if let Some(&i) = position.get(&v) {
                    fixed[i] = Some(on);
                }
            }
            if self.polish_fixed(fixed)? {
                break;
            }
        }
        Ok(())
    }

    /// Returns whether the fixed program was feasible.
    fn polish_fixed(&mut self, fixed: Vec<Option<bool>>) -> Result<bool, SolverError> {
        self.stats.polish_solves += 1;
        let Some(r) = self.relax(&fixed)? else {
            return Ok(false);
        };
        if !matches!(r.status, SolveStatus::Optimal | SolveStatus::Feasible) {
            return Ok(false);
        }
        let mut values = r.values;
        for (f, v) in fixed.iter().zip(&self.binaries) {
            values[v.0] = if f.unwrap() { 1.0 } else { 0.0 };
        }
        let objective = self.program.objective_value(&values);
        if self
            .incumbent
            .as_ref()
            .is_none_or(|inc| objective < inc.objective)
        {
            log::debug!("incumbent {objective} after {} nodes", self.stats.nodes);
            self.incumbent = Some(SolutionPoint {
                status: SolveStatus::Feasible,
                values,
                objective,
                bound: f64::NEG_INFINITY,
            });
        }
        Ok(true)
    }

    fn push_child(
        &mut self,
        heap: &mut BinaryHeap<Node>,
        fixed: Vec<Option<bool>>,
        depth: usize,
        parent_bound: f64,
        outcome: Outcome,
    ) -> Result<(), SolverError> {
        let (bound, branch_on) = match outcome {
            Outcome::Pruned => return Ok(()),
            Outcome::Integral(r) => {
                self.polish(&r.values)?;
                return Ok(());
            }
            Outcome::Branch { bound, branch_on } => (bound.max(parent_bound), branch_on),
            Outcome::Failed => {
                self.stats.numerical_failures += 1;
                match fixed.iter().position(Option::is_none) {
                    Some(i) => (parent_bound, i),
                    None => return Ok(()),
                }
            }
        };
        if bound >= self.cutoff() {
            self.cut_bound = self.cut_bound.min(bound);
            return Ok(());
        }
        self.stats.max_depth = self.stats.max_depth.max(depth);
        heap.push(Node {
            bound,
            id: self.next_id,
            depth,
            fixed,
            branch_on,
        });
        self.next_id += 1;
        Ok(())
    }
}

/// Branch-and-bound with the default interior-point backend.
pub fn solve_misocp(
    program: &ConicProgram,
    options: &SolveOptions,
) -> Result<MisocpResult, SolverError> {
    solve_misocp_with(&ClarabelBackend::default(), program, options)
}

pub fn solve_misocp_with(
    backend: &dyn Backend,
    program: &ConicProgram,
    options: &SolveOptions,
) -> Result<MisocpResult, SolverError> {
    solve_misocp_rounded(backend, program, options, None)
}

/// Branch-and-bound that also polishes the candidates of `rounding` at the
/// root and periodically during the search.
pub fn solve_misocp_rounded(
    backend: &dyn Backend,
    program: &ConicProgram,
    options: &SolveOptions,
    rounding: Option<&dyn Rounding>,
) -> Result<MisocpResult, SolverError> {
    options.validate()?;
    let start = Instant::now();
    let binaries = program.binaries();
    let mut search = Search {
        program,
        backend,
        options,
        binaries,
        rounding,
        incumbent: None,
        stats: SearchStats::default(),
        next_id: 0,
        cut_bound: f64::INFINITY,
    };
    let parallel = !options.deterministic && options.threads > 1;
    let pool = if parallel {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(options.threads)
                .build()
                .map_err(|e| SolverError::Options(e.to_string()))?,
        )
    } else {
        None
    };

    let root_fixed = vec![None; search.binaries.len()];
    let root = search.relax(&root_fixed)?;
    search.stats.nodes = 1;
    let Some(root) = root else {
        return Err(SolverError::Backend {
            backend: backend.name().into(),
            context: " at the root node".into(),
            message: "relaxation failed after retry".into(),
        });
    };
    match root.status {
        SolveStatus::Infeasible | SolveStatus::Unbounded => {
            search.stats.elapsed_s = start.elapsed().as_secs_f64();
            return Ok(MisocpResult {
                point: SolutionPoint::without_point(root.status),
                stats: search.stats,
            });
        }
        _ => {}
    }
    let root_bound = root.bound;
    let mut heap = BinaryHeap::new();
    match search.classify(&root_fixed, Some(root.clone())) {
        Outcome::Integral(r) => search.polish(&r.values)?,
        outcome => {
            // Rounding the root relaxation gives an early incumbent.
            search.polish_rounded(&root.values)?;
            search.polish(&root.values)?;
            search.push_child(&mut heap, root_fixed, 0, f64::NEG_INFINITY, outcome)?;
        }
    }

    let mut status = None;
    let mut global_bound = root_bound;
    while let Some(node) = heap.pop() {
        if node.bound >= search.cutoff() {
            search.cut_bound = search.cut_bound.min(node.bound);
            continue;
        }
        global_bound = global_bound.max(node.bound);
        let inc = search
            .incumbent
            .as_ref()
            .map_or(f64::INFINITY, |i| i.objective);
        search.stats.bound_trace.push(BoundSample {
            nodes: search.stats.nodes,
            bound: global_bound,
            incumbent: inc,
        });
        if relative_gap(inc, global_bound) <= options.gap_rel
            || inc - global_bound <= options.gap_abs
        {
            heap.push(node);
            break;
        }
        if search.stats.nodes >= options.node_limit
            || start.elapsed().as_secs_f64() >= options.time_limit_s
        {
            heap.push(node);
            status = Some(SolveStatus::Limit);
            break;
        }

        let mut children = [node.fixed.clone(), node.fixed];
        children[0][node.branch_on] = Some(false);
        children[1][node.branch_on] = Some(true);
        let results = match &pool {
            Some(pool) => {
                let (a, b) =
                    pool.join(|| search.relax(&children[0]), || search.relax(&children[1]));
                [a?, b?]
            }
            None => {
                let a = search.relax(&children[0])?;
                let b = search.relax(&children[1])?;
                [a, b]
            }
        };
        search.stats.nodes += 2;
        if search.rounding.is_some() && search.stats.nodes % ROUNDING_PERIOD < 2 {
            if let Some(r) = results.iter().flatten().find(|r| {
                matches!(r.status, SolveStatus::Optimal | SolveStatus::Feasible)
            }) {
                let x = r.values.clone();
                search.polish_rounded(&x)?;
            }
        }
        for (fixed, r) in children.into_iter().zip(results) {
            let outcome = search.classify(&fixed, r);
            search.push_child(&mut heap, fixed, node.depth + 1, node.bound, outcome)?;
        }
    }

    let open_bound = heap
        .iter()
        .map(|n| n.bound)
        .fold(search.cut_bound, f64::min);
    search.stats.elapsed_s = start.elapsed().as_secs_f64();
    let point = match search.incumbent.take() {
        Some(mut inc) => {
            inc.bound = open_bound.min(inc.objective);
            inc.status = match status {
                Some(s) => s,
                None if search.stats.numerical_failures > 0 && heap.is_empty() => {
                    SolveStatus::Feasible
                }
                None => SolveStatus::Optimal,
            };
            inc
        }
        None => match status {
            Some(s) => {
                let mut p = SolutionPoint::without_point(s);
                p.bound = open_bound.max(global_bound);
                p
            }
            None => SolutionPoint::without_point(SolveStatus::Infeasible),
        },
    };
    Ok(MisocpResult {
        point,
        stats: search.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{enumerate_oracle, solve_relaxation};
    use super::*;
    use crate::conic::{AffineExpr, Sense};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Knapsack-like program with a fractional root.
    fn fractional() -> ConicProgram {
        let mut p = ConicProgram::new();
        let a = p.add_binary("a").unwrap();
        let b = p.add_binary("b").unwrap();
        let c = p.add_binary("c").unwrap();
        p.add_row(
            "cap",
            AffineExpr::from_terms([(a, 3.0), (b, 4.0), (c, 5.0)]),
            Sense::Le,
            7.5,
        )
        .unwrap();
        p.set_objective(AffineExpr::from_terms([(a, -4.0), (b, -5.0), (c, -7.0)]))
            .unwrap();
        p
    }

    #[test]
    fn fixed_binaries_match_relaxation() {
        let mut p = fractional();
        for v in p.binaries() {
            p.set_bounds(v, 1.0, 1.0).unwrap();
        }
        p.set_bounds(VarId(2), 0.0, 0.0).unwrap();
        let r = solve_misocp(&p, &SolveOptions::default()).unwrap();
        let q = solve_relaxation(&p, &[]).unwrap();
        assert_eq!(r.point.status, SolveStatus::Optimal);
        assert_relative_eq!(r.point.objective, q.objective, max_relative = 1e-7);
        assert_eq!(r.stats.nodes, 1);
    }

    #[test]
    fn node_limit_one_on_fractional_root() {
        let p = fractional();
        let o = SolveOptions {
            node_limit: 1,
            ..SolveOptions::default()
        };
        let r = solve_misocp(&p, &o).unwrap();
        assert_eq!(r.point.status, SolveStatus::Limit);
        assert_eq!(r.stats.nodes, 1);
    }

    #[test]
    fn knapsack_matches_oracle() {
        let p = fractional();
        let r = solve_misocp(&p, &SolveOptions::default()).unwrap();
        let e = enumerate_oracle(&p).unwrap();
        assert_eq!(r.point.status, SolveStatus::Optimal);
        assert_relative_eq!(r.point.objective, e.objective, max_relative = 1e-6);
        assert_relative_eq!(r.point.objective, -9.0, max_relative = 1e-6);
        assert!(p.check_point(&r.point.values).unwrap().is_clean(1e-6));
    }

    #[test]
    fn infeasible_program() {
        let mut p = ConicProgram::new();
        let a = p.add_binary("a").unwrap();
        let b = p.add_binary("b").unwrap();
        p.add_row(
            "both",
            AffineExpr::from_terms([(a, 1.0), (b, 1.0)]),
            Sense::Eq,
            1.5,
        )
        .unwrap();
        p.add_row(
            "a_or_b",
            AffineExpr::from_terms([(a, 1.0), (b, -1.0)]),
            Sense::Eq,
            0.0,
        )
        .unwrap();
        let r = solve_misocp(&p, &SolveOptions::default()).unwrap();
        assert_eq!(r.point.status, SolveStatus::Infeasible);
    }

    /// Random program with linear rows, a rotated cone and big-M links.
    pub(crate) fn random_program(rng: &mut ChaCha8Rng, nbin: usize) -> ConicProgram {
        let mut p = ConicProgram::new();
        let h = p.add_continuous("h", 0.0, 20.0).unwrap();
        let r = p.add_continuous("r", 0.0, 20.0).unwrap();
        let x = p.add_continuous("x", 0.0, 10.0).unwrap();
        let need: f64 = rng.gen_range(1.0..6.0);
        p.add_rotated_cone("hr", h, r, vec![AffineExpr::scaled(x, 1.0)])
            .unwrap();
        let mut cover = AffineExpr::var(x);
        for i in 0..nbin {
            let z = p.add_binary(&format!("z{i}")).unwrap();
            let gain: f64 = rng.gen_range(0.5..3.0);
            let big_m = 10.0;
            let y = p.add_continuous(&format!("y{i}"), 0.0, 10.0).unwrap();
            // y_i <= gain when z_i = 1, else 0.
            p.add_row(
                &format!("on{i}"),
                AffineExpr::var(y).with_term(z, -gain),
                Sense::Le,
                0.0,
            )
            .unwrap();
            // z_i = 1 forces h >= gain (big-M indicator).
            p.add_row(
                &format!("ind{i}"),
                AffineExpr::var(h).with_term(z, -big_m),
                Sense::Ge,
                gain - big_m,
            )
            .unwrap();
            cover.add_term(y, 1.0);
            p.add_objective_term(z, rng.gen_range(0.5..4.0));
        }
        p.add_row("cover", cover, Sense::Ge, need).unwrap();
        p.add_objective_term(h, rng.gen_range(0.1..1.0));
        p.add_objective_term(r, rng.gen_range(0.1..1.0));
        p.add_objective_term(x, rng.gen_range(0.0..0.5));
        p
    }

    #[test]
    fn random_six_binary_programs_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let o = SolveOptions {
            gap_rel: 1e-8,
            ..SolveOptions::default()
        };
        for _ in 0..10 {
            let p = random_program(&mut rng, 6);
            let r = solve_misocp(&p, &o).unwrap();
            let e = enumerate_oracle(&p).unwrap();
            assert_eq!(r.point.status, SolveStatus::Optimal);
            assert_relative_eq!(r.point.objective, e.objective, max_relative = 1e-6);
            assert!(p.check_point(&r.point.values).unwrap().is_clean(1e-6));
            let b: Vec<f64> = r.stats.bound_trace.iter().map(|s| s.bound).collect();
            assert!(b.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_program(&mut rng, 8);
        let seq = solve_misocp(&p, &SolveOptions::default()).unwrap();
        let par = solve_misocp(
            &p,
            &SolveOptions {
                threads: 4,
                deterministic: false,
                ..SolveOptions::default()
            },
        )
        .unwrap();
        assert_eq!(seq.point, par.point);
        assert_eq!(seq.stats.nodes, par.stats.nodes);
    }
}
