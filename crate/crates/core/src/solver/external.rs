//! Bridge to an external conic solver via the canonical text export.
//!
//! The command is invoked as `<command> <args...> <model.txt> <solution.txt>`.
//! The model is the text export of the program with the node's bounds
//! applied. The solver writes a solution file of the form
//!
//! ```text
//! status optimal
//! objective 12.5
//! bound 12.49
//! x_1,0.25
//! y_t1_s1_g2,1
//! ```
//!
//! `status` is one of `optimal`, `feasible`, `infeasible`, `unbounded`;
//! `objective` and `bound` are optional (the objective is recomputed from
//! the values); every variable must appear exactly once as `name,value`.

use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{Backend, Capabilities, Relaxation, SolveStatus, SolverError};
use crate::conic::{export_text, ConicProgram};

/// Environment variable holding the external solver command line.
pub const EXTERNAL_SOLVER_ENV: &str = "FCSCHED_EXTERNAL_SOLVER";

#[derive(Debug)]
pub struct ExternalBackend {
    pub command: String,
    pub args: Vec<String>,
    /// Directory for exchange files; the system temp dir when `None`.
    pub workdir: Option<PathBuf>,
    counter: AtomicUsize,
}

impl ExternalBackend {
    pub fn new(command: impl Into<String>, args: Vec<String>) -> Self {
        ExternalBackend {
            command: command.into(),
            args,
            workdir: None,
            counter: AtomicUsize::new(0),
        }
    }

    /// Backend from the whitespace-separated command line in
    /// [`EXTERNAL_SOLVER_ENV`], if set and nonempty.
    pub fn from_env() -> Option<Self> {
        let line = std::env::var(EXTERNAL_SOLVER_ENV).ok()?;
        let mut parts = line.split_whitespace().map(str::to_string);
        let command = parts.next()?;
        Some(ExternalBackend::new(command, parts.collect()))
    }

    fn fail(&self, message: impl Into<String>) -> SolverError {
        SolverError::Backend {
            backend: self.command.clone(),
            context: String::new(),
            message: message.into(),
        }
    }

    fn parse_solution(
        &self,
        program: &ConicProgram,
        text: &str,
    ) -> Result<Relaxation, SolverError> {
        let mut status = None;
        let mut bound = None;
        let mut values = vec![f64::NAN; program.num_vars()];
        let mut seen = vec![false; program.num_vars()];
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| self.fail(format!("solution line {}: {what}", i + 1));
            if let Some(rest) = line.strip_prefix("status ") {
                status = Some(match rest.trim() {
                    "optimal" => SolveStatus::Optimal,
                    "feasible" => SolveStatus::Feasible,
                    "infeasible" => SolveStatus::Infeasible,
                    "unbounded" => SolveStatus::Unbounded,
                    other => return Err(bad(&format!("unknown status `{other}`"))),
                });
            } else if line.starts_with("objective ") {
                // recomputed from the values
            } else if let Some(rest) = line.strip_prefix("bound ") {
                bound = Some(rest.trim().parse::<f64>().map_err(|_| bad("bad bound"))?);
            } else {
                let (name, value) = line
                    .split_once(',')
                    .ok_or_else(|| bad("expected `name,value`"))?;
                let v = program
                    .var_by_name(name.trim())
                    .ok_or_else(|| bad(&format!("unknown variable `{name}`")))?;
                if seen[v.0] {
                    return Err(bad(&format!("variable `{name}` repeated")));
                }
                seen[v.0] = true;
                values[v.0] = value.trim().parse().map_err(|_| bad("bad value"))?;
            }
        }
        let status = status.ok_or_else(|| self.fail("solution has no status line"))?;
        match status {
            SolveStatus::Infeasible | SolveStatus::Unbounded => {
                let obj = if status == SolveStatus::Infeasible {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                };
                return Ok(Relaxation {
                    status,
                    values: vec![],
                    objective: obj,
                    bound: obj,
                });
            }
            _ => {}
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(self.fail(format!(
                "solution misses variable `{}`",
                program.vars()[i].name
            )));
        }
        let objective = program.objective_value(&values);
        Ok(Relaxation {
            status,
            values,
            objective,
            bound: bound.unwrap_or(objective).min(objective),
        })
    }
}

impl Backend for ExternalBackend {
    fn name(&self) -> &str {
        &self.command
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
        let mut node = program.clone();
        for (i, (&lo, &hi)) in lower.iter().zip(upper).enumerate() {
            if lo > hi {
                return Ok(Relaxation {
                    status: SolveStatus::Infeasible,
                    values: vec![],
                    objective: f64::INFINITY,
                    bound: f64::INFINITY,
                });
            }
            node.set_bounds(crate::conic::VarId(i), lo, hi)
                .map_err(|e| self.fail(e.to_string()))?;
        }
        let dir = self.workdir.clone().unwrap_or_else(std::env::temp_dir);
        let tag = format!(
            "fcsched-{}-{}",
            std::process::id(),
            self.counter.fetch_add(1, Ordering::Relaxed)
        );
        let model = dir.join(format!("{tag}.model.txt"));
        let solution = dir.join(format!("{tag}.solution.txt"));
        std::fs::write(&model, export_text(&node)).map_err(|e| self.fail(e.to_string()))?;
        let out = Command::new(&self.command)
            .args(&self.args)
            .arg(&model)
            .arg(&solution)
            .output();
        let result = match out {
            Err(e) => Err(self.fail(format!("cannot run: {e}"))),
            Ok(o) if !o.status.success() => Err(self.fail(format!(
                "exited with {}: {}",
                o.status,
                String::from_utf8_lossy(&o.stderr).trim()
            ))),
            Ok(_) => std::fs::read_to_string(&solution)
                .map_err(|e| self.fail(format!("cannot read solution: {e}")))
                .and_then(|text| self.parse_solution(program, &text)),
        };
        let _ = std::fs::remove_file(&model);
        let _ = std::fs::remove_file(&solution);
        result
    }
}
