//! Python bindings: frequency metrics, case loading, model building,
//! solving and certification.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fcsched::conic::export_text;
use fcsched::drcc;
use fcsched::freqdyn::{self, CertificationReport, CertifyOptions, DisturbanceRule, FrequencyScene};
use fcsched::netdata::{self, NetworkCase, ScenarioSet};
use fcsched::sched::{self, BuildOptions, CaseMode, ScheduleModel, ScheduleSolution};
use fcsched::solver::{ExternalBackend, SolveOptions};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

pub fn parse_rule(s: &str) -> Result<DisturbanceRule, String> {
    match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "mean" => Ok(DisturbanceRule::Mean),
        "robust" => Ok(DisturbanceRule::Robust),
        "no-shedding" => Ok(DisturbanceRule::NoShedding),
        other => Err(format!("unknown rule `{other}`, expected mean, robust or no-shedding")),
    }
}

/// Aggregated swing-equation quantities of one islanding event.
#[pyclass(name = "Scene")]
#[derive(Clone)]
pub struct PyScene {
    inner: FrequencyScene,
}

#[pymethods]
impl PyScene {
    #[new]
    #[pyo3(signature = (h_sg, d0, pfr_mw, disturbance_mw, t_d=10.0, h_storage=0.0, h_wind=vec![], gamma=vec![], constant_power_mw=0.0, constant_power_window_s=f64::INFINITY))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        h_sg: f64,
        d0: f64,
        pfr_mw: f64,
        disturbance_mw: f64,
        t_d: f64,
        h_storage: f64,
        h_wind: Vec<f64>,
        gamma: Vec<f64>,
        constant_power_mw: f64,
        constant_power_window_s: f64,
    ) -> Self {
        PyScene {
            inner: FrequencyScene {
                h_sg,
                h_storage,
                h_wind,
                gamma,
                d0,
                pfr_mw,
                t_d,
                disturbance_mw,
                constant_power_mw,
                constant_power_window_s,
            },
        }
    }

    #[getter]
    fn inertia(&self) -> f64 {
        self.inner.inertia()
    }

    #[getter]
    fn damping(&self) -> f64 {
        self.inner.damping()
    }

    fn rocof(&self) -> PyResult<f64> {
        freqdyn::rocof_max(&self.inner).map_err(value_err)
    }

    /// `(t_n, valid)`; `valid` is false when the nadir falls after the ramp.
    fn nadir_time(&self) -> PyResult<(f64, bool)> {
        freqdyn::nadir_time(&self.inner)
            .map(|t| (t.t_n, t.valid))
            .map_err(value_err)
    }

    fn nadir(&self) -> PyResult<f64> {
        freqdyn::nadir(&self.inner).map_err(value_err)
    }

    fn steady_state(&self) -> PyResult<f64> {
        freqdyn::steady_state(&self.inner).map_err(value_err)
    }

    #[pyo3(signature = (dt=0.01, horizon=60.0))]
    fn simulate(&self, dt: f64, horizon: f64) -> PyResult<PyTrace> {
        let sim = freqdyn::simulate_swing(&self.inner, dt, horizon).map_err(value_err)?;
        Ok(PyTrace {
            nadir_hz: sim.nadir_value(),
            inner: sim.trace,
        })
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "Scene(h_sg={}, d0={}, pfr_mw={}, disturbance_mw={}, t_d={})",
            s.h_sg, s.d0, s.pfr_mw, s.disturbance_mw, s.t_d
        )
    }
}

/// Simulated frequency response.
#[pyclass(name = "Trace")]
pub struct PyTrace {
    inner: freqdyn::FrequencyTrace,
    #[pyo3(get)]
    nadir_hz: f64,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn time_s(&self) -> Vec<f64> {
        self.inner.time_s.clone()
    }

    #[getter]
    fn df_hz(&self) -> Vec<f64> {
        self.inner.df_hz.clone()
    }

    #[getter]
    fn dfdt_hzps(&self) -> Vec<f64> {
        self.inner.dfdt_hzps.clone()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Cantelli multiplier `sqrt(eta / (1 - eta))`.
#[pyfunction]
fn xi(eta: f64) -> PyResult<f64> {
    drcc::xi(eta).map_err(value_err)
}

/// Nadir linear pieces as `(a, b, lo, hi)` tuples.
#[pyfunction]
#[pyo3(signature = (segments=8, range_k=12.0))]
fn pwl_coefficients(segments: usize, range_k: f64) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let segs = drcc::pwl_coefficients(segments, range_k).map_err(value_err)?;
    Ok(segs.iter().map(|s| (s.a, s.b, s.lo, s.hi)).collect())
}

#[pyclass(name = "Case")]
#[derive(Clone)]
pub struct PyCase {
    inner: NetworkCase,
}

#[pymethods]
impl PyCase {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = netdata::load_case(path).map_err(value_err)?;
        Ok(PyCase { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = NetworkCase::from_json(text).map_err(value_err)?;
        Ok(PyCase { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    /// Validation findings, empty for a usable case.
    fn diagnostics(&self) -> Vec<String> {
        netdata::validate_case(&self.inner)
            .iter()
            .map(ToString::to_string)
            .collect()
    }
}

#[pyclass(name = "Scenarios")]
#[derive(Clone)]
pub struct PyScenarios {
    inner: ScenarioSet,
}

#[pymethods]
impl PyScenarios {
    #[staticmethod]
    fn load(path: &str, case: &PyCase) -> PyResult<Self> {
        let inner = netdata::load_scenarios(path, &case.inner).map_err(value_err)?;
        Ok(PyScenarios { inner })
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn num_scenarios(&self) -> usize {
        self.inner.scenarios.len()
    }

    /// First `periods` periods only.
    fn truncated(&self, periods: usize) -> Self {
        PyScenarios {
            inner: self.inner.truncated(periods),
        }
    }
}

/// A built schedule program, ready to solve.
#[pyclass(name = "Model")]
pub struct PyModel {
    model: ScheduleModel,
    case: NetworkCase,
    scenarios: ScenarioSet,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn num_vars(&self) -> usize {
        self.model.program.num_vars()
    }

    #[getter]
    fn num_binaries(&self) -> usize {
        self.model.program.num_binaries()
    }

    fn manifest(&self) -> String {
        self.model.manifest.to_markdown()
    }

    fn conic_text(&self) -> String {
        export_text(&self.model.program)
    }

    /// Branch-and-bound solve; honours `FCSCHED_EXTERNAL_SOLVER`.
    #[pyo3(signature = (gap=1e-4, time_limit=3600.0, node_limit=100_000, threads=1, deterministic=true))]
    fn solve(
        &self,
        py: Python<'_>,
        gap: f64,
        time_limit: f64,
        node_limit: usize,
        threads: usize,
        deterministic: bool,
    ) -> PyResult<PySolution> {
        let options = SolveOptions {
            gap_rel: gap,
            time_limit_s: time_limit,
            node_limit,
            threads,
            deterministic,
            ..SolveOptions::default()
        };
        let external = ExternalBackend::from_env();
        let backend = external
            .as_ref()
            .map(|b| b as &dyn fcsched::solver::Backend);
        let result = py
            .allow_threads(|| sched::solve_schedule(&self.model, &options, backend))
            .map_err(runtime_err)?;
        if !result.point.has_point() {
            return Err(runtime_err(format!("no schedule: {}", result.point.status)));
        }
        let inner = sched::extract_solution(&self.model, &self.case, &self.scenarios, &result.point)
            .map_err(runtime_err)?;
        Ok(PySolution { inner })
    }
}

/// Build the schedule program for `mode` (`base`, `case-i`, `case-ii`).
#[pyfunction]
#[pyo3(signature = (case, scenarios, mode="case-ii", eta=0.95, alpha=0.1))]
fn build(
    case: &PyCase,
    scenarios: &PyScenarios,
    mode: &str,
    eta: f64,
    alpha: f64,
) -> PyResult<PyModel> {
    let mode: CaseMode = mode.parse().map_err(value_err)?;
    let mut options = BuildOptions::for_mode(mode);
    options.drcc.eta = eta;
    options.drcc.alpha = alpha;
    let model = sched::build_model(&case.inner, &scenarios.inner, &options).map_err(value_err)?;
    Ok(PyModel {
        model,
        case: case.inner.clone(),
        scenarios: scenarios.inner.clone(),
    })
}

#[pyclass(name = "Solution")]
#[derive(Clone)]
pub struct PySolution {
    inner: ScheduleSolution,
}

#[pymethods]
impl PySolution {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = ScheduleSolution::from_json(text).map_err(value_err)?;
        Ok(PySolution { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective
    }

    #[getter]
    fn bound(&self) -> f64 {
        self.inner.bound
    }

    #[getter]
    fn gap(&self) -> f64 {
        self.inner.gap()
    }

    #[getter]
    fn status(&self) -> String {
        self.inner.status.to_string()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn costs(&self) -> BTreeMap<&'static str, f64> {
        let c = &self.inner.costs;
        BTreeMap::from([
            ("startup", c.startup),
            ("fixed_running", c.fixed_running),
            ("flexible_running", c.flexible_running),
            ("shed_active", c.shed_active),
            ("shed_reactive", c.shed_reactive),
            ("import", c.import),
            ("total", c.total),
        ])
    }

    /// Imported power per `(t, s)`.
    fn imports(&self) -> Vec<(usize, usize, f64)> {
        self.inner
            .periods
            .iter()
            .map(|p| (p.t, p.s, p.event.import_mw))
            .collect()
    }
}

#[pyclass(name = "Report")]
pub struct PyReport {
    inner: CertificationReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn all_passed(&self) -> bool {
        self.inner.all_passed()
    }

    #[getter]
    fn num_periods(&self) -> usize {
        self.inner.periods.len()
    }

    #[getter]
    fn num_failed(&self) -> usize {
        self.inner.failures().count()
    }

    /// Smallest nadir margin over the non-vacuous periods (Hz).
    #[getter]
    fn worst_margin(&self) -> Option<f64> {
        self.inner.worst().map(|p| p.nadir_margin)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn nadir_csv(&self) -> String {
        self.inner.nadir_csv()
    }
}

/// Check a solved schedule against the swing dynamics by simulation.
#[pyfunction]
#[pyo3(signature = (solution, case, scenarios, rule="robust", tolerance=0.02))]
fn certify(
    py: Python<'_>,
    solution: &PySolution,
    case: &PyCase,
    scenarios: &PyScenarios,
    rule: &str,
    tolerance: f64,
) -> PyResult<PyReport> {
    let options = CertifyOptions {
        rule: parse_rule(rule).map_err(value_err)?,
        nadir_tolerance_hz: tolerance,
        ..CertifyOptions::default()
    };
    let sc = scenarios.inner.truncated(solution.inner.horizon());
    let inner = py.allow_threads(|| freqdyn::certify(&solution.inner, &case.inner, &sc, &options));
    Ok(PyReport { inner })
}

#[pymodule]
#[pyo3(name = "fcsched")]
fn fcsched_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScene>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyCase>()?;
    m.add_class::<PyScenarios>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(xi, m)?)?;
    m.add_function(wrap_pyfunction!(pwl_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(build, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_parse() {
        assert_eq!(parse_rule("robust"), Ok(DisturbanceRule::Robust));
        assert_eq!(parse_rule("No_Shedding"), Ok(DisturbanceRule::NoShedding));
        assert!(parse_rule("worst").is_err());
    }

    #[test]
    fn scene_matches_core() {
        let s = PyScene::new(86.0, 0.8135, 50.1, 37.0, 10.0, 0.0, vec![], vec![], 0.0, f64::INFINITY);
        let core = FrequencyScene::simple(86.0, 0.8135, 50.1, 10.0, 37.0);
        assert_eq!(s.inner, core);
        assert_eq!(s.nadir().unwrap(), freqdyn::nadir(&core).unwrap());
    }
}
