//! Python bindings: tableau construction, spectral checks, the verification
//! sweep and integration of the catalog problems.

use hbvm::integrator::{energy_drift, integrate as run_integration, SolverConfig, Stepper};
use hbvm::io::{to_json_string, trajectory_csv};
use hbvm::legendre::{self, NodeFamily, PolyIndex};
use hbvm::problems;
use hbvm::spectral::{self, StabilityGrid};
use hbvm::tableau::{self, ButcherTableau, HbvmSpec, TableauRecord};
use hbvm::verify::{self, SweepConfig};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(pyhbvm, InvalidInput, PyValueError);
create_exception!(pyhbvm, ConvergenceError, PyRuntimeError);

fn err(e: hbvm::HbvmError) -> PyErr {
    use hbvm::HbvmError as E;
    match e {
        E::SolverNotConverged { .. }
        | E::FixedPointDiverged { .. }
        | E::StepFailed { .. }
        | E::NoConvergence { .. }
        | E::Singular(_)
        | E::Pole { .. }
        | E::RankDeficient { .. } => ConvergenceError::new_err(e.to_string()),
        _ => InvalidInput::new_err(e.to_string()),
    }
}

/// Serializes through the crate's JSON writer and parses with Python's
/// `json`, so values match the CLI artifacts exactly.
fn to_py<'py, T: Serialize + ?Sized>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = to_json_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn family(name: &str) -> PyResult<NodeFamily> {
    name.parse().map_err(err)
}

fn solver_config(solver: &str, tol: f64, max_iter: usize) -> PyResult<SolverConfig> {
    let base = match solver {
        "fixed-point" | "fixed_point" => SolverConfig::default(),
        "newton" => SolverConfig::newton(),
        other => {
            return Err(InvalidInput::new_err(format!(
                "unknown solver `{other}` (expected fixed-point or newton)"
            )))
        }
    };
    let cfg = SolverConfig {
        tol,
        max_iter,
        ..base
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// HBVM(k, s) over Gauss, Lobatto or custom abscissae.
#[pyclass(name = "Spec", module = "pyhbvm", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PySpec {
    inner: HbvmSpec,
}

#[pymethods]
impl PySpec {
    #[new]
    #[pyo3(signature = (k, s, family = "gauss", nodes = None))]
    fn new(k: usize, s: usize, family: &str, nodes: Option<Vec<f64>>) -> PyResult<Self> {
        let fam = self::family(family)?;
        if nodes.is_some() && fam != NodeFamily::Custom {
            return Err(InvalidInput::new_err(
                "nodes are only accepted with family='custom'",
            ));
        }
        let inner = HbvmSpec::from_family(fam, k, s, nodes.as_deref()).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn s(&self) -> usize {
        self.inner.s()
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family().as_str()
    }

    #[getter]
    fn tau(&self) -> Vec<f64> {
        self.inner.system().tau().to_vec()
    }

    #[getter]
    fn omega(&self) -> Vec<f64> {
        self.inner.system().omega().to_vec()
    }

    fn tableau(&self) -> PyResult<PyTableau> {
        Ok(PyTableau {
            inner: tableau::hbvm_tableau(&self.inner).map_err(err)?,
            record: None,
        }
        .with_spec(&self.inner))
    }

    /// The collocation method on the same abscissae filtered to rank `s`.
    fn filtered_tableau(&self) -> PyResult<PyTableau> {
        Ok(PyTableau {
            inner: tableau::filtered_tableau(self.inner.system(), self.inner.s()).map_err(err)?,
            record: None,
        }
        .with_spec(&self.inner))
    }

    #[pyo3(signature = (tol = 1e-10))]
    fn isospectral_check<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &spectral::isospectral_check(&self.inner, tol).map_err(err)?,
        )
    }

    fn invariant_subspace_residual(&self) -> PyResult<f64> {
        spectral::invariant_subspace_residual(&self.inner).map_err(err)
    }

    fn w_transform_check<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &spectral::w_transform_check(self.inner.system(), self.inner.s()).map_err(err)?,
        )
    }

    fn __repr__(&self) -> String {
        format!(
            "Spec(k={}, s={}, family='{}')",
            self.inner.k(),
            self.inner.s(),
            self.inner.family()
        )
    }
}

/// Butcher tableau `(c, A, b)`.
#[pyclass(name = "Tableau", module = "pyhbvm", frozen)]
pub struct PyTableau {
    inner: ButcherTableau,
    record: Option<TableauRecord>,
}

impl PyTableau {
    fn with_spec(mut self, spec: &HbvmSpec) -> Self {
        self.record = Some(TableauRecord::from_spec(spec, &self.inner));
        self
    }
}

#[pymethods]
impl PyTableau {
    /// Parses the JSON tableau format written by `to_json` and the CLI.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let rec: TableauRecord = serde_json::from_str(text)
            .map_err(|e| InvalidInput::new_err(format!("invalid tableau JSON: {e}")))?;
        let inner = rec.tableau().map_err(err)?;
        Ok(Self {
            inner,
            record: Some(rec),
        })
    }

    fn to_json(&self) -> PyResult<String> {
        let rec = self
            .record
            .as_ref()
            .ok_or_else(|| InvalidInput::new_err("tableau has no spec metadata"))?;
        to_json_string(rec).map_err(err)
    }

    #[getter]
    fn c(&self) -> Vec<f64> {
        self.inner.c.clone()
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b.clone()
    }

    #[getter]
    #[allow(non_snake_case)]
    fn A(&self) -> Vec<Vec<f64>> {
        self.inner
            .a
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    fn stages(&self) -> usize {
        self.inner.stages()
    }

    #[pyo3(signature = (tol = 1e-10))]
    fn rank(&self, tol: f64) -> usize {
        self.inner.rank(tol)
    }

    fn eigenvalues(&self) -> PyResult<Vec<Complex64>> {
        spectral::eigenvalues(&self.inner.a).map_err(err)
    }

    /// `R(z) = 1 + z bᵀ (I - zA)⁻¹ 1`.
    fn stability_function(&self, z: Complex64) -> PyResult<Complex64> {
        spectral::stability_function(&self.inner, z).map_err(err)
    }

    fn stability_scan<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &spectral::a_stability_scan(&self.inner, &StabilityGrid::default()),
        )
    }

    fn max_abs_diff(&self, other: &PyTableau) -> f64 {
        self.inner.max_abs_diff(&other.inner)
    }
}

/// `P_j(t) = √(2j-1) L_{j-1}(2t-1)`, orthonormal on `[0, 1]`.
#[pyfunction]
fn eval_orthonormal(j: usize, t: f64) -> PyResult<f64> {
    Ok(legendre::eval_orthonormal(
        PolyIndex::new(j).map_err(err)?,
        t,
    ))
}

/// `∫₀^c P_j`.
#[pyfunction]
fn integral_orthonormal(j: usize, c: f64) -> PyResult<f64> {
    legendre::integral_orthonormal(PolyIndex::new(j).map_err(err)?, c).map_err(err)
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
#[pyfunction]
fn gauss_system(k: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let sys = legendre::gauss_system(k).map_err(err)?;
    Ok((sys.tau().to_vec(), sys.omega().to_vec()))
}

/// Gauss–Lobatto nodes and weights on `[0, 1]`.
#[pyfunction]
fn lobatto_system(k: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let sys = legendre::lobatto_system(k).map_err(err)?;
    Ok((sys.tau().to_vec(), sys.omega().to_vec()))
}

#[pyfunction]
fn problem_names() -> Vec<&'static str> {
    problems::catalog().iter().map(|p| p.name).collect()
}

/// Integrates a catalog problem from its default state. Returns a dict with
/// `t`, `y`, `H`, `iters`, `csv` and the relative energy drift.
#[pyfunction]
#[pyo3(signature = (problem, spec, h, steps, mode = "gamma", solver = "fixed-point", tol = 1e-13, max_iter = 100))]
#[allow(clippy::too_many_arguments)]
fn integrate<'py>(
    py: Python<'py>,
    problem: &str,
    spec: &PySpec,
    h: f64,
    steps: usize,
    mode: &str,
    solver: &str,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let prob = problems::problem(problem).map_err(err)?;
    let cfg = solver_config(solver, tol, max_iter)?;
    let stepper = match mode {
        "rk" => Stepper::rk(&spec.inner).map_err(err)?,
        "gamma" => Stepper::gamma(&spec.inner),
        other => {
            return Err(InvalidInput::new_err(format!(
                "unknown mode `{other}` (expected rk or gamma)"
            )))
        }
    };
    let traj = py
        .detach(|| run_integration(&stepper, &prob.system, &prob.default_y0, h, steps, &cfg))
        .map_err(err)?;
    let drift = energy_drift(&traj);
    let out = pyo3::types::PyDict::new(py);
    out.set_item("t", traj.times.clone())?;
    out.set_item("y", traj.states.clone())?;
    out.set_item("H", traj.energies.clone())?;
    out.set_item("iters", traj.iteration_counts.clone())?;
    out.set_item("relative_drift", drift.relative(traj.energies[0]))?;
    out.set_item("csv", trajectory_csv(&traj))?;
    Ok(out.into_any())
}

/// Convergence study on a catalog problem with step sizes `hmax / 2^i`.
#[pyfunction]
#[pyo3(signature = (problem, spec, hmax = 0.2, levels = 5, t_end = 6.4, solver = "fixed-point", tol = 1e-13))]
#[allow(clippy::too_many_arguments)]
fn order_study<'py>(
    py: Python<'py>,
    problem: &str,
    spec: &PySpec,
    hmax: f64,
    levels: usize,
    t_end: f64,
    solver: &str,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let prob = problems::problem(problem).map_err(err)?;
    let cfg = solver_config(solver, tol, 100)?;
    let stepper = Stepper::gamma(&spec.inner);
    let study = py
        .detach(|| problems::order_study(&prob, &stepper, hmax, levels, t_end, &cfg))
        .map_err(err)?;
    to_py(py, &study)
}

/// Runs the structural checks over the spec matrix; returns the report as a
/// list of dicts sorted by `(s, k, family)`.
#[pyfunction]
#[pyo3(signature = (smax = 4, kmax = 10, tol = 1e-10, seed = 42))]
fn verify_sweep<'py>(
    py: Python<'py>,
    smax: usize,
    kmax: usize,
    tol: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = SweepConfig {
        smax,
        kmax,
        tol,
        seed,
    };
    let report = py.detach(|| verify::verify_sweep(&cfg)).map_err(err)?;
    to_py(py, &report)
}

/// Checks a JSON tableau against the spec it declares.
#[pyfunction]
#[pyo3(signature = (text, tol = 1e-10))]
fn verify_tableau_json<'py>(py: Python<'py>, text: &str, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let rec: TableauRecord = serde_json::from_str(text)
        .map_err(|e| InvalidInput::new_err(format!("invalid tableau JSON: {e}")))?;
    to_py(
        py,
        &verify::verify_record(&rec, tol, "python").map_err(err)?,
    )
}

#[pymodule]
pub fn pyhbvm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpec>()?;
    m.add_class::<PyTableau>()?;
    m.add_function(wrap_pyfunction!(eval_orthonormal, m)?)?;
    m.add_function(wrap_pyfunction!(integral_orthonormal, m)?)?;
    m.add_function(wrap_pyfunction!(gauss_system, m)?)?;
    m.add_function(wrap_pyfunction!(lobatto_system, m)?)?;
    m.add_function(wrap_pyfunction!(problem_names, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(order_study, m)?)?;
    m.add_function(wrap_pyfunction!(verify_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(verify_tableau_json, m)?)?;
    m.add("InvalidInput", m.py().get_type::<InvalidInput>())?;
    m.add("ConvergenceError", m.py().get_type::<ConvergenceError>())?;
    Ok(())
}
