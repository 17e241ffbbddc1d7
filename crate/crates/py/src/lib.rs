//! Python bindings. Points cross the boundary as `complex`, with `None` standing for ∞; reports
//! come back as plain dicts decoded from the library's JSON form.

use std::path::PathBuf;

use merotherm::cli::{self, Command, RunConfig};
use merotherm::dimension::{dimension_report as report, DimensionConfig};
use merotherm::hyperbolicity::{self, PROBE_STEPS};
use merotherm::symbolic::SymbolicCoder;
use merotherm::transfer::{self, PressureOptions};
use merotherm::{Error, SpherePoint};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyAny;

create_exception!(merotherm_py, MerothermError, PyException);
create_exception!(merotherm_py, HypothesisError, MerothermError, "The numerics could not confirm a required premise.");

fn err(e: Error) -> PyErr {
    if e.is_hypothesis() {
        HypothesisError::new_err(e.to_string())
    } else {
        MerothermError::new_err(e.to_string())
    }
}

fn point(z: Option<Complex64>) -> SpherePoint {
    z.map_or(SpherePoint::Infinity, SpherePoint::new)
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| MerothermError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "MapSpec", frozen, module = "merotherm_py")]
pub struct PyMap {
    inner: merotherm::MapSpec,
}

#[pymethods]
impl PyMap {
    /// Parses the JSON form, e.g. `{"family": "tangent", "lambda": 0.5}`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        merotherm::MapSpec::from_json(text).map(|inner| PyMap { inner }).map_err(err)
    }

    #[staticmethod]
    fn tangent(lam: f64) -> PyResult<Self> {
        merotherm::MapSpec::tangent(lam).map(|inner| PyMap { inner }).map_err(err)
    }

    #[staticmethod]
    fn exponential(lam: f64) -> PyResult<Self> {
        merotherm::MapSpec::exponential(lam).map(|inner| PyMap { inner }).map_err(err)
    }

    #[staticmethod]
    fn quadratic(c: Complex64) -> PyResult<Self> {
        merotherm::MapSpec::quadratic(c).map(|inner| PyMap { inner }).map_err(err)
    }

    #[staticmethod]
    fn monomial(d: usize) -> PyResult<Self> {
        merotherm::MapSpec::monomial(d).map(|inner| PyMap { inner }).map_err(err)
    }

    /// Ascending coefficient lists.
    #[staticmethod]
    fn rational(numerator: Vec<Complex64>, denominator: Vec<Complex64>) -> PyResult<Self> {
        merotherm::MapSpec::rational(numerator, denominator).map(|inner| PyMap { inner }).map_err(err)
    }

    #[staticmethod]
    fn pole_series(p: u32, lam: f64, n_max: u64) -> PyResult<Self> {
        merotherm::MapSpec::pole_series(p, lam, n_max).map(|inner| PyMap { inner }).map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[pyo3(signature = (z))]
    fn eval(&self, z: Option<Complex64>) -> PyResult<Option<Complex64>> {
        self.inner.eval(point(z)).map(|w| w.finite()).map_err(err)
    }

    #[pyo3(signature = (z))]
    fn spherical_derivative(&self, z: Option<Complex64>) -> PyResult<f64> {
        merotherm::spherical_derivative(&self.inner, point(z)).map(|v| v.value()).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("MapSpec({})", self.inner.to_json())
    }
}

#[pyfunction]
#[pyo3(signature = (a, b))]
fn chordal_distance(a: Option<Complex64>, b: Option<Complex64>) -> f64 {
    merotherm::chordal_distance(point(a), point(b))
}

#[pyfunction]
#[pyo3(signature = (map, count=200, depth=12, seed=0))]
fn julia_sample(py: Python<'_>, map: &PyMap, count: usize, depth: usize, seed: u64) -> PyResult<Vec<Option<Complex64>>> {
    let s = py.detach(|| hyperbolicity::julia_sample(&map.inner, count, depth, seed)).map_err(err)?;
    Ok(s.points.iter().map(|p| p.finite()).collect())
}

#[pyfunction]
#[pyo3(signature = (map, sample_size=200, depth=12, seed=0))]
fn classify<'py>(py: Python<'py>, map: &PyMap, sample_size: usize, depth: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let r = py
        .detach(|| {
            let s = hyperbolicity::julia_sample(&map.inner, sample_size, depth, seed)?;
            Ok(hyperbolicity::classify(&map.inner, PROBE_STEPS, &s))
        })
        .map_err(err)?;
    to_py(py, &r)
}

fn options(map: &merotherm::MapSpec, depth: Option<usize>, budget: Option<usize>) -> PressureOptions {
    let mut opts = PressureOptions::for_map(map);
    if let Some(d) = depth {
        opts.tree.depth = d;
    }
    if let Some(b) = budget {
        opts.tree.branch_budget = b;
    }
    opts
}

fn base(map: &merotherm::MapSpec, a: Option<Complex64>) -> Result<SpherePoint, Error> {
    Ok(SpherePoint::new(match a {
        Some(z) => z,
        None => hyperbolicity::repelling_seed(map)?,
    }))
}

/// `(t, P, residual)` rows over `ts`, from one preimage tree rooted at `base_point` (default:
/// the repelling seed).
#[pyfunction]
#[pyo3(signature = (map, ts, base_point=None, depth=None, budget=None))]
fn pressure_curve(py: Python<'_>, map: &PyMap, ts: Vec<f64>, base_point: Option<Complex64>, depth: Option<usize>, budget: Option<usize>) -> PyResult<Vec<(f64, f64, f64)>> {
    let curve = py
        .detach(|| transfer::pressure_curve(&map.inner, base(&map.inner, base_point)?, &ts, &options(&map.inner, depth, budget)))
        .map_err(err)?;
    Ok((0..ts.len()).map(|i| (curve.t_values[i], curve.p_values[i], curve.fit_residuals[i])).collect())
}

/// `(s, residual)` for the zero of the pressure inside `bracket`.
#[pyfunction]
#[pyo3(signature = (map, bracket=None, tol=1e-6, depth=None, budget=None))]
fn poincare_exponent(py: Python<'_>, map: &PyMap, bracket: Option<(f64, f64)>, tol: f64, depth: Option<usize>, budget: Option<usize>) -> PyResult<(f64, f64)> {
    let r = py
        .detach(|| {
            let bracket = bracket.unwrap_or_else(|| merotherm::dimension::default_bracket(&map.inner));
            transfer::poincare_exponent(&map.inner, base(&map.inner, None)?, bracket, tol, &options(&map.inner, depth, budget))
        })
        .map_err(err)?;
    Ok((r.s, r.residual))
}

/// Full dimension report; `config` is the JSON form of the `dim` section of a run config.
#[pyfunction]
#[pyo3(signature = (map, config=None))]
fn dimension_report<'py>(py: Python<'py>, map: &PyMap, config: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let config: DimensionConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(|e| MerothermError::new_err(format!("config: {e}")))?,
        None => DimensionConfig::default(),
    };
    let r = py.detach(|| report(&map.inner, &config)).map_err(err)?;
    to_py(py, &r)
}

/// Itinerary as `{"symbols": [...], "terminator": ..., "truncated_at": ...}`, symbols in the
/// natural-number encoding.
#[pyfunction]
#[pyo3(signature = (map, z, depth=12))]
fn itinerary<'py>(py: Python<'py>, map: &PyMap, z: Option<Complex64>, depth: usize) -> PyResult<Bound<'py, PyAny>> {
    let it = py.detach(|| SymbolicCoder::new(&map.inner)?.itinerary(point(z), depth)).map_err(err)?;
    to_py(py, &it)
}

/// Same as the command-line tool: writes artifacts and a manifest into `out`, returns the exit
/// status.
#[pyfunction]
fn run(py: Python<'_>, command: &str, config: &str, out: PathBuf) -> PyResult<i32> {
    let command = match command {
        "classify" => Command::Classify,
        "pressure" => Command::Pressure,
        "dim" => Command::Dim,
        "render" => Command::Render,
        "code" => Command::Code,
        "selftest" => Command::Selftest,
        other => return Err(MerothermError::new_err(format!("unknown command {other:?}"))),
    };
    let config = RunConfig::from_json(config, "<config>").map_err(err)?;
    let outcome = py.detach(|| cli::run(command, config, &out)).map_err(err)?;
    Ok(outcome.exit_status)
}

#[pymodule]
pub fn merotherm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MerothermError", m.py().get_type::<MerothermError>())?;
    m.add("HypothesisError", m.py().get_type::<HypothesisError>())?;
    m.add("__version__", cli::VERSION)?;
    m.add_class::<PyMap>()?;
    m.add_function(wrap_pyfunction!(chordal_distance, m)?)?;
    m.add_function(wrap_pyfunction!(julia_sample, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(pressure_curve, m)?)?;
    m.add_function(wrap_pyfunction!(poincare_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(dimension_report, m)?)?;
    m.add_function(wrap_pyfunction!(itinerary, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
