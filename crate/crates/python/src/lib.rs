//! Python bindings: models, controllers, robust evaluation and the planning
//! loop.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList};

use robust_fsc::adversary::{select_worst_case, AdversaryConfig};
use robust_fsc::io::{
    generate_grid, parse_fsc, parse_model, serialize_fsc, serialize_model, GridKind, GridSpec, ModelDocument,
};
use robust_fsc::pip::{run, write_outputs, RunConfig, RunResult};
use robust_fsc::robust::{evaluate_fsc_with, Materialize, Mode, ViConfig};
use robust_fsc::{Error, Interval};

fn py_err(e: Error) -> PyErr {
    if e.is_numerical() {
        return PyArithmeticError::new_err(e.to_string());
    }
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        Error::Validation(_) | Error::Parse { .. } | Error::InfeasibleRow { .. } | Error::InvalidArgument(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_json(obj: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    use serde_json::Value;
    if obj.is_none() {
        return Ok(Value::Null);
    }
    if obj.is_instance_of::<PyBool>() {
        return Ok(Value::Bool(obj.extract()?));
    }
    if let Ok(i) = obj.extract::<i64>() {
        return Ok(Value::from(i));
    }
    if let Ok(x) = obj.extract::<f64>() {
        return Ok(Value::from(x));
    }
    if let Ok(s) = obj.extract::<String>() {
        return Ok(Value::String(s));
    }
    if let Ok(d) = obj.cast::<PyDict>() {
        let mut map = serde_json::Map::new();
        for (k, v) in d.iter() {
            map.insert(k.extract::<String>()?, to_json(&v)?);
        }
        return Ok(Value::Object(map));
    }
    if let Ok(l) = obj.cast::<PyList>() {
        return l
            .iter()
            .map(|v| to_json(&v))
            .collect::<PyResult<Vec<_>>>()
            .map(Value::Array);
    }
    Err(PyValueError::new_err(format!("unsupported config value {obj}")))
}

fn from_json<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn read(path: PathBuf) -> PyResult<String> {
    std::fs::read_to_string(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))
}

/// Interval POMDP with deterministic observations.
#[pyclass(name = "RobustPomdp", module = "robust_fsc", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    doc: ModelDocument,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        parse_model(text).map(|doc| PyModel { doc }).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Self::parse(&read(path)?)
    }

    /// Generates a grid benchmark: `kind` is "intercept", "avoid" or "evade".
    #[staticmethod]
    #[pyo3(signature = (kind, width=5, height=5, view_radius=1, slip=(0.1, 0.4), seed=0))]
    fn grid(
        kind: &str,
        width: usize,
        height: usize,
        view_radius: usize,
        slip: (f64, f64),
        seed: u64,
    ) -> PyResult<Self> {
        let kind: GridKind = serde_json::from_value(serde_json::Value::String(kind.into()))
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let spec = GridSpec {
            view_radius,
            slip: Interval::new(slip.0, slip.1),
            ..GridSpec::new(kind).with_size(width, height)
        };
        let model = generate_grid(&spec, seed).map_err(py_err)?;
        Ok(PyModel {
            doc: ModelDocument::new(model),
        })
    }

    fn to_text(&self) -> String {
        serialize_model(&self.doc)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        std::fs::write(path, self.to_text()).map_err(|e| PyOSError::new_err(e.to_string()))
    }

    #[getter]
    fn name(&self) -> Option<String> {
        self.doc.name.clone()
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.doc.model.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.doc.model.num_actions()
    }

    #[getter]
    fn num_observations(&self) -> usize {
        self.doc.model.num_observations()
    }

    /// Violations as messages; empty when the model is well formed.
    fn validate(&self) -> Vec<String> {
        match self.doc.model.validate().into_result() {
            Ok(()) => Vec::new(),
            Err(Error::Validation(v)) => v.iter().map(|x| x.to_string()).collect(),
            Err(e) => vec![e.to_string()],
        }
    }

    fn fingerprint(&self) -> String {
        self.doc.model.fingerprint()
    }

    fn __repr__(&self) -> String {
        format!(
            "RobustPomdp(states={}, actions={}, observations={})",
            self.num_states(),
            self.num_actions(),
            self.num_observations()
        )
    }
}

/// Finite-state controller.
#[pyclass(name = "Fsc", module = "robust_fsc", skip_from_py_object)]
#[derive(Clone)]
struct PyFsc {
    fsc: robust_fsc::Fsc,
}

#[pymethods]
impl PyFsc {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        parse_fsc(text).map(|fsc| PyFsc { fsc }).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Self::parse(&read(path)?)
    }

    /// One node; `action_map[z]` is the action distribution under observation `z`.
    #[staticmethod]
    fn memoryless(action_map: Vec<Vec<f64>>) -> PyResult<Self> {
        robust_fsc::Fsc::memoryless(action_map)
            .map(|fsc| PyFsc { fsc })
            .map_err(py_err)
    }

    fn to_text(&self) -> String {
        serialize_fsc(&self.fsc)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        std::fs::write(path, self.to_text()).map_err(|e| PyOSError::new_err(e.to_string()))
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.fsc.num_nodes()
    }

    #[getter]
    fn initial_node(&self) -> usize {
        self.fsc.initial_node()
    }

    fn action_distribution(&self, node: usize, observation: usize) -> PyResult<Vec<f64>> {
        self.check(node, observation)?;
        Ok(self.fsc.action_distribution(node, observation).to_vec())
    }

    fn next_node(&self, node: usize, observation: usize) -> PyResult<usize> {
        self.check(node, observation)?;
        Ok(self.fsc.next_node(node, observation))
    }

    fn __repr__(&self) -> String {
        format!("Fsc(nodes={})", self.fsc.num_nodes())
    }
}

impl PyFsc {
    fn check(&self, node: usize, observation: usize) -> PyResult<()> {
        if node >= self.fsc.num_nodes() || observation >= self.fsc.num_observations() {
            return Err(PyValueError::new_err(format!(
                "no entry for node {node}, observation {observation}"
            )));
        }
        Ok(())
    }
}

/// Outcome of a planning run.
#[pyclass(name = "SolveResult", module = "robust_fsc")]
struct PySolveResult {
    config: RunConfig,
    result: RunResult,
}

#[pymethods]
impl PySolveResult {
    /// Best pessimistic value; `None` when no iteration ran.
    #[getter]
    fn best_value(&self) -> Option<f64> {
        self.result.best_fsc.as_ref().map(|_| self.result.best_value)
    }

    #[getter]
    fn best_fsc(&self) -> Option<PyFsc> {
        self.result.best_fsc.clone().map(|fsc| PyFsc { fsc })
    }

    #[getter]
    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        from_json(py, &self.result.records)
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        from_json(py, &self.config)
    }

    fn to_csv(&self) -> String {
        self.result.to_csv()
    }

    /// Writes the CSV, controller, checkpoint and summary; returns the summary.
    fn write<'py>(&self, py: Python<'py>, dir: PathBuf) -> PyResult<Bound<'py, PyAny>> {
        let summary = write_outputs(&dir, &self.config, &self.result).map_err(py_err)?;
        from_json(py, &summary)
    }
}

/// Default planning configuration as a dict.
#[pyfunction]
fn default_config(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    from_json(py, &RunConfig::default())
}

/// Runs the planning loop. Keyword arguments override fields of
/// `default_config()`.
#[pyfunction]
#[pyo3(signature = (model, **overrides))]
fn solve(py: Python<'_>, model: &PyModel, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<PySolveResult> {
    let mut value = serde_json::to_value(RunConfig::default()).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    if let Some(d) = overrides {
        for (k, v) in d.iter() {
            let key = k.extract::<String>()?;
            if value.get(&key).is_none() {
                return Err(PyValueError::new_err(format!("unknown config field {key:?}")));
            }
            value[&key] = to_json(&v)?;
        }
    }
    let config: RunConfig = serde_json::from_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let model = model.doc.model.clone();
    let result = py.detach(|| run(&config, &model)).map_err(py_err)?;
    Ok(PySolveResult { config, result })
}

/// Robust value of `fsc` from the initial belief.
#[pyfunction]
#[pyo3(signature = (model, fsc, optimistic=false, tol=1e-10))]
fn evaluate(model: &PyModel, fsc: &PyFsc, optimistic: bool, tol: f64) -> PyResult<f64> {
    let mode = if optimistic {
        Mode::Optimistic
    } else {
        Mode::Pessimistic
    };
    let config = ViConfig {
        tol,
        ..ViConfig::default()
    };
    evaluate_fsc_with(&model.doc.model, &fsc.fsc, mode, &config, Materialize::Reachable)
        .map(|v| v.value)
        .map_err(py_err)
}

/// Worst-case member for `fsc` as a model with point intervals.
#[pyfunction]
#[pyo3(signature = (model, fsc, tol=1e-10))]
fn worst_case(model: &PyModel, fsc: &PyFsc, tol: f64) -> PyResult<PyModel> {
    let config = ViConfig {
        tol,
        ..ViConfig::default()
    };
    let values =
        evaluate_fsc_with(&model.doc.model, &fsc.fsc, Mode::Pessimistic, &config, Materialize::All).map_err(py_err)?;
    let adv = select_worst_case(&model.doc.model, &fsc.fsc, &values, &AdversaryConfig::default()).map_err(py_err)?;
    Ok(PyModel {
        doc: ModelDocument::new(adv.worst_case.to_robust()),
    })
}

#[pymodule]
#[pyo3(name = "robust_fsc")]
fn robust_fsc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyFsc>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(worst_case, m)?)?;
    Ok(())
}
