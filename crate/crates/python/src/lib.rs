//! Python bindings: spaces, constraint evaluation, guarded sessions and
//! corpus replay. Structured results cross the boundary as plain dicts.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use ctxguard_core::dsl::{evaluate_with, parse_constraint};
use ctxguard_core::gui::{parse_tree, GuiAction};
use ctxguard_core::guard::{Action, Guard as CoreGuard, GuardConfig};
use ctxguard_core::manager::{Activation, Session as CoreSession};
use ctxguard_core::model::{lint_space, parse_space, serialize_space, ContextSpace};
use ctxguard_core::Value;
use ctxguard_harness::{compute_metrics, load_corpus, replay_inproc, RunOptions};
use ctxguard_service::decision_fields;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(ctxguard, GuardError, PyException, "Raised when the guard rejects a call.");

fn guard_err(e: impl std::fmt::Display) -> PyErr {
    GuardError::new_err(e.to_string())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Python object to JSON through the stdlib encoder.
fn to_json(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

fn from_json<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn params_map(py: Python<'_>, params: Option<&Bound<'_, PyAny>>) -> PyResult<BTreeMap<String, serde_json::Value>> {
    match params {
        None => Ok(BTreeMap::new()),
        Some(p) => serde_json::from_value(to_json(py, p)?).map_err(value_err),
    }
}

/// A parsed context space.
#[pyclass(frozen, module = "ctxguard")]
pub struct Space {
    inner: ContextSpace,
}

#[pymethods]
impl Space {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        parse_space(text.as_bytes()).map(|inner| Space { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let bytes = std::fs::read(&path).map_err(|e| value_err(format!("{}: {e}", path.display())))?;
        parse_space(&bytes).map(|inner| Space { inner }).map_err(value_err)
    }

    /// Canonical JSON.
    fn to_json(&self) -> String {
        String::from_utf8(serialize_space(&self.inner)).expect("canonical JSON is UTF-8")
    }

    #[getter]
    fn app_id(&self) -> &str {
        &self.inner.app_id
    }

    fn function_ids(&self) -> Vec<String> {
        self.inner.iter_functions().map(|(_, f)| f.function_id.clone()).collect()
    }

    /// Lint findings as dicts with `severity`, `kind`, `path` and `message`.
    fn lint<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        from_json(py, &lint_space(&self.inner))
    }

    fn __len__(&self) -> usize {
        self.inner.function_count()
    }

    fn __repr__(&self) -> String {
        format!("Space(app_id={:?}, functions={})", self.inner.app_id, self.inner.function_count())
    }
}

/// Evaluates one constraint against a dict of context values. Missing
/// contexts are Unset. Returns `"true"`, `"false"` or `"unknown"`.
#[pyfunction]
fn evaluate(py: Python<'_>, constraint: &str, values: &Bound<'_, PyAny>) -> PyResult<&'static str> {
    let ast = parse_constraint(constraint).map_err(value_err)?;
    let json = to_json(py, values)?;
    let obj = json.as_object().ok_or_else(|| value_err("values must be a dict"))?;
    let mut cv = BTreeMap::new();
    for (k, v) in obj {
        let value = Value::from_json(v).ok_or_else(|| value_err(format!("unsupported value for `{k}`")))?;
        cv.insert(k.as_str(), value);
    }
    Ok(evaluate_with(&ast, |id| cv.get(id)).as_str())
}

/// A guard shared by any number of sessions.
#[pyclass(frozen, module = "ctxguard")]
pub struct Guard {
    inner: Arc<CoreGuard>,
}

#[pymethods]
impl Guard {
    /// `config` takes the same keys as the service configuration's guard
    /// section.
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(py: Python<'_>, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let config: GuardConfig = match config {
            Some(c) => serde_json::from_value(to_json(py, c)?).map_err(value_err)?,
            None => GuardConfig::default(),
        };
        Ok(Guard { inner: Arc::new(CoreGuard::new(config).map_err(guard_err)?) })
    }

    fn session(&self) -> Session {
        Session { guard: self.inner.clone(), state: Mutex::new(self.inner.open_session()) }
    }
}

/// One agent session.
#[pyclass(frozen, module = "ctxguard")]
pub struct Session {
    guard: Arc<CoreGuard>,
    state: Mutex<CoreSession>,
}

impl Session {
    fn with<R>(&self, f: impl FnOnce(&CoreGuard, &mut CoreSession) -> R) -> R {
        let mut state = self.state.lock().unwrap_or_else(|p| p.into_inner());
        f(&self.guard, &mut state)
    }

    fn verdict<'py>(&self, py: Python<'py>, action: Action) -> PyResult<Bound<'py, PyAny>> {
        let verdict = py.detach(|| self.with(|g, s| g.decide(s, action))).map_err(guard_err)?;
        from_json(py, &decision_fields(&verdict))
    }
}

#[pymethods]
impl Session {
    #[getter]
    fn id(&self) -> u64 {
        self.with(|_, s| s.id)
    }

    /// Registers and activates a space. Returns `"loaded"` or `"cached"`.
    fn register(&self, py: Python<'_>, space: &Space) -> PyResult<&'static str> {
        let space = space.inner.clone();
        let activation = py.detach(|| self.with(|g, s| g.register(s, space))).map_err(guard_err)?;
        Ok(match activation {
            Activation::Loaded => "loaded",
            Activation::Cached => "cached",
        })
    }

    fn switch_app(&self, app_id: &str) -> bool {
        self.with(|g, s| g.switch_app(s, app_id))
    }

    fn instruction(&self, py: Python<'_>, text: &str) -> PyResult<()> {
        py.detach(|| self.with(|g, s| g.instruction(s, text))).map_err(guard_err)
    }

    /// Validates a direct function call.
    #[pyo3(signature = (function, params=None))]
    fn decide<'py>(
        &self,
        py: Python<'py>,
        function: &str,
        params: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let params = params_map(py, params)?;
        self.verdict(py, Action::Direct { function_id: function.to_owned(), params })
    }

    /// Validates a coordinate action such as `{"kind": "click", "x": 10,
    /// "y": 20}` against a UI hierarchy dump.
    fn decide_gui<'py>(
        &self,
        py: Python<'py>,
        action: &Bound<'py, PyAny>,
        tree: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let action: GuiAction = serde_json::from_value(to_json(py, action)?).map_err(value_err)?;
        let tree = parse_tree(tree.as_bytes()).map_err(value_err)?;
        self.verdict(py, Action::Gui { action, tree })
    }

    /// Resolves a pending confirmation. Returns the new event id and verdict.
    fn confirm(&self, event_id: u64, allow: bool) -> PyResult<(u64, &'static str)> {
        let (id, decision) = self.with(|g, s| g.confirm(s, event_id, allow)).map_err(guard_err)?;
        Ok((id, decision.verdict()))
    }

    #[pyo3(signature = (function, params=None, outcome="ok"))]
    fn post_action(
        &self,
        py: Python<'_>,
        function: &str,
        params: Option<&Bound<'_, PyAny>>,
        outcome: &str,
    ) -> PyResult<()> {
        let params = params_map(py, params)?;
        self.with(|g, s| g.post_action(s, function, params, outcome)).map_err(guard_err)
    }
}

/// Replays every trace in `corpus` against `space` in-process and returns
/// the security report.
#[pyfunction]
#[pyo3(signature = (space, corpus, system=None))]
fn replay<'py>(
    py: Python<'py>,
    space: &Space,
    corpus: PathBuf,
    system: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let traces = load_corpus(&corpus).map_err(value_err)?;
    let config = GuardConfig { system_fixture: system, ..GuardConfig::default() };
    let run = py
        .detach(|| replay_inproc(&config, &space.inner, &traces, &RunOptions::default()))
        .map_err(guard_err)?;
    from_json(py, &compute_metrics(&run.records))
}

#[pymodule]
fn ctxguard(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Space>()?;
    m.add_class::<Guard>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add("GuardError", m.py().get_type::<GuardError>())?;
    Ok(())
}
