//! Trace replay against an in-process guard or a live service.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ctxguard_core::gui::parse_tree;
use ctxguard_core::guard::{Action, Guard};
use ctxguard_core::manager::Session;
use ctxguard_core::model::{serialize_space, ContextSpace};
use ctxguard_service::{decision_fields, Client, Endpoint};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::trace::{Expect, Label, Trace, TraceAction, TraceStep};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("guard: {0}")]
    Guard(String),
    #[error("service: {0}")]
    Service(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The fields of a decision that both transports report identically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub verdict: String,
    #[serde(default)]
    pub reason: Option<String>,
    #[serde(default)]
    pub function: Option<String>,
    #[serde(default)]
    pub intent: Option<String>,
    #[serde(default)]
    pub guidance: Vec<String>,
    #[serde(default)]
    pub unknowns: Vec<String>,
    pub event_id: u64,
}

impl Outcome {
    fn from_fields(fields: Map<String, Value>) -> Result<Self, RunError> {
        serde_json::from_value(Value::Object(fields)).map_err(|e| RunError::Service(format!("decision frame: {e}")))
    }
}

/// One guard front end: either a direct [`Guard`] or a socket client.
pub trait Backend {
    fn register(&mut self, space: &ContextSpace) -> Result<(), RunError>;
    fn instruction(&mut self, text: &str) -> Result<(), RunError>;
    fn pre_action(&mut self, action: &TraceAction) -> Result<Outcome, RunError>;
    /// Answers a confirmation request; returns the resulting verdict.
    fn confirm(&mut self, event_id: u64, allow: bool) -> Result<String, RunError>;
    fn post_action(&mut self, function: &str, params: BTreeMap<String, Value>) -> Result<(), RunError>;
}

pub struct InProcess {
    guard: Arc<Guard>,
    session: Session,
}

impl InProcess {
    pub fn new(guard: Arc<Guard>) -> Self {
        let session = guard.open_session();
        InProcess { guard, session }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }
}

fn guard_err(e: impl std::fmt::Display) -> RunError {
    RunError::Guard(e.to_string())
}

impl Backend for InProcess {
    fn register(&mut self, space: &ContextSpace) -> Result<(), RunError> {
        self.guard.register(&mut self.session, space.clone()).map_err(guard_err)?;
        Ok(())
    }

    fn instruction(&mut self, text: &str) -> Result<(), RunError> {
        self.guard.instruction(&mut self.session, text).map_err(guard_err)
    }

    fn pre_action(&mut self, action: &TraceAction) -> Result<Outcome, RunError> {
        let action = match action {
            TraceAction::Direct { function, params } => {
                Action::Direct { function_id: function.clone(), params: params.clone() }
            }
            TraceAction::Gui { action, tree } => {
                Action::Gui { action: action.clone(), tree: parse_tree(tree.as_bytes()).map_err(guard_err)? }
            }
        };
        let verdict = self.guard.decide(&mut self.session, action).map_err(guard_err)?;
        Outcome::from_fields(decision_fields(&verdict))
    }

    fn confirm(&mut self, event_id: u64, allow: bool) -> Result<String, RunError> {
        let (_, decision) = self.guard.confirm(&self.session, event_id, allow).map_err(guard_err)?;
        Ok(decision.verdict().to_owned())
    }

    fn post_action(&mut self, function: &str, params: BTreeMap<String, Value>) -> Result<(), RunError> {
        self.guard.post_action(&mut self.session, function, params, "ok").map_err(guard_err)
    }
}

/// Speaks the line protocol to a running service.
pub struct SocketClient {
    client: Client,
    next_id: u64,
}

impl SocketClient {
    pub fn connect(endpoint: &Endpoint) -> Result<Self, RunError> {
        let mut c = SocketClient { client: Client::connect(endpoint)?, next_id: 0 };
        c.call("hello", Map::new())?;
        Ok(c)
    }

    fn call(&mut self, ty: &str, mut body: Map<String, Value>) -> Result<Map<String, Value>, RunError> {
        self.next_id += 1;
        body.insert("id".into(), self.next_id.into());
        body.insert("type".into(), ty.into());
        let response = self.client.request(&Value::Object(body))?;
        let Value::Object(mut frame) = response else {
            return Err(RunError::Service("response is not an object".into()));
        };
        if frame.get("id") != Some(&Value::from(self.next_id)) {
            return Err(RunError::Service(format!("response id mismatch for request {}", self.next_id)));
        }
        if frame.get("type").and_then(Value::as_str) == Some("error") {
            let code = frame.get("code").and_then(Value::as_str).unwrap_or("?");
            let msg = frame.get("msg").and_then(Value::as_str).unwrap_or("");
            return Err(RunError::Service(format!("{code}: {msg}")));
        }
        frame.remove("id");
        frame.remove("type");
        Ok(frame)
    }

    /// Sends `shutdown`, stopping the service.
    pub fn shutdown(mut self) -> Result<(), RunError> {
        self.call("shutdown", Map::new()).map(drop)
    }
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("json! object literal"),
    }
}

impl Backend for SocketClient {
    fn register(&mut self, space: &ContextSpace) -> Result<(), RunError> {
        let doc: Value = serde_json::from_slice(&serialize_space(space)).map_err(|e| RunError::Service(e.to_string()))?;
        self.call("register_app", object(json!({ "space": doc }))).map(drop)
    }

    fn instruction(&mut self, text: &str) -> Result<(), RunError> {
        self.call("instruction", object(json!({ "text": text }))).map(drop)
    }

    fn pre_action(&mut self, action: &TraceAction) -> Result<Outcome, RunError> {
        let body = match action {
            TraceAction::Direct { function, params } => json!({"mode": "direct", "function": function, "params": params}),
            TraceAction::Gui { action, tree } => json!({"mode": "gui", "action": action, "tree": tree}),
        };
        Outcome::from_fields(self.call("pre_action", object(body))?)
    }

    fn confirm(&mut self, event_id: u64, allow: bool) -> Result<String, RunError> {
        let frame = self.call("confirm_response", object(json!({"event_id": event_id, "allow": allow})))?;
        frame
            .get("verdict")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| RunError::Service("confirm response without verdict".into()))
    }

    fn post_action(&mut self, function: &str, params: BTreeMap<String, Value>) -> Result<(), RunError> {
        self.call("post_action", object(json!({"function": function, "params": params}))).map(drop)
    }
}

/// Replay settings.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// How confirmation requests are answered when the step's expectation
    /// does not say. `false` (deny) keeps replay fail-closed.
    pub confirm_default: bool,
    /// Simulated agent time spent before each action (reasoning and
    /// actuation). Zero disables it.
    pub agent_step: Duration,
}

/// The outcome of one action step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub trace: String,
    /// Index of the step within the trace file.
    pub step: usize,
    pub label: Label,
    pub mode: String,
    #[serde(default)]
    pub expect: Option<Expect>,
    pub outcome: Outcome,
    /// Verdict after any confirmation round.
    pub resolved: String,
    #[serde(default)]
    pub matched: Option<bool>,
    /// Wall-clock time of the `pre_action` call.
    #[serde(skip)]
    pub latency: Duration,
}

/// Result of replaying one trace.
#[derive(Debug, Clone)]
pub struct TraceRun {
    pub records: Vec<StepRecord>,
    /// Time from the first instruction to the end of the trace. Excludes
    /// space registration.
    pub elapsed: Duration,
}

/// Registers `space` and replays `trace`. Confirmation requests are
/// answered with `allow` when the step expects `allow`, otherwise with
/// `options.confirm_default`. Allowed actions are reported back with
/// `post_action`.
pub fn run_trace(
    backend: &mut dyn Backend,
    space: &ContextSpace,
    trace: &Trace,
    options: &RunOptions,
) -> Result<TraceRun, RunError> {
    backend.register(space)?;
    let start = Instant::now();
    let mut records = Vec::new();
    for (step, s) in trace.steps.iter().enumerate() {
        match s {
            TraceStep::Instruction(text) => backend.instruction(text)?,
            TraceStep::Action(a) => {
                if !options.agent_step.is_zero() {
                    std::thread::sleep(options.agent_step);
                }
                let t0 = Instant::now();
                let outcome = backend.pre_action(&a.action)?;
                let latency = t0.elapsed();
                let resolved = if outcome.verdict == "confirm" {
                    let allow = a.expect.map_or(options.confirm_default, |e| e == Expect::Allow);
                    backend.confirm(outcome.event_id, allow)?
                } else {
                    outcome.verdict.clone()
                };
                if resolved == "allow" {
                    if let Some(f) = &outcome.function {
                        backend.post_action(f, a.action.params())?;
                    }
                }
                records.push(StepRecord {
                    trace: trace.name.clone(),
                    step,
                    label: a.label,
                    mode: a.action.mode().to_owned(),
                    expect: a.expect,
                    matched: a.expect.map(|e| e.matches(&outcome.verdict, &resolved)),
                    outcome,
                    resolved,
                    latency,
                });
            }
        }
    }
    Ok(TraceRun { records, elapsed: start.elapsed() })
}

/// The agent alone: the same trace with every guard call removed. Only the
/// simulated agent step is spent per action.
pub fn run_unguarded(trace: &Trace, options: &RunOptions) -> Duration {
    let start = Instant::now();
    for _ in trace.actions() {
        if !options.agent_step.is_zero() {
            std::thread::sleep(options.agent_step);
        }
    }
    start.elapsed()
}
