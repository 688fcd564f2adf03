//! Structured reasoning providers.
//!
//! Every generation stage sends a [`ReasoningRequest`] and expects a JSON
//! object back. [`ask`] deserializes and validates the response, retrying with
//! the failure appended to `feedback` until the retry budget is spent.

use std::collections::BTreeMap;
use std::path::Path;

use ctxguard_core::transport::{Transport, TransportError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::heuristic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Classify,
    Intents,
    Policy,
    Handlers,
    Rationale,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Classify => "classify",
            Stage::Intents => "intents",
            Stage::Policy => "policy",
            Stage::Handlers => "handlers",
            Stage::Rationale => "rationale",
        }
    }

    /// Shape of the expected response, sent along with each request.
    pub fn output_schema(self) -> Value {
        let context = json!({
            "type": "object",
            "required": ["type", "src"],
            "properties": {
                "type": {"enum": ["string", "boolean", "integer", "float", "string_list"]},
                "src": {"enum": ["user_request", "system_api", "system_cli", "func_params", "agent_history"]},
                "tempr": {"enum": ["cold", "warm", "hot"]},
                "acquisition": {"type": "string"}
            }
        });
        match self {
            Stage::Classify => json!({
                "type": "object",
                "required": ["sec_level"],
                "properties": {"sec_level": {"enum": ["normal", "conditional", "dangerous"]}}
            }),
            Stage::Intents => json!({
                "type": "object",
                "required": ["intents"],
                "properties": {"intents": {"type": "array", "items": {
                    "type": "object",
                    "required": ["intent_id", "description"],
                    "properties": {"intent_id": {"type": "string"}, "description": {"type": "string"}}
                }}}
            }),
            Stage::Policy => json!({
                "type": "object",
                "required": ["rules", "contexts"],
                "properties": {
                    "rules": {"type": "array", "items": {
                        "type": "object",
                        "required": ["ctx_id", "constraint", "guidance"],
                        "properties": {
                            "ctx_id": {"type": "string"},
                            "constraint": {"type": "string"},
                            "guidance": {"type": "string"}
                        }
                    }},
                    "contexts": {"type": "object", "additionalProperties": context}
                }
            }),
            Stage::Handlers => json!({
                "type": "object",
                "required": ["handlers"],
                "properties": {"handlers": {"type": "array", "items": {
                    "type": "object",
                    "required": ["binding", "handler", "function_id", "description"],
                    "properties": {
                        "binding": {"type": "object", "required": ["resource_id"]},
                        "handler": {"type": "string"},
                        "function_id": {"type": "string"},
                        "description": {"type": "string"},
                        "excerpt": {"type": "string"}
                    }
                }}}
            }),
            Stage::Rationale => json!({
                "type": "object",
                "required": ["rationale"],
                "properties": {"rationale": {"type": "string"}}
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReasoningRequest {
    pub stage: Stage,
    /// Function id, `function/intent` pair, file name or suggestion target.
    pub subject: String,
    /// Zero-based attempt number within one [`ask`] call.
    pub attempt: usize,
    pub inputs: Value,
    /// Problems with earlier attempts.
    pub feedback: Vec<String>,
    pub output_schema: Value,
}

impl ReasoningRequest {
    pub fn new(stage: Stage, subject: impl Into<String>, inputs: Value) -> Self {
        ReasoningRequest {
            stage,
            subject: subject.into(),
            attempt: 0,
            inputs,
            feedback: Vec::new(),
            output_schema: stage.output_schema(),
        }
    }

    /// Lookup key used by [`StubProvider`].
    pub fn key(&self) -> String {
        format!("{}:{}", self.stage.as_str(), self.subject)
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("response is not JSON: {0}")]
    Json(String),
    #[error("{0}")]
    Other(String),
}

pub trait ReasoningProvider: Send + Sync {
    fn reason(&self, request: &ReasoningRequest) -> Result<Value, ProviderError>;
}

/// Stage failure after the retry budget.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{stage} `{subject}` failed after {attempts} attempt(s): {last}")]
pub struct Exhausted {
    pub stage: &'static str,
    pub subject: String,
    pub attempts: usize,
    pub last: String,
}

/// Sends `request` and parses the response as `T`, re-asking up to `retries`
/// more times when the response is missing, malformed or rejected by `check`.
pub fn ask<T: DeserializeOwned>(
    provider: &dyn ReasoningProvider,
    mut request: ReasoningRequest,
    retries: usize,
    check: impl Fn(&T) -> Result<(), String>,
) -> Result<T, Exhausted> {
    let mut last = String::new();
    for attempt in 0..=retries {
        request.attempt = attempt;
        let problem = match provider.reason(&request) {
            Err(e) => e.to_string(),
            Ok(v) => match serde_json::from_value::<T>(v) {
                Err(e) => format!("schema violation: {e}"),
                Ok(out) => match check(&out) {
                    Ok(()) => return Ok(out),
                    Err(e) => e,
                },
            },
        };
        log::warn!("{} attempt {attempt}: {problem}", request.key());
        request.feedback.push(problem.clone());
        last = problem;
    }
    Err(Exhausted { stage: request.stage.as_str(), subject: request.subject, attempts: retries + 1, last })
}

/// Offline provider with canned responses keyed by `stage:subject`.
///
/// A canned value that is an array holds one response per attempt; the last
/// element repeats. Requests without a canned entry fall back to a
/// deterministic keyword heuristic unless `strict` is set.
#[derive(Debug, Clone, Default)]
pub struct StubProvider {
    pub canned: BTreeMap<String, Value>,
    pub strict: bool,
}

const BUNDLED: &str = include_str!("../fixtures/stub_canned.json");

impl StubProvider {
    pub fn new(canned: BTreeMap<String, Value>) -> Self {
        StubProvider { canned, strict: false }
    }

    /// Canned outputs for the bundled fixtures.
    pub fn bundled() -> Self {
        StubProvider::new(serde_json::from_str(BUNDLED).expect("bundled stub fixture is valid JSON"))
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let canned = serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(StubProvider::new(canned))
    }

    /// Adds `other`'s entries, replacing existing keys.
    pub fn merged(mut self, other: StubProvider) -> Self {
        self.canned.extend(other.canned);
        self
    }
}

impl ReasoningProvider for StubProvider {
    fn reason(&self, request: &ReasoningRequest) -> Result<Value, ProviderError> {
        match self.canned.get(&request.key()) {
            Some(Value::Array(seq)) if !seq.is_empty() => Ok(seq[request.attempt.min(seq.len() - 1)].clone()),
            Some(v) => Ok(v.clone()),
            None if self.strict => Err(ProviderError::Other(format!("no canned response for `{}`", request.key()))),
            None => heuristic::respond(request),
        }
    }
}

/// Provider reached over a `cmd:` or `http://` transport. The request is sent
/// as JSON and the response body must be a JSON object.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    pub transport: Transport,
}

impl ReasoningProvider for RemoteProvider {
    fn reason(&self, request: &ReasoningRequest) -> Result<Value, ProviderError> {
        let body = serde_json::to_string(request).map_err(|e| ProviderError::Json(e.to_string()))?;
        let out = self.transport.call(&body)?;
        serde_json::from_str(&out).map_err(|e| ProviderError::Json(e.to_string()))
    }
}

/// `stub` gives the bundled stub; `cmd:...` and `http(s)://...` give a
/// [`RemoteProvider`].
pub fn provider_from_descriptor(descriptor: &str) -> Result<Box<dyn ReasoningProvider>, TransportError> {
    Ok(match Transport::from_descriptor(descriptor)? {
        None => Box::new(StubProvider::bundled()),
        Some(transport) => Box::new(RemoteProvider { transport }),
    })
}
