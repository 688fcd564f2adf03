//! Policy retrieval, rule validation, decisions and the validation event log.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{evaluate, parse_constraint, TriBool};
use crate::intent::Refined;
use crate::model::{ContextSpace, ContextVector, FunctionEntry, Policy, SecurityLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissKind {
    UnknownFunction,
    UnknownIntent,
    UnrelatedInstruction,
}

impl MissKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MissKind::UnknownFunction => "unknown_function",
            MissKind::UnknownIntent => "unknown_intent",
            MissKind::UnrelatedInstruction => "unrelated_instruction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownRouting {
    #[default]
    Block,
    Confirm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleFailure {
    pub ctx_id: String,
    pub constraint: String,
    pub guidance: String,
    /// `false` or `unknown`.
    pub outcome: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockReason {
    PolicyViolation,
    OrderViolation,
    ExtractionTimeout,
    UserDenied,
}

impl BlockReason {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockReason::PolicyViolation => "policy_violation",
            BlockReason::OrderViolation => "order_violation",
            BlockReason::ExtractionTimeout => "extraction_timeout",
            BlockReason::UserDenied => "user_denied",
        }
    }
}

/// Outcome of validating one action.
///
/// Policy blocks list every failed or unknown rule. Blocks for other reasons
/// carry a `note` with re-planning guidance instead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum Decision {
    Allow {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        warnings: Vec<String>,
    },
    Block {
        failed: Vec<RuleFailure>,
        unknowns: Vec<String>,
        reason: BlockReason,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Confirm {
        reason: String,
    },
    Miss {
        kind: MissKind,
    },
}

impl Decision {
    pub fn allow() -> Self {
        Decision::Allow { warnings: Vec::new() }
    }

    pub fn blocked(reason: BlockReason, note: impl Into<String>) -> Self {
        Decision::Block { failed: Vec::new(), unknowns: Vec::new(), reason, note: Some(note.into()) }
    }

    pub fn verdict(&self) -> &'static str {
        match self {
            Decision::Allow { .. } => "allow",
            Decision::Block { .. } => "block",
            Decision::Confirm { .. } => "confirm",
            Decision::Miss { .. } => "miss",
        }
    }

    pub fn is_allow(&self) -> bool {
        matches!(self, Decision::Allow { .. })
    }

    /// Guidance for the agent: failed-rule guidance in rule order, then any note.
    pub fn guidance(&self) -> Vec<String> {
        match self {
            Decision::Block { failed, note, .. } => {
                let mut g: Vec<String> = failed.iter().map(|f| f.guidance.clone()).collect();
                g.extend(note.clone());
                g
            }
            Decision::Confirm { reason } => vec![reason.clone()],
            Decision::Miss { kind } => vec![match kind {
                MissKind::UnknownFunction => "the requested function cannot be located in the active context space".into(),
                MissKind::UnknownIntent => "no policy covers the intent of this request for the function".into(),
                MissKind::UnrelatedInstruction => "the action is unrelated to the current instruction".into(),
            }],
            Decision::Allow { warnings } => warnings.clone(),
        }
    }

    pub fn unknowns(&self) -> &[String] {
        match self {
            Decision::Block { unknowns, .. } => unknowns,
            _ => &[],
        }
    }
}

/// Finds the policy governing `(function_id, refined)`.
pub fn retrieve<'s>(
    space: &'s ContextSpace,
    function_id: &str,
    refined: &Refined,
) -> Result<(&'s FunctionEntry, Option<&'s Policy>), MissKind> {
    let entry = space.function(function_id).ok_or(MissKind::UnknownFunction)?;
    if entry.sec_level != SecurityLevel::Conditional {
        return Ok((entry, None));
    }
    match refined {
        Refined::Intent(id) => entry.policies.get(id).map(|p| (entry, Some(p))).ok_or(MissKind::UnknownIntent),
        Refined::Fallback => entry
            .fallback_intent()
            .and_then(|i| entry.policies.get(&i.intent_id))
            .map(|p| (entry, Some(p)))
            .ok_or(MissKind::UnknownIntent),
        Refined::Unrelated => Err(MissKind::UnrelatedInstruction),
    }
}

/// Evaluates every rule and returns the outcome of each, in rule order.
/// Unparseable constraints evaluate to Unknown.
pub fn rule_outcomes(policy: &Policy, cv: &ContextVector) -> Vec<TriBool> {
    policy
        .rules
        .iter()
        .map(|r| parse_constraint(&r.constraint).map_or(TriBool::Unknown, |ast| evaluate(&ast, cv)))
        .collect()
}

/// Combines rule outcomes into a decision for a conditional function.
pub fn decide_outcomes(policy: &Policy, outcomes: &[TriBool], routing: UnknownRouting) -> Decision {
    let mut failed = Vec::new();
    let mut unknowns = Vec::new();
    let mut any_false = false;
    for (rule, outcome) in policy.rules.iter().zip(outcomes) {
        match outcome {
            TriBool::True => continue,
            TriBool::False => any_false = true,
            TriBool::Unknown => unknowns.push(rule.ctx_id.clone()),
        }
        failed.push(RuleFailure {
            ctx_id: rule.ctx_id.clone(),
            constraint: rule.constraint.clone(),
            guidance: rule.guidance.clone(),
            outcome: outcome.as_str().to_owned(),
        });
    }
    if failed.is_empty() {
        return Decision::allow();
    }
    if !any_false && routing == UnknownRouting::Confirm {
        return Decision::Confirm { reason: format!("context unavailable: {}", unknowns.join(", ")) };
    }
    Decision::Block { failed, unknowns, reason: BlockReason::PolicyViolation, note: None }
}

/// Normal functions pass, dangerous ones need confirmation, conditional ones
/// must satisfy every rule of their policy.
pub fn validate(entry: &FunctionEntry, policy: Option<&Policy>, cv: &ContextVector, routing: UnknownRouting) -> Decision {
    match entry.sec_level {
        SecurityLevel::Normal => Decision::allow(),
        SecurityLevel::Dangerous => Decision::Confirm {
            reason: format!("`{}` is dangerous and requires user confirmation", entry.function_id),
        },
        SecurityLevel::Conditional => match policy {
            Some(p) => decide_outcomes(p, &rule_outcomes(p, cv), routing),
            None => Decision::Miss { kind: MissKind::UnknownIntent },
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Validation,
    Confirmation,
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub ctx_id: String,
    pub constraint: String,
    pub outcome: String,
}

/// One append-only log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationEvent {
    pub event_id: u64,
    pub kind: EventKind,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub session_id: u64,
    pub app_id: String,
    #[serde(default)]
    pub function_id: Option<String>,
    #[serde(default)]
    pub intent_id: Option<String>,
    pub decision: Decision,
    #[serde(default)]
    pub rule_outcomes: Vec<RuleOutcome>,
    #[serde(default)]
    pub instruction: Option<String>,
    #[serde(default)]
    pub context_values: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub user_override: Option<bool>,
    /// Event this record responds to (confirmations).
    #[serde(default)]
    pub ref_event: Option<u64>,
    #[serde(default)]
    pub note: Option<String>,
}

impl ValidationEvent {
    pub fn new(kind: EventKind, session_id: u64, app_id: impl Into<String>, decision: Decision) -> Self {
        ValidationEvent {
            event_id: 0,
            kind,
            timestamp: 0,
            session_id,
            app_id: app_id.into(),
            function_id: None,
            intent_id: None,
            decision,
            rule_outcomes: Vec::new(),
            instruction: None,
            context_values: BTreeMap::new(),
            user_override: None,
            ref_event: None,
            note: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("unknown event id {0}")]
    UnknownEvent(u64),
    #[error("event {0} is not awaiting confirmation")]
    NotConfirmable(u64),
    #[error("event log write failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Default)]
struct LogState {
    events: Vec<ValidationEvent>,
    file: Option<File>,
}

/// In-memory event log, optionally mirrored to a newline-delimited JSON file.
#[derive(Debug, Default)]
pub struct EventLog {
    state: Mutex<LogState>,
}

fn now_millis() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_file(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EventLog { state: Mutex::new(LogState { events: Vec::new(), file: Some(file) }) })
    }

    /// Assigns the next id and a timestamp, stores the event and returns its id.
    pub fn append(&self, mut event: ValidationEvent) -> Result<u64, EventError> {
        let mut st = self.state.lock().expect("event log lock");
        event.event_id = st.events.len() as u64 + 1;
        event.timestamp = now_millis();
        if let Some(file) = st.file.as_mut() {
            let mut line = serde_json::to_string(&event).expect("event serializes");
            line.push('\n');
            file.write_all(line.as_bytes())?;
        }
        let id = event.event_id;
        st.events.push(event);
        Ok(id)
    }

    pub fn get(&self, event_id: u64) -> Option<ValidationEvent> {
        let st = self.state.lock().expect("event log lock");
        st.events.get(event_id.checked_sub(1)? as usize).cloned()
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("event log lock").events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<ValidationEvent> {
        self.state.lock().expect("event log lock").events.clone()
    }

    /// Records the user's answer to a Confirm or Block event. Allowing a
    /// Block is flagged as an override.
    pub fn on_confirm(&self, session_id: u64, event_id: u64, user_allowed: bool) -> Result<(u64, Decision), EventError> {
        let original = self.get(event_id).ok_or(EventError::UnknownEvent(event_id))?;
        if original.kind != EventKind::Validation
            || !matches!(original.decision, Decision::Confirm { .. } | Decision::Block { .. })
        {
            return Err(EventError::NotConfirmable(event_id));
        }
        let was_block = matches!(original.decision, Decision::Block { .. });
        let decision = if user_allowed {
            Decision::allow()
        } else {
            Decision::blocked(BlockReason::UserDenied, "the user declined this action")
        };
        let mut event = ValidationEvent::new(EventKind::Confirmation, session_id, original.app_id, decision.clone());
        event.function_id = original.function_id;
        event.intent_id = original.intent_id;
        event.instruction = original.instruction;
        event.ref_event = Some(event_id);
        event.user_override = Some(user_allowed && was_block);
        let id = self.append(event)?;
        Ok((id, decision))
    }
}

/// Reads a newline-delimited event log.
pub fn read_event_log(text: &str) -> Result<Vec<ValidationEvent>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}
