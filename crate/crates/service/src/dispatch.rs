//! Per-connection frame handling.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use ctxguard_core::gui::{parse_tree, GuiAction};
use ctxguard_core::guard::{Action, Guard, GuardError, Verdict};
use ctxguard_core::manager::{Activation, ManagerError, Session};
use ctxguard_core::model::parse_space;
use ctxguard_core::verifier::{Decision, EventError};
use serde::Deserialize;
use serde_json::{Map, Value};

pub const PROTOCOL_VERSION: &str = "1";

/// Error frame: `{"id":N,"type":"error","code":C,"msg":S}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameError {
    pub code: &'static str,
    pub msg: String,
}

impl FrameError {
    fn new(code: &'static str, msg: impl Into<String>) -> Self {
        FrameError { code, msg: msg.into() }
    }
}

impl From<GuardError> for FrameError {
    fn from(e: GuardError) -> Self {
        let code = match &e {
            GuardError::NoActiveApp | GuardError::Manager(ManagerError::NoActiveApp) => "no_active_app",
            GuardError::NoInstruction => "no_instruction",
            GuardError::Manager(ManagerError::Lint { .. }) => "lint_failed",
            GuardError::Manager(ManagerError::Cache(_)) | GuardError::Cache(_) => "cache_full",
            GuardError::Event(EventError::UnknownEvent(_)) => "unknown_event",
            GuardError::Event(EventError::NotConfirmable(_)) => "not_confirmable",
            GuardError::Event(EventError::Io(_)) => "io_error",
            GuardError::Config(_) => "config",
        };
        FrameError::new(code, e.to_string())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterApp {
    #[serde(default)]
    path: Option<PathBuf>,
    #[serde(default)]
    space: Option<Value>,
    /// Activates a cached space by id when neither path nor space is given.
    #[serde(default)]
    app_id: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Instruction {
    text: String,
}

#[derive(Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
enum PreAction {
    Direct {
        function: String,
        #[serde(default)]
        params: BTreeMap<String, Value>,
    },
    Gui {
        action: GuiAction,
        tree: String,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PostAction {
    function: String,
    #[serde(default)]
    params: BTreeMap<String, Value>,
    #[serde(default = "ok")]
    outcome: String,
}

fn ok() -> String {
    "ok".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfirmResponse {
    event_id: u64,
    allow: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Report {
    #[serde(default)]
    event_id: Option<u64>,
    #[serde(default)]
    function: Option<String>,
    note: String,
}

fn payload<T: for<'de> Deserialize<'de>>(body: Map<String, Value>) -> Result<T, FrameError> {
    serde_json::from_value(Value::Object(body)).map_err(|e| FrameError::new("invalid_payload", e.to_string()))
}

/// Fields of a decision frame.
pub fn decision_fields(verdict: &Verdict) -> Map<String, Value> {
    let d = &verdict.decision;
    let mut m = Map::new();
    m.insert("verdict".into(), d.verdict().into());
    m.insert("guidance".into(), d.guidance().into());
    m.insert("unknowns".into(), d.unknowns().to_vec().into());
    m.insert("event_id".into(), verdict.event_id.into());
    match d {
        Decision::Block { reason, .. } => {
            m.insert("reason".into(), reason.as_str().into());
        }
        Decision::Miss { kind } => {
            m.insert("reason".into(), kind.as_str().into());
        }
        _ => {}
    }
    if let Some(f) = &verdict.function_id {
        m.insert("function".into(), f.clone().into());
    }
    if let Some(i) = &verdict.intent_id {
        m.insert("intent".into(), i.clone().into());
    }
    m
}

/// State of one connection: its session and the shared guard.
pub struct Dispatcher {
    guard: Arc<Guard>,
    session: Session,
}

/// What the connection loop should do after a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Control {
    Continue,
    Shutdown,
}

impl Dispatcher {
    pub fn new(guard: Arc<Guard>) -> Self {
        let session = guard.open_session();
        Dispatcher { guard, session }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Handles one request line and returns the response line (without the
    /// trailing newline). Keys are emitted in sorted order.
    pub fn handle_line(&mut self, line: &str) -> (String, Control) {
        let (id, result) = match serde_json::from_str::<Value>(line) {
            Err(e) => (Value::Null, Err(FrameError::new("malformed_frame", e.to_string()))),
            Ok(Value::Object(mut body)) => {
                let id = body.remove("id").unwrap_or(Value::Null);
                let ty = body.remove("type");
                let result = match (&id, ty) {
                    (Value::Number(n), Some(Value::String(ty))) if n.is_u64() => {
                        self.dispatch(&ty, body).map(|(fields, ctl)| (ty, fields, ctl))
                    }
                    _ => Err(FrameError::new("malformed_frame", "frames need an integer `id` and a string `type`")),
                };
                (id, result)
            }
            Ok(_) => (Value::Null, Err(FrameError::new("malformed_frame", "frame is not a JSON object"))),
        };
        let (mut frame, control) = match result {
            Ok((ty, fields, control)) => {
                let mut frame = fields;
                frame.insert("type".into(), format!("{ty}_resp").into());
                (frame, control)
            }
            Err(e) => {
                let mut frame = Map::new();
                frame.insert("type".into(), "error".into());
                frame.insert("code".into(), e.code.into());
                frame.insert("msg".into(), e.msg.into());
                (frame, Control::Continue)
            }
        };
        frame.insert("id".into(), id);
        (Value::Object(frame).to_string(), control)
    }

    fn dispatch(&mut self, ty: &str, body: Map<String, Value>) -> Result<(Map<String, Value>, Control), FrameError> {
        let fields = match ty {
            "hello" => {
                let mut m = Map::new();
                m.insert("protocol".into(), PROTOCOL_VERSION.into());
                m.insert("session_id".into(), self.session.id.into());
                m
            }
            "register_app" => self.register(payload(body)?)?,
            "instruction" => {
                let p: Instruction = payload(body)?;
                self.guard.instruction(&mut self.session, &p.text)?;
                let mut m = Map::new();
                m.insert("accepted".into(), true.into());
                m
            }
            "pre_action" => {
                let action = match payload::<PreAction>(body)? {
                    PreAction::Direct { function, params } => Action::Direct { function_id: function, params },
                    PreAction::Gui { action, tree } => {
                        let tree = parse_tree(tree.as_bytes()).map_err(|e| FrameError::new("invalid_tree", e.to_string()))?;
                        Action::Gui { action, tree }
                    }
                };
                let verdict = self.guard.decide(&mut self.session, action)?;
                decision_fields(&verdict)
            }
            "post_action" => {
                let p: PostAction = payload(body)?;
                self.guard.post_action(&mut self.session, &p.function, p.params, &p.outcome)?;
                let mut m = Map::new();
                m.insert("history_len".into(), self.session.history().len().into());
                m
            }
            "confirm_response" => {
                let p: ConfirmResponse = payload(body)?;
                let (event_id, decision) = self.guard.confirm(&self.session, p.event_id, p.allow)?;
                let event = self.guard.events().get(event_id).expect("just appended");
                let mut m = Map::new();
                m.insert("verdict".into(), decision.verdict().into());
                m.insert("event_id".into(), event_id.into());
                m.insert("override".into(), event.user_override.unwrap_or(false).into());
                m
            }
            "report" => {
                let p: Report = payload(body)?;
                let event_id = self.guard.report(&self.session, p.event_id, p.function, &p.note)?;
                let mut m = Map::new();
                m.insert("event_id".into(), event_id.into());
                m
            }
            "shutdown" => return Ok((Map::new(), Control::Shutdown)),
            other => return Err(FrameError::new("unknown_type", format!("unknown frame type `{other}`"))),
        };
        Ok((fields, Control::Continue))
    }

    fn load(&mut self, bytes: &[u8]) -> Result<bool, FrameError> {
        let space = parse_space(bytes).map_err(|e| FrameError::new("schema_error", e.to_string()))?;
        Ok(self.guard.register(&mut self.session, space)? == Activation::Loaded)
    }

    fn register(&mut self, p: RegisterApp) -> Result<Map<String, Value>, FrameError> {
        let loaded = match (p.path, p.space, p.app_id) {
            (Some(path), None, None) => {
                let bytes = std::fs::read(&path)
                    .map_err(|e| FrameError::new("io_error", format!("{}: {e}", path.display())))?;
                self.load(&bytes)?
            }
            (None, Some(doc), None) => self.load(&serde_json::to_vec(&doc).expect("value serializes"))?,
            (None, None, Some(app_id)) => {
                if !self.guard.switch_app(&mut self.session, &app_id) {
                    return Err(FrameError::new("cache_miss", format!("`{app_id}` is not cached; send the space")));
                }
                false
            }
            _ => return Err(FrameError::new("invalid_payload", "give exactly one of `path`, `space` or `app_id`")),
        };
        let active = self.session.active().expect("registered");
        let mut m = Map::new();
        m.insert("app_id".into(), active.space.app_id.clone().into());
        m.insert("version".into(), active.space.version.clone().into());
        m.insert("loaded".into(), loaded.into());
        m.insert("functions".into(), active.space.function_count().into());
        m.insert("contexts".into(), active.space.contexts.len().into());
        Ok(m)
    }
}
