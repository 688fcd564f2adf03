//! Scripted agent traces.
//!
//! A trace file is a JSON array of steps:
//!
//! * `{"kind": "instruction", "text": ...}`
//! * `{"kind": "action", "label": "benign"|"attack", "action": {...}, "expect": ...}`
//!   where `action` is `{"mode": "direct", "function", "params"}` or
//!   `{"mode": "gui", "action": {"kind": "click", "x", "y"}, "screen": <file>}`
//!   (`tree` may carry the XML inline instead of `screen`)
//! * `{"kind": "expect", "verdict": ...}`, applying to the preceding action
//!
//! Expectation keywords are `allow`, `block`, `confirm`, `miss` and `deny`
//! (anything that does not end in an allowed action).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ctxguard_core::gui::GuiAction;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Benign,
    Attack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    Allow,
    Block,
    Confirm,
    Miss,
    Deny,
}

impl Expect {
    /// `initial` is the guard's verdict, `resolved` the verdict after any
    /// confirmation round.
    pub fn matches(self, initial: &str, resolved: &str) -> bool {
        match self {
            Expect::Allow => resolved == "allow",
            Expect::Block => initial == "block",
            Expect::Confirm => initial == "confirm",
            Expect::Miss => initial == "miss",
            Expect::Deny => resolved != "allow",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceAction {
    Direct { function: String, params: BTreeMap<String, Value> },
    Gui { action: GuiAction, tree: String },
}

impl TraceAction {
    pub fn mode(&self) -> &'static str {
        match self {
            TraceAction::Direct { .. } => "direct",
            TraceAction::Gui { .. } => "gui",
        }
    }

    /// Parameters reported with `post_action` once the action has run.
    pub fn params(&self) -> BTreeMap<String, Value> {
        match self {
            TraceAction::Direct { params, .. } => params.clone(),
            TraceAction::Gui { action, .. } => action.params(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionStep {
    pub label: Label,
    pub action: TraceAction,
    pub expect: Option<Expect>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceStep {
    Instruction(String),
    Action(ActionStep),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub name: String,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn actions(&self) -> impl Iterator<Item = &ActionStep> {
        self.steps.iter().filter_map(|s| match s {
            TraceStep::Action(a) => Some(a),
            TraceStep::Instruction(_) => None,
        })
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("{trace}: step {step}: {msg}")]
    Step { trace: String, step: usize, msg: String },
    #[error("{trace}: {msg}")]
    Trace { trace: String, msg: String },
}

#[derive(Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
enum RawAction {
    Direct {
        function: String,
        #[serde(default)]
        params: BTreeMap<String, Value>,
    },
    Gui {
        action: GuiAction,
        #[serde(default)]
        screen: Option<PathBuf>,
        #[serde(default)]
        tree: Option<String>,
    },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawStep {
    Instruction {
        text: String,
    },
    Action {
        label: Option<Label>,
        action: RawAction,
        #[serde(default)]
        expect: Option<Expect>,
    },
    Expect {
        verdict: Expect,
    },
}

/// Parses a trace document. Relative `screen` paths resolve against `base`.
pub fn parse_trace(name: &str, text: &str, base: &Path) -> Result<Trace, TraceError> {
    let step_err = |step: usize, msg: String| TraceError::Step { trace: name.to_owned(), step, msg };
    let raw: Vec<Value> =
        serde_json::from_str(text).map_err(|e| TraceError::Trace { trace: name.to_owned(), msg: e.to_string() })?;
    let mut steps: Vec<TraceStep> = Vec::new();
    for (i, value) in raw.into_iter().enumerate() {
        let step: RawStep = serde_json::from_value(value).map_err(|e| step_err(i, e.to_string()))?;
        if i == 0 && !matches!(step, RawStep::Instruction { .. }) {
            return Err(step_err(0, "the first step must be an instruction".into()));
        }
        match step {
            RawStep::Instruction { text } => steps.push(TraceStep::Instruction(text)),
            RawStep::Action { label, action, expect } => {
                let label = label.ok_or_else(|| step_err(i, "action steps need a `label`".into()))?;
                let action = match action {
                    RawAction::Direct { function, params } => TraceAction::Direct { function, params },
                    RawAction::Gui { action, screen, tree } => {
                        let tree = match (screen, tree) {
                            (Some(p), None) => {
                                let path = base.join(p);
                                std::fs::read_to_string(&path)
                                    .map_err(|e| step_err(i, format!("{}: {e}", path.display())))?
                            }
                            (None, Some(t)) => t,
                            _ => return Err(step_err(i, "gui actions need exactly one of `screen` and `tree`".into())),
                        };
                        TraceAction::Gui { action, tree }
                    }
                };
                steps.push(TraceStep::Action(ActionStep { label, action, expect }));
            }
            RawStep::Expect { verdict } => match steps.last_mut() {
                Some(TraceStep::Action(a)) if a.expect.is_none() => a.expect = Some(verdict),
                Some(TraceStep::Action(_)) => return Err(step_err(i, "the preceding action already has an expectation".into())),
                _ => return Err(step_err(i, "an expect step must follow an action".into())),
            },
        }
    }
    let trace = Trace { name: name.to_owned(), steps };
    if trace.actions().next().is_none() {
        return Err(TraceError::Trace { trace: name.to_owned(), msg: "trace has no actions".into() });
    }
    Ok(trace)
}

pub fn load_trace(path: &Path) -> Result<Trace, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|e| TraceError::Io { path: path.to_owned(), msg: e.to_string() })?;
    let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    parse_trace(&name, &text, path.parent().unwrap_or(Path::new(".")))
}

/// Loads every `*.json` trace in `dir`, sorted by file name.
pub fn load_corpus(dir: &Path) -> Result<Vec<Trace>, TraceError> {
    let io = |e: std::io::Error| TraceError::Io { path: dir.to_owned(), msg: e.to_string() };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths.iter().map(|p| load_trace(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Trace, TraceError> {
        parse_trace("t", text, Path::new("."))
    }

    #[test]
    fn standalone_expect_attaches_to_previous_action() {
        let t = parse(
            r#"[{"kind":"instruction","text":"hi"},
                {"kind":"action","label":"benign","action":{"mode":"direct","function":"f"}},
                {"kind":"expect","verdict":"allow"}]"#,
        )
        .unwrap();
        let a = t.actions().next().unwrap();
        assert_eq!(a.expect, Some(Expect::Allow));
        assert_eq!(a.action.mode(), "direct");
    }

    #[test]
    fn malformed_traces_are_rejected() {
        let action = r#"{"kind":"action","label":"benign","action":{"mode":"direct","function":"f"}}"#;
        for bad in [
            format!("[{action}]"),
            r#"[{"kind":"instruction","text":"x"}]"#.to_owned(),
            r#"[{"kind":"instruction","text":"x"},{"kind":"expect","verdict":"allow"}]"#.to_owned(),
            r#"[{"kind":"instruction","text":"x"},{"kind":"action","action":{"mode":"direct","function":"f"}}]"#.to_owned(),
            format!(r#"[{{"kind":"instruction","text":"x"}},{action},{{"kind":"expect","verdict":"maybe"}}]"#),
            r#"[{"kind":"instruction","text":"x"},{"kind":"action","label":"attack","action":{"mode":"gui","action":{"kind":"click","x":1,"y":1}}}]"#.to_owned(),
        ] {
            assert!(parse(&bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn expectation_semantics() {
        assert!(Expect::Deny.matches("confirm", "block"));
        assert!(Expect::Deny.matches("miss", "miss"));
        assert!(!Expect::Deny.matches("confirm", "allow"));
        assert!(Expect::Allow.matches("confirm", "allow"));
        assert!(Expect::Confirm.matches("confirm", "block"));
        assert!(!Expect::Block.matches("miss", "miss"));
    }
}
