//! The in-process enforcement pipeline tying the manager, intent engine,
//! GUI mapper and verifier together.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::parse_constraint;
use crate::gui::{locate, map_to_function, GuiAction, GuiTree};
use crate::intent::{
    check_order, extract, refine, Embedder, HashedEmbedder, IntentExtractor, KeywordExtractor, Refined,
    RemoteExtractor, DEFAULT_THRESHOLD,
};
use crate::manager::{
    Acquisition, Activation, CacheError, CommandProvider, ContextManager, FixtureProvider, ManagerError, Session,
    DEFAULT_CACHE_CAPACITY,
};
use crate::model::{ContextSpace, SecurityLevel, UpdateTrigger};
use crate::transport::Transport;
use crate::verifier::{
    retrieve, rule_outcomes, decide_outcomes, validate, BlockReason, Decision, EventError, EventKind, EventLog,
    MissKind, RuleOutcome, UnknownRouting, ValidationEvent,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderCheck {
    #[default]
    Advisory,
    Blocking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuardConfig {
    pub cache_capacity: usize,
    pub pinned_apps: Vec<String>,
    pub intent_threshold: f64,
    pub unknown_routing: UnknownRouting,
    pub order_check: OrderCheck,
    /// Defaults to 1000 with the stub extractor and 10000 otherwise.
    pub extraction_timeout_ms: Option<u64>,
    /// `stub`, `cmd:<shell command>` or an `http(s)://` endpoint.
    pub extractor: String,
    /// Simulated latency of the stub extractor.
    pub stub_delay_ms: u64,
    pub event_log: Option<PathBuf>,
    /// JSON file of system context values keyed by acquisition descriptor.
    pub system_fixture: Option<PathBuf>,
    /// Run `system_cli` acquisition descriptors as shell commands instead of
    /// reading them from the fixture.
    pub run_cli_commands: bool,
}

impl Default for GuardConfig {
    fn default() -> Self {
        GuardConfig {
            cache_capacity: DEFAULT_CACHE_CAPACITY,
            pinned_apps: Vec::new(),
            intent_threshold: DEFAULT_THRESHOLD,
            unknown_routing: UnknownRouting::Block,
            order_check: OrderCheck::Advisory,
            extraction_timeout_ms: None,
            extractor: "stub".into(),
            stub_delay_ms: 0,
            event_log: None,
            system_fixture: None,
            run_cli_commands: false,
        }
    }
}

impl GuardConfig {
    pub fn extraction_timeout(&self) -> Duration {
        let default = if self.extractor == "stub" { 1000 } else { 10_000 };
        Duration::from_millis(self.extraction_timeout_ms.unwrap_or(default))
    }
}

#[derive(Debug, Error)]
pub enum GuardError {
    #[error("no application is active in this session")]
    NoActiveApp,
    #[error("pre_action before any instruction")]
    NoInstruction,
    #[error(transparent)]
    Manager(#[from] ManagerError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("configuration: {0}")]
    Config(String),
}

/// An agent action submitted for validation.
#[derive(Debug, Clone)]
pub enum Action {
    Direct { function_id: String, params: BTreeMap<String, serde_json::Value> },
    Gui { action: GuiAction, tree: GuiTree },
}

/// Result of [`Guard::decide`].
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub decision: Decision,
    pub event_id: u64,
    pub function_id: Option<String>,
    pub intent_id: Option<String>,
}

pub struct Guard {
    manager: ContextManager,
    extractor: Arc<dyn IntentExtractor>,
    embedder: Arc<dyn Embedder>,
    events: EventLog,
    config: GuardConfig,
    next_session: AtomicU64,
}

impl Guard {
    /// Builds providers from the configuration.
    pub fn new(config: GuardConfig) -> Result<Self, GuardError> {
        let fixture = match &config.system_fixture {
            Some(p) => FixtureProvider::from_file(p).map_err(|e| GuardError::Config(format!("{}: {e}", p.display())))?,
            None => FixtureProvider::default(),
        };
        let mut acquisition = Acquisition::fixture(Arc::new(fixture));
        if config.run_cli_commands {
            acquisition.system_cli = Arc::new(CommandProvider);
        }
        let extractor: Arc<dyn IntentExtractor> = match Transport::from_descriptor(&config.extractor)
            .map_err(|e| GuardError::Config(e.to_string()))?
        {
            None => Arc::new(KeywordExtractor::with_delay(Duration::from_millis(config.stub_delay_ms))),
            Some(t) => Arc::new(RemoteExtractor::new(t)),
        };
        Self::with_providers(config, acquisition, extractor, Arc::new(HashedEmbedder::default()))
    }

    pub fn with_providers(
        config: GuardConfig,
        acquisition: Acquisition,
        extractor: Arc<dyn IntentExtractor>,
        embedder: Arc<dyn Embedder>,
    ) -> Result<Self, GuardError> {
        let manager = ContextManager::new(config.cache_capacity, &config.pinned_apps, acquisition)?;
        let events = match &config.event_log {
            Some(p) => EventLog::with_file(p).map_err(|e| GuardError::Config(format!("{}: {e}", p.display())))?,
            None => EventLog::new(),
        };
        Ok(Guard { manager, extractor, embedder, events, config, next_session: AtomicU64::new(1) })
    }

    pub fn config(&self) -> &GuardConfig {
        &self.config
    }

    pub fn manager(&self) -> &ContextManager {
        &self.manager
    }

    pub fn events(&self) -> &EventLog {
        &self.events
    }

    pub fn open_session(&self) -> Session {
        Session::new(self.next_session.fetch_add(1, Ordering::Relaxed))
    }

    pub fn register(&self, session: &mut Session, space: ContextSpace) -> Result<Activation, GuardError> {
        Ok(self.manager.register_space(session, space)?)
    }

    pub fn switch_app(&self, session: &mut Session, app_id: &str) -> bool {
        self.manager.switch_app(session, app_id)
    }

    /// Records the instruction and starts extraction in the background.
    pub fn instruction(&self, session: &mut Session, text: &str) -> Result<(), GuardError> {
        let generation = self.manager.begin_instruction(session, text)?;
        let loaded = session.active().cloned().ok_or(GuardError::NoActiveApp)?;
        let extractor = self.extractor.clone();
        let barrier = session.barrier().clone();
        let text = text.to_owned();
        std::thread::spawn(move || {
            let result = extract(&text, &loaded.catalog, extractor.as_ref());
            barrier.complete(generation, result);
        });
        Ok(())
    }

    fn log(&self, session: &Session, mut event: ValidationEvent) -> Result<u64, GuardError> {
        event.instruction = session.instruction().map(str::to_owned);
        Ok(self.events.append(event)?)
    }

    /// Validates an action: waits for extraction, maps GUI actions, refreshes
    /// hot contexts, refines the intent, checks ordering and evaluates the
    /// policy. Every call logs exactly one event.
    pub fn decide(&self, session: &mut Session, action: Action) -> Result<Verdict, GuardError> {
        let loaded = session.active().cloned().ok_or(GuardError::NoActiveApp)?;
        let app_id = loaded.space.app_id.clone();
        if session.instruction().is_none() {
            return Err(GuardError::NoInstruction);
        }
        let finish = |this: &Self, session: &Session, decision: Decision, event: Option<ValidationEvent>| {
            let mut event = event.unwrap_or_else(|| ValidationEvent::new(EventKind::Validation, session.id, &app_id, decision.clone()));
            event.decision = decision.clone();
            let function_id = event.function_id.clone();
            let intent_id = event.intent_id.clone();
            let event_id = this.log(session, event)?;
            Ok::<_, GuardError>(Verdict { decision, event_id, function_id, intent_id })
        };

        match session.barrier().wait(self.config.extraction_timeout()) {
            Ok(Some(result)) => {
                self.manager.ingest_extraction(session, result);
            }
            Ok(None) => {}
            Err(_) => {
                let d = Decision::blocked(
                    BlockReason::ExtractionTimeout,
                    "intent extraction did not finish in time; retry the action",
                );
                return finish(self, session, d, None);
            }
        }

        let (function_id, params) = match action {
            Action::Direct { function_id, params } => (Some(function_id), params),
            Action::Gui { action, tree } => {
                let target = locate(&tree, i64::from(action.x), i64::from(action.y))
                    .and_then(|node| match map_to_function(&loaded.space, node) {
                        Ok(f) => f,
                        Err(e) => {
                            log::warn!("gui mapping: {e}");
                            None
                        }
                    })
                    .map(|f| f.function_id.clone());
                (target, action.params())
            }
        };
        let mut event = ValidationEvent::new(EventKind::Validation, session.id, &app_id, Decision::allow());
        event.function_id = function_id.clone();
        let Some(entry) = function_id.as_deref().and_then(|f| loaded.space.function(f)) else {
            return finish(self, session, Decision::Miss { kind: MissKind::UnknownFunction }, Some(event));
        };

        self.manager.set_action_params(session, &params);
        self.manager.refresh(session, UpdateTrigger::PreValidation);

        let refined = if entry.sec_level == SecurityLevel::Conditional {
            let extraction = session.extraction().cloned().unwrap_or_default();
            if extraction.degraded {
                if entry.fallback_intent().is_some() {
                    Refined::Fallback
                } else {
                    Refined::Unrelated
                }
            } else {
                let raw = extraction.selections.get(&entry.function_id).cloned().unwrap_or_default();
                refine(
                    &entry.function_id,
                    &raw,
                    session.instruction().unwrap_or_default(),
                    &loaded.catalog,
                    self.embedder.as_ref(),
                    self.config.intent_threshold,
                )
            }
        } else {
            Refined::Unrelated
        };
        event.intent_id = match &refined {
            Refined::Intent(i) => Some(i.clone()),
            Refined::Fallback => entry.fallback_intent().map(|i| i.intent_id.clone()),
            Refined::Unrelated => None,
        };

        let mut warnings = Vec::new();
        if let Some(extraction) = session.extraction() {
            if let Err(v) = check_order(&extraction.predicted_sequence, &session.executed(), &entry.function_id) {
                let note = format!("complete {} before {}", v.missing.join(", "), v.function);
                if self.config.order_check == OrderCheck::Blocking {
                    return finish(self, session, Decision::blocked(BlockReason::OrderViolation, note), Some(event));
                }
                warnings.push(format!("order: {note}"));
            }
        }

        let decision = match retrieve(&loaded.space, &entry.function_id, &refined) {
            Err(kind) => Decision::Miss { kind },
            Ok((entry, policy)) => {
                let cv = session.vector().expect("active vector");
                match policy {
                    Some(p) if entry.sec_level == SecurityLevel::Conditional => {
                        let outcomes = rule_outcomes(p, cv);
                        for (rule, outcome) in p.rules.iter().zip(&outcomes) {
                            event.rule_outcomes.push(RuleOutcome {
                                ctx_id: rule.ctx_id.clone(),
                                constraint: rule.constraint.clone(),
                                outcome: outcome.as_str().to_owned(),
                            });
                            let mut refs = vec![rule.ctx_id.clone()];
                            if let Ok(ast) = parse_constraint(&rule.constraint) {
                                refs.extend(ast.context_refs().into_iter().map(str::to_owned));
                            }
                            for r in refs {
                                let v = cv.get(&r).map_or(serde_json::Value::Null, |v| v.to_json());
                                event.context_values.insert(r, v);
                            }
                        }
                        decide_outcomes(p, &outcomes, self.config.unknown_routing)
                    }
                    _ => validate(entry, policy, cv, self.config.unknown_routing),
                }
            }
        };
        let decision = match decision {
            Decision::Allow { warnings: mut w } => {
                w.extend(warnings);
                Decision::Allow { warnings: w }
            }
            other => other,
        };
        finish(self, session, decision, Some(event))
    }

    /// Records an executed action.
    pub fn post_action(
        &self,
        session: &mut Session,
        function_id: &str,
        params: BTreeMap<String, serde_json::Value>,
        outcome: &str,
    ) -> Result<(), GuardError> {
        if session.active().is_none() {
            return Err(GuardError::NoActiveApp);
        }
        self.manager.record_action(session, function_id, params, outcome);
        Ok(())
    }

    pub fn confirm(&self, session: &Session, event_id: u64, user_allowed: bool) -> Result<(u64, Decision), GuardError> {
        Ok(self.events.on_confirm(session.id, event_id, user_allowed)?)
    }

    /// Logs a user-reported anomaly, optionally about a prior event.
    pub fn report(
        &self,
        session: &Session,
        ref_event: Option<u64>,
        function_id: Option<String>,
        note: &str,
    ) -> Result<u64, GuardError> {
        let original = match ref_event {
            Some(id) => Some(self.events.get(id).ok_or(EventError::UnknownEvent(id))?),
            None => None,
        };
        let app_id = original
            .as_ref()
            .map(|e| e.app_id.clone())
            .or_else(|| session.active_app().map(str::to_owned))
            .unwrap_or_default();
        let decision = original.as_ref().map_or_else(Decision::allow, |e| e.decision.clone());
        let mut event = ValidationEvent::new(EventKind::Report, session.id, app_id, decision);
        event.function_id = function_id.or_else(|| original.as_ref().and_then(|e| e.function_id.clone()));
        event.intent_id = original.as_ref().and_then(|e| e.intent_id.clone());
        event.ref_event = ref_event;
        event.note = Some(note.to_owned());
        self.log(session, event)
    }
}
