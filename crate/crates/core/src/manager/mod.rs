//! Sessions, the space cache, context vectors and temperature-driven refresh.

mod acquire;
mod cache;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intent::{ExtractionResult, IntentCatalog};
use crate::model::{
    init_vector, lint_space, ContextEntry, ContextSource, ContextSpace, ContextVector, Finding,
    Severity, Temperature, UpdateTrigger,
};
use crate::value::{ContextType, Value};

pub use acquire::{Acquisition, AcquisitionProvider, CommandProvider, FixtureProvider};
pub use cache::{CacheError, SpaceCache};

pub const DEFAULT_CACHE_CAPACITY: usize = 8;

/// A space admitted to the cache along with its derived intent catalog.
#[derive(Debug)]
pub struct LoadedSpace {
    pub space: ContextSpace,
    pub catalog: IntentCatalog,
}

impl LoadedSpace {
    pub fn new(space: ContextSpace) -> Self {
        let catalog = IntentCatalog::from_space(&space);
        LoadedSpace { space, catalog }
    }
}

#[derive(Debug, Default)]
struct BarrierState {
    generation: u64,
    pending: bool,
    result: Option<ExtractionResult>,
}

/// Synchronization point between instruction extraction and validation.
///
/// Each instruction starts a new generation; completions from an older
/// generation are discarded, so the latest instruction wins.
#[derive(Debug, Clone, Default)]
pub struct ExtractionBarrier {
    inner: Arc<(Mutex<BarrierState>, Condvar)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("extraction did not complete within the timeout")]
pub struct BarrierTimeout;

impl ExtractionBarrier {
    pub fn begin(&self) -> u64 {
        let mut st = self.inner.0.lock().expect("barrier lock");
        st.generation += 1;
        st.pending = true;
        st.result = None;
        st.generation
    }

    /// Publishes a result; returns false if `generation` was superseded.
    pub fn complete(&self, generation: u64, result: ExtractionResult) -> bool {
        let (lock, cv) = &*self.inner;
        let mut st = lock.lock().expect("barrier lock");
        if st.generation != generation {
            return false;
        }
        st.pending = false;
        st.result = Some(result);
        cv.notify_all();
        true
    }

    pub fn is_pending(&self) -> bool {
        self.inner.0.lock().expect("barrier lock").pending
    }

    pub fn generation(&self) -> u64 {
        self.inner.0.lock().expect("barrier lock").generation
    }

    /// Waits for the current generation. Returns the result the first time
    /// it is collected and `None` afterwards.
    pub fn wait(&self, timeout: Duration) -> Result<Option<ExtractionResult>, BarrierTimeout> {
        let (lock, cv) = &*self.inner;
        let deadline = Instant::now() + timeout;
        let mut st = lock.lock().expect("barrier lock");
        while st.pending {
            let now = Instant::now();
            if now >= deadline {
                return Err(BarrierTimeout);
            }
            st = cv.wait_timeout(st, deadline - now).expect("barrier lock").0;
        }
        Ok(st.result.take())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub function_id: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub outcome: String,
}

/// Per-connection runtime state. Mutated by one thread at a time.
#[derive(Debug)]
pub struct Session {
    pub id: u64,
    active: Option<Arc<LoadedSpace>>,
    vectors: HashMap<String, ContextVector>,
    pub(crate) instruction: Option<String>,
    pub(crate) barrier: ExtractionBarrier,
    pub(crate) extraction: Option<ExtractionResult>,
    pub(crate) pending_params: BTreeMap<String, serde_json::Value>,
    pub(crate) history: Vec<HistoryRecord>,
    pub(crate) warnings: Vec<String>,
}

impl Session {
    pub fn new(id: u64) -> Self {
        Session {
            id,
            active: None,
            vectors: HashMap::new(),
            instruction: None,
            barrier: ExtractionBarrier::default(),
            extraction: None,
            pending_params: BTreeMap::new(),
            history: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn active(&self) -> Option<&Arc<LoadedSpace>> {
        self.active.as_ref()
    }

    pub fn active_app(&self) -> Option<&str> {
        self.active.as_ref().map(|l| l.space.app_id.as_str())
    }

    /// Vector of the active space.
    pub fn vector(&self) -> Option<&ContextVector> {
        self.vector_for(self.active_app()?)
    }

    fn vector_for(&self, app_id: &str) -> Option<&ContextVector> {
        self.vectors.get(app_id)
    }

    fn vector_mut(&mut self) -> Option<&mut ContextVector> {
        let app = self.active.as_ref()?.space.app_id.clone();
        self.vectors.get_mut(&app)
    }

    pub fn instruction(&self) -> Option<&str> {
        self.instruction.as_deref()
    }

    pub fn barrier(&self) -> &ExtractionBarrier {
        &self.barrier
    }

    /// Latest ingested extraction.
    pub fn extraction(&self) -> Option<&ExtractionResult> {
        self.extraction.as_ref()
    }

    pub fn history(&self) -> &[HistoryRecord] {
        &self.history
    }

    pub fn executed(&self) -> Vec<String> {
        self.history.iter().map(|h| h.function_id.clone()).collect()
    }

    /// Warnings accumulated by ingestion and refresh.
    pub fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }
}

#[derive(Debug, Error)]
pub enum ManagerError {
    #[error("space `{app_id}` failed lint with {} error(s); first: {}", .findings.len(), .findings.first().map(|f| f.to_string()).unwrap_or_default())]
    Lint { app_id: String, findings: Vec<Finding> },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("no application is active in this session")]
    NoActiveApp,
}

/// Whether activation loaded a new space or reused a cached one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Loaded,
    Cached,
}

/// Owns the shared space cache and the acquisition providers.
pub struct ContextManager {
    cache: Mutex<SpaceCache<LoadedSpace>>,
    acquisition: Acquisition,
}

impl ContextManager {
    pub fn new(capacity: usize, pinned: &[String], acquisition: Acquisition) -> Result<Self, CacheError> {
        let mut cache = SpaceCache::new(capacity)?;
        for app in pinned {
            cache.pin(app.clone());
        }
        Ok(ContextManager { cache: Mutex::new(cache), acquisition })
    }

    pub fn acquisition(&self) -> &Acquisition {
        &self.acquisition
    }

    /// Runs `f` with exclusive access to the cache.
    pub fn with_cache<R>(&self, f: impl FnOnce(&mut SpaceCache<LoadedSpace>) -> R) -> R {
        f(&mut self.cache.lock().expect("cache lock"))
    }

    /// Admits `space` (unless an identical version is cached), activates it
    /// and refreshes every context once.
    pub fn register_space(&self, session: &mut Session, space: ContextSpace) -> Result<Activation, ManagerError> {
        let app_id = space.app_id.clone();
        {
            let mut cache = self.cache.lock().expect("cache lock");
            if let Some(hit) = cache.get(&app_id) {
                if hit.space.version == space.version {
                    drop(cache);
                    self.activate(session, hit);
                    return Ok(Activation::Cached);
                }
            }
        }
        let errors: Vec<Finding> =
            lint_space(&space).into_iter().filter(|f| f.severity == Severity::Error).collect();
        if !errors.is_empty() {
            return Err(ManagerError::Lint { app_id, findings: errors });
        }
        let loaded = Arc::new(LoadedSpace::new(space));
        self.cache.lock().expect("cache lock").insert(&app_id, loaded.clone())?;
        session.vectors.remove(&app_id);
        self.activate(session, loaded);
        Ok(Activation::Loaded)
    }

    /// Activates a cached space without loading. Returns false on a miss.
    pub fn switch_app(&self, session: &mut Session, app_id: &str) -> bool {
        let hit = self.cache.lock().expect("cache lock").get(app_id);
        match hit {
            Some(loaded) => {
                self.activate(session, loaded);
                true
            }
            None => false,
        }
    }

    fn activate(&self, session: &mut Session, loaded: Arc<LoadedSpace>) {
        let app_id = loaded.space.app_id.clone();
        let reuse = session
            .vectors
            .get(&app_id)
            .is_some_and(|v| v.keys().eq(loaded.space.contexts.keys().map(String::as_str)));
        session.active = Some(loaded.clone());
        if reuse {
            self.refresh_matching(session, UpdateTrigger::Load, |t| t == Temperature::Cold);
        } else {
            session.vectors.insert(app_id, init_vector(&loaded.space));
            self.refresh(session, UpdateTrigger::Load);
        }
    }

    /// Re-acquires exactly the contexts whose temperature the trigger covers.
    /// Returns the number of contexts refreshed.
    pub fn refresh(&self, session: &mut Session, trigger: UpdateTrigger) -> usize {
        self.refresh_matching(session, trigger, |t| trigger.refreshes(t))
    }

    fn refresh_matching(
        &self,
        session: &mut Session,
        trigger: UpdateTrigger,
        matches: impl Fn(Temperature) -> bool,
    ) -> usize {
        let Some(vector) = session.vector() else {
            return 0;
        };
        let targets: Vec<ContextEntry> =
            vector.entries().filter(|e| matches(e.metadata.tempr)).cloned().collect();
        let mut warnings = Vec::new();
        let resolved: Vec<(String, Option<Value>)> = targets
            .iter()
            .map(|e| {
                let raw = self.resolve(session, e);
                let value = raw.and_then(|v| {
                    let actual = v.type_of();
                    let coerced = v.coerce(e.metadata.ty);
                    if coerced.is_none() {
                        warnings.push(format!("context `{}`: acquired {actual}, expected {}", e.ctx_id, e.metadata.ty));
                    }
                    coerced
                });
                (e.ctx_id.clone(), value)
            })
            .collect();
        let vector = session.vector_mut().expect("active vector");
        for (ctx_id, value) in &resolved {
            let entry = vector.entry_mut(ctx_id).expect("key set is fixed");
            entry.value = value.clone();
            entry.update_count += 1;
            entry.last_trigger = Some(trigger);
        }
        session.warnings.extend(warnings);
        resolved.len()
    }

    fn resolve(&self, session: &Session, entry: &ContextEntry) -> Option<Value> {
        let meta = &entry.metadata;
        match meta.src {
            ContextSource::SystemApi | ContextSource::SystemCli => self
                .acquisition
                .provider(meta.src)
                .and_then(|p| p.resolve(&entry.ctx_id, meta)),
            ContextSource::UserRequest => session.extraction.as_ref()?.param_values.get(&entry.ctx_id).cloned(),
            ContextSource::FuncParams => {
                let key = meta.acquisition.as_deref().unwrap_or(&entry.ctx_id);
                Value::from_json(session.pending_params.get(key)?)
            }
            ContextSource::AgentHistory => history_value(&session.history, meta.ty, meta.acquisition.as_deref()),
        }
    }

    /// Starts a new instruction: records it, invalidates the previous
    /// extraction and refreshes warm contexts. Returns the barrier generation
    /// the extraction result must be published under.
    pub fn begin_instruction(&self, session: &mut Session, text: &str) -> Result<u64, ManagerError> {
        if session.active.is_none() {
            return Err(ManagerError::NoActiveApp);
        }
        session.instruction = Some(text.to_owned());
        session.extraction = None;
        let generation = session.barrier.begin();
        self.refresh(session, UpdateTrigger::Instruction);
        Ok(generation)
    }

    /// Writes extracted parameter values into the vector (user-request
    /// contexts only) and stores the selections.
    pub fn ingest_extraction(&self, session: &mut Session, result: ExtractionResult) -> Vec<String> {
        let mut warnings = result.warnings.clone();
        let mut accepted = BTreeMap::new();
        if let Some(vector) = session.vector_mut() {
            for (ctx_id, value) in &result.param_values {
                match vector.entry(ctx_id).map(|e| e.metadata.src) {
                    Some(ContextSource::UserRequest) => match vector.set(ctx_id, value.clone()) {
                        Ok(()) => {
                            accepted.insert(ctx_id.clone(), vector.get(ctx_id).cloned().expect("just set"));
                        }
                        Err(e) => warnings.push(format!("dropped extracted value: {e}")),
                    },
                    Some(src) => warnings.push(format!(
                        "rejected extracted value for `{ctx_id}`: source is {}",
                        serde_json::to_string(&src).unwrap_or_default().trim_matches('"')
                    )),
                    None => warnings.push(format!("rejected extracted value for undeclared `{ctx_id}`")),
                }
            }
        }
        session.extraction = Some(ExtractionResult { param_values: accepted, ..result });
        session.warnings.extend(warnings.iter().cloned());
        warnings
    }

    /// Records the parameters of the action about to be validated and writes
    /// them into declared function-parameter contexts.
    pub fn set_action_params(&self, session: &mut Session, params: &BTreeMap<String, serde_json::Value>) {
        session.pending_params = params.clone();
        self.write_func_params(session);
    }

    fn write_func_params(&self, session: &mut Session) {
        let params = session.pending_params.clone();
        let Some(vector) = session.vector_mut() else {
            return;
        };
        let targets: Vec<(String, String)> = vector
            .entries()
            .filter(|e| e.metadata.src == ContextSource::FuncParams)
            .map(|e| (e.ctx_id.clone(), e.metadata.acquisition.clone().unwrap_or_else(|| e.ctx_id.clone())))
            .collect();
        let mut warnings = Vec::new();
        for (ctx_id, key) in targets {
            let value = params.get(&key).and_then(Value::from_json);
            let result = match value {
                Some(v) => vector.set(&ctx_id, v),
                None => vector.unset(&ctx_id),
            };
            if let Err(e) = result {
                warnings.push(format!("action parameter ignored: {e}"));
                let _ = vector.unset(&ctx_id);
            }
        }
        session.warnings.extend(warnings);
    }

    /// Appends a completed action to the history and updates parameter and
    /// history contexts.
    pub fn record_action(
        &self,
        session: &mut Session,
        function_id: &str,
        params: BTreeMap<String, serde_json::Value>,
        outcome: &str,
    ) {
        session.pending_params = params.clone();
        self.write_func_params(session);
        session.history.push(HistoryRecord { function_id: function_id.to_owned(), params, outcome: outcome.to_owned() });
        let history = session.history.clone();
        if let Some(vector) = session.vector_mut() {
            let targets: Vec<(String, ContextType, Option<String>)> = vector
                .entries()
                .filter(|e| e.metadata.src == ContextSource::AgentHistory)
                .map(|e| (e.ctx_id.clone(), e.metadata.ty, e.metadata.acquisition.clone()))
                .collect();
            for (ctx_id, ty, acq) in targets {
                match history_value(&history, ty, acq.as_deref()) {
                    Some(v) => {
                        let _ = vector.set(&ctx_id, v);
                    }
                    None => {
                        let _ = vector.unset(&ctx_id);
                    }
                }
            }
        }
    }
}

/// Derives an agent-history context. Descriptors: `functions` (ids executed,
/// the string-list default), `count` (integer default), `last` (string
/// default), `executed:<function_id>` (boolean).
fn history_value(history: &[HistoryRecord], ty: ContextType, descriptor: Option<&str>) -> Option<Value> {
    let descriptor = descriptor.unwrap_or(match ty {
        ContextType::StringList => "functions",
        ContextType::Integer | ContextType::Float => "count",
        ContextType::Boolean => "",
        ContextType::String => "last",
    });
    let value = match descriptor.split_once(':') {
        Some(("executed", f)) => Value::Bool(history.iter().any(|h| h.function_id == f)),
        _ => match descriptor {
            "functions" => Value::List(history.iter().map(|h| h.function_id.clone()).collect()),
            "count" => Value::Int(history.len() as i64),
            "last" => Value::Str(history.last()?.function_id.clone()),
            _ => return None,
        },
    };
    value.coerce(ty)
}
