//! GUI handler discovery and call-graph enrichment.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::json;

use crate::generate::GenConfig;
use crate::inputs::{HandlerEntry, HandlerManifest};
use crate::provider::{ask, ReasoningProvider, ReasoningRequest, Stage};
use crate::ToolchainError;

/// Case-insensitive substrings that mark a file as possibly wiring GUI events.
pub const GUI_MARKERS: &[&str] = &["onclick", "onlongclick", "addeventlistener", "ontouch"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub path: String,
    pub content: String,
}

pub fn has_gui_marker(content: &str) -> bool {
    let lower = content.to_lowercase();
    GUI_MARKERS.iter().any(|m| lower.contains(m))
}

/// Reads every regular file under `root`, sorted by path.
pub fn read_sources(root: &Path) -> Result<Vec<SourceFile>, ToolchainError> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else {
                out.push(path);
            }
        }
        Ok(())
    }
    let io = |e: std::io::Error| ToolchainError::Io(format!("{}: {e}", root.display()));
    let mut paths = Vec::new();
    walk(root, &mut paths).map_err(io)?;
    paths.sort();
    paths
        .into_iter()
        .filter_map(|p| {
            let rel = p.strip_prefix(root).unwrap_or(&p).display().to_string();
            // skip binaries
            std::fs::read_to_string(&p).ok().map(|content| SourceFile { path: rel, content })
        })
        .map(Ok)
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HandlersOut {
    handlers: Vec<HandlerEntry>,
}

/// Asks the provider for the handlers in every file that carries a GUI
/// marker. Files without markers are never sent.
pub fn identify_handlers(
    files: &[SourceFile],
    package: &str,
    provider: &dyn ReasoningProvider,
    cfg: &GenConfig,
) -> Result<HandlerManifest, ToolchainError> {
    let mut manifest = HandlerManifest::default();
    for file in files.iter().filter(|f| has_gui_marker(&f.content)) {
        let inputs = json!({"file": file.path, "package": package, "content": file.content});
        let check = |out: &HandlersOut| HandlerManifest { entries: out.handlers.clone() }.validate().map_err(|e| e.to_string());
        let out: HandlersOut = ask(provider, ReasoningRequest::new(Stage::Handlers, &file.path, inputs), cfg.retries, check)?;
        manifest.entries.extend(out.handlers);
    }
    Ok(manifest)
}

pub trait CallGraphProvider {
    /// Direct callees of `handler`, or `None` when the graph does not know it.
    fn direct_callees(&self, handler: &str) -> Result<Option<Vec<String>>, String>;
}

/// Call graph read from a JSON list of `[caller, callee]` pairs.
#[derive(Debug, Clone, Default)]
pub struct EdgesFile {
    edges: BTreeMap<String, Vec<String>>,
}

impl EdgesFile {
    pub fn new(pairs: &[(String, String)]) -> Self {
        let mut edges: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (caller, callee) in pairs {
            edges.entry(caller.clone()).or_default().push(callee.clone());
        }
        EdgesFile { edges }
    }

    pub fn load(path: &Path) -> Result<Self, ToolchainError> {
        let pairs: Vec<(String, String)> = crate::inputs::read_json(path)?;
        Ok(EdgesFile::new(&pairs))
    }
}

impl CallGraphProvider for EdgesFile {
    fn direct_callees(&self, handler: &str) -> Result<Option<Vec<String>>, String> {
        Ok(self.edges.get(handler).cloned())
    }
}

/// Everything reachable from `root`, excluding `root`, sorted.
pub fn reachable(graph: &dyn CallGraphProvider, root: &str) -> Result<Option<Vec<String>>, String> {
    let Some(first) = graph.direct_callees(root)? else { return Ok(None) };
    let mut seen = BTreeSet::from([root.to_owned()]);
    let mut queue: VecDeque<String> = first.into_iter().collect();
    while let Some(next) = queue.pop_front() {
        if seen.insert(next.clone()) {
            queue.extend(graph.direct_callees(&next)?.unwrap_or_default());
        }
    }
    seen.remove(root);
    Ok(Some(seen.into_iter().collect()))
}

/// Fills each entry's callee list with the handlers' transitive callees.
/// Returns the manifest and a warning per handler missing from the graph.
pub fn attach_call_graphs(
    manifest: &HandlerManifest,
    graph: &dyn CallGraphProvider,
) -> Result<(HandlerManifest, Vec<String>), ToolchainError> {
    if manifest.entries.is_empty() {
        return Err(ToolchainError::Input("manifest has no entries".into()));
    }
    let mut out = manifest.clone();
    let mut warnings = Vec::new();
    for entry in &mut out.entries {
        match reachable(graph, &entry.handler).map_err(ToolchainError::Graph)? {
            Some(callees) => entry.callees = callees,
            None => {
                entry.callees.clear();
                warnings.push(format!("no call-graph edges for `{}`", entry.handler));
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((out, warnings))
}
