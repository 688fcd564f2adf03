//! Development-time tooling for context spaces.
//!
//! Spaces are generated in stages (classify, predict intents, generate
//! policies) through a [`provider::ReasoningProvider`], from function docs or
//! from GUI handler manifests. Existing spaces evolve from app changelogs, and
//! runtime event logs are mined for policy suggestions.

pub mod diff;
pub mod evolve;
pub mod feedback;
pub mod generate;
pub mod handlers;
mod heuristic;
pub mod inputs;
pub mod provider;

pub use diff::diff_paths;
pub use evolve::{bump_version, evolve_from_changelog};
pub use feedback::{analyze_logs, annotate, AnalysisConfig, Suggestion, SuggestionKind};
pub use generate::{assemble_space, classify, generate_function, generate_policy, predict_intents, GenConfig};
pub use handlers::{attach_call_graphs, identify_handlers, CallGraphProvider, EdgesFile, SourceFile};
pub use inputs::{ChangeLog, FunctionDoc, HandlerEntry, HandlerManifest, ParamDoc, SpaceInput};
pub use provider::{ReasoningProvider, ReasoningRequest, RemoteProvider, Stage, StubProvider};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToolchainError {
    #[error(transparent)]
    Provider(#[from] provider::Exhausted),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
    #[error("generated space fails lint after {passes} regeneration pass(es): {}", .problems.join("; "))]
    Lint { passes: usize, problems: Vec<String> },
    #[error("function `{0}` is not in the space")]
    UnknownFunction(String),
    #[error("function `{0}` already exists")]
    DuplicateFunction(String),
    #[error("call graph: {0}")]
    Graph(String),
}
