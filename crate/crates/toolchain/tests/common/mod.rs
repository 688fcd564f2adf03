#![allow(dead_code)]

use std::path::PathBuf;

use ctxguard_core::model::{lint_space, serialize_space, ContextSpace, Severity};
use ctxguard_toolchain::inputs::{load_changelog, load_docs, load_manifest};
use ctxguard_toolchain::{assemble_space, ChangeLog, FunctionDoc, GenConfig, HandlerManifest, SpaceInput, StubProvider};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn docs(name: &str) -> Vec<FunctionDoc> {
    load_docs(&fixture(&format!("docs/{name}.json"))).unwrap()
}

pub fn manifest() -> HandlerManifest {
    load_manifest(&fixture("manifest/mail_manifest.json")).unwrap()
}

pub fn changelog(name: &str) -> ChangeLog {
    load_changelog(&fixture(&format!("changelog/{name}.json"))).unwrap()
}

pub fn strict_stub() -> StubProvider {
    StubProvider { strict: true, ..StubProvider::bundled() }
}

pub fn mail_space() -> ContextSpace {
    assemble_space("com.example.mail", &[SpaceInput::Docs(docs("mail_docs"))], &strict_stub(), &GenConfig::default()).unwrap()
}

pub fn lint_errors(space: &ContextSpace) -> Vec<String> {
    lint_space(space).into_iter().filter(|f| f.severity == Severity::Error).map(|f| f.to_string()).collect()
}

pub fn canonical(space: &ContextSpace) -> serde_json::Value {
    serde_json::from_slice(&serialize_space(space)).unwrap()
}
