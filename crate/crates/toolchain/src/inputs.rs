use std::collections::BTreeSet;
use std::path::Path;

use ctxguard_core::model::GuiBinding;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ToolchainError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDoc {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    #[serde(default)]
    pub description: String,
}

/// Developer documentation for one callable function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionDoc {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub parameters: Vec<ParamDoc>,
    /// Target class when added to a class-structured space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<String>,
}

impl FunctionDoc {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        FunctionDoc { name: name.into(), description: description.into(), parameters: Vec::new(), class_id: None }
    }
}

/// GUI element binding as written in manifests. `*` marks a wildcard
/// package or class; empty strings are rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestBinding {
    pub package: String,
    pub class: String,
    pub resource_id: String,
}

pub const WILDCARD: &str = "*";

impl ManifestBinding {
    pub fn to_binding(&self) -> GuiBinding {
        let field = |s: &str| if s == WILDCARD { String::new() } else { s.to_owned() };
        GuiBinding::new(field(&self.package), field(&self.class), self.resource_id.clone())
    }

    fn check(&self) -> Result<(), String> {
        if self.resource_id.is_empty() || self.resource_id == WILDCARD {
            return Err("resource_id must name a concrete element".into());
        }
        if self.package.is_empty() || self.class.is_empty() {
            return Err(format!("package and class must be non-empty or `{WILDCARD}`"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandlerEntry {
    pub binding: ManifestBinding,
    /// Qualified handler name, e.g. `ComposeActivity.onSendClicked`.
    pub handler: String,
    pub function_id: String,
    pub description: String,
    #[serde(default)]
    pub excerpt: String,
    #[serde(default)]
    pub callees: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandlerManifest {
    pub entries: Vec<HandlerEntry>,
}

impl HandlerManifest {
    pub fn validate(&self) -> Result<(), ToolchainError> {
        for (i, e) in self.entries.iter().enumerate() {
            e.binding.check().map_err(|m| ToolchainError::Input(format!("entries[{i}].binding: {m}")))?;
            if e.function_id.is_empty() {
                return Err(ToolchainError::Input(format!("entries[{i}].function_id is empty")));
            }
        }
        Ok(())
    }

    /// Docs handed to the generation stages; callees are appended to the
    /// description so providers see what the handler reaches.
    pub fn to_docs(&self) -> Vec<(FunctionDoc, GuiBinding)> {
        self.entries
            .iter()
            .map(|e| {
                let mut description = e.description.clone();
                if !e.callees.is_empty() {
                    description.push_str(&format!(" (calls {})", e.callees.join(", ")));
                }
                (FunctionDoc::new(&e.function_id, description), e.binding.to_binding())
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeLog {
    #[serde(default)]
    pub added: Vec<FunctionDoc>,
    #[serde(default)]
    pub modified: Vec<FunctionDoc>,
    #[serde(default)]
    pub removed: Vec<String>,
}

impl ChangeLog {
    /// Fails when an id appears in more than one list or twice in one list.
    pub fn check_disjoint(&self) -> Result<(), ToolchainError> {
        let mut seen = BTreeSet::new();
        let ids = self.added.iter().map(|d| &d.name).chain(self.modified.iter().map(|d| &d.name)).chain(&self.removed);
        for id in ids {
            if !seen.insert(id.as_str()) {
                return Err(ToolchainError::Input(format!("`{id}` appears more than once in the changelog")));
            }
        }
        Ok(())
    }
}

/// One unit of generation input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpaceInput {
    Docs(Vec<FunctionDoc>),
    Manifest(HandlerManifest),
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ToolchainError> {
    let text = std::fs::read_to_string(path).map_err(|e| ToolchainError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ToolchainError::Input(format!("{}: {e}", path.display())))
}

pub fn load_docs(path: &Path) -> Result<Vec<FunctionDoc>, ToolchainError> {
    read_json(path)
}

pub fn load_manifest(path: &Path) -> Result<HandlerManifest, ToolchainError> {
    let m: HandlerManifest = read_json(path)?;
    m.validate()?;
    Ok(m)
}

pub fn load_changelog(path: &Path) -> Result<ChangeLog, ToolchainError> {
    let c: ChangeLog = read_json(path)?;
    c.check_disjoint()?;
    Ok(c)
}
