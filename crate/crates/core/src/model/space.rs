use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::value::ContextType;

/// Risk class of a function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecurityLevel {
    Normal,
    Conditional,
    Dangerous,
}

/// Where a context value is acquired at runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextSource {
    UserRequest,
    SystemApi,
    SystemCli,
    FuncParams,
    AgentHistory,
}

/// Update frequency class of a context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temperature {
    Cold,
    Warm,
    Hot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextMetadata {
    #[serde(rename = "type")]
    pub ty: ContextType,
    pub src: ContextSource,
    pub tempr: Temperature,
    /// Provider-specific descriptor: a shell command, a fixture key, a
    /// parameter name or an extraction cue, depending on `src`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acquisition: Option<String>,
}

impl ContextMetadata {
    pub fn new(ty: ContextType, src: ContextSource, tempr: Temperature) -> Self {
        ContextMetadata { ty, src, tempr, acquisition: None }
    }

    pub fn with_acquisition(mut self, descriptor: impl Into<String>) -> Self {
        self.acquisition = Some(descriptor.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub ctx_id: String,
    pub constraint: String,
    pub guidance: String,
}

/// Conjunction of rules guarding one (function, intent) pair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentEntry {
    pub intent_id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_fallback: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub param_contexts: Vec<String>,
}

impl IntentEntry {
    pub fn new(intent_id: impl Into<String>, description: impl Into<String>) -> Self {
        IntentEntry {
            intent_id: intent_id.into(),
            description: description.into(),
            is_fallback: false,
            param_contexts: Vec::new(),
        }
    }

    pub fn fallback(intent_id: impl Into<String>) -> Self {
        IntentEntry {
            intent_id: intent_id.into(),
            description: String::new(),
            is_fallback: true,
            param_contexts: Vec::new(),
        }
    }
}

/// Identifies the GUI element that triggers a function. Empty `package` or
/// `class` act as wildcards.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuiBinding {
    #[serde(default)]
    pub package: String,
    #[serde(default)]
    pub class: String,
    pub resource_id: String,
}

impl GuiBinding {
    pub fn new(
        package: impl Into<String>,
        class: impl Into<String>,
        resource_id: impl Into<String>,
    ) -> Self {
        GuiBinding { package: package.into(), class: class.into(), resource_id: resource_id.into() }
    }

    /// Specificity of this binding against a concrete element, or `None` when
    /// it does not match. Class specificity outranks package specificity.
    pub fn match_rank(&self, element: &GuiBinding) -> Option<u8> {
        if self.resource_id != element.resource_id {
            return None;
        }
        let mut rank = 0;
        if !self.class.is_empty() {
            if self.class != element.class {
                return None;
            }
            rank += 2;
        }
        if !self.package.is_empty() {
            if self.package != element.package {
                return None;
            }
            rank += 1;
        }
        Some(rank)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionEntry {
    pub function_id: String,
    #[serde(default)]
    pub desc: String,
    pub sec_level: SecurityLevel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub intents: Vec<IntentEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub policies: BTreeMap<String, Policy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gui_binding: Option<GuiBinding>,
}

impl FunctionEntry {
    pub fn new(function_id: impl Into<String>, sec_level: SecurityLevel) -> Self {
        FunctionEntry {
            function_id: function_id.into(),
            desc: String::new(),
            sec_level,
            intents: Vec::new(),
            policies: BTreeMap::new(),
            gui_binding: None,
        }
    }

    pub fn intent(&self, intent_id: &str) -> Option<&IntentEntry> {
        self.intents.iter().find(|i| i.intent_id == intent_id)
    }

    pub fn fallback_intent(&self) -> Option<&IntentEntry> {
        self.intents.iter().find(|i| i.is_fallback)
    }

    /// Context ids referenced by this entry's rules and parameter lists
    /// (constraint right-hand sides excluded).
    pub fn direct_context_refs(&self) -> BTreeSet<&str> {
        let mut refs: BTreeSet<&str> = self
            .policies
            .values()
            .flat_map(|p| p.rules.iter().map(|r| r.ctx_id.as_str()))
            .collect();
        for intent in &self.intents {
            refs.extend(intent.param_contexts.iter().map(String::as_str));
        }
        refs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassEntry {
    pub class_id: String,
    pub functions: Vec<FunctionEntry>,
}

/// Per-application policy container.
///
/// Exactly one of `classes` and `functions` is populated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpace {
    pub app_id: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<ClassEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functions: Option<Vec<FunctionEntry>>,
    #[serde(default)]
    pub contexts: BTreeMap<String, ContextMetadata>,
}

impl ContextSpace {
    /// A flat (class-less) space with no functions or contexts.
    pub fn new(app_id: impl Into<String>, version: impl Into<String>) -> Self {
        ContextSpace {
            app_id: app_id.into(),
            version: version.into(),
            classes: None,
            functions: Some(Vec::new()),
            contexts: BTreeMap::new(),
        }
    }

    /// Every function entry with its class id, in document order.
    pub fn iter_functions(&self) -> impl Iterator<Item = (Option<&str>, &FunctionEntry)> {
        let classed = self.classes.iter().flatten().flat_map(|c| {
            c.functions.iter().map(move |f| (Some(c.class_id.as_str()), f))
        });
        let flat = self.functions.iter().flatten().map(|f| (None, f));
        classed.chain(flat)
    }

    pub fn function_count(&self) -> usize {
        self.iter_functions().count()
    }

    pub fn function(&self, function_id: &str) -> Option<&FunctionEntry> {
        self.iter_functions().map(|(_, f)| f).find(|f| f.function_id == function_id)
    }

    pub fn functions_mut(&mut self) -> impl Iterator<Item = &mut FunctionEntry> {
        let classed = self.classes.iter_mut().flatten().flat_map(|c| c.functions.iter_mut());
        classed.chain(self.functions.iter_mut().flatten())
    }

    /// Document path prefix of a function entry, as used in lint findings.
    pub fn function_path(&self, function_id: &str) -> Option<String> {
        if let Some(classes) = &self.classes {
            for (ci, class) in classes.iter().enumerate() {
                if let Some(fi) = class.functions.iter().position(|f| f.function_id == function_id) {
                    return Some(format!("classes[{ci}].functions[{fi}]"));
                }
            }
        }
        self.functions
            .iter()
            .flatten()
            .position(|f| f.function_id == function_id)
            .map(|fi| format!("functions[{fi}]"))
    }
}
