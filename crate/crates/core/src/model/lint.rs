use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::space::{ContextSpace, FunctionEntry, GuiBinding, SecurityLevel};
use crate::dsl::{parse_constraint, typecheck};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    Structure,
    DuplicateId,
    DanglingContext,
    UnparseableConstraint,
    IllTypedConstraint,
    SubjectMismatch,
    EmptyGuidance,
    ConditionalWithoutIntents,
    OnlyFallbackIntent,
    IntentWithoutPolicy,
    PolicyForUnknownIntent,
    MissingIntentDescription,
    MultipleFallbacks,
    DuplicateGuiBinding,
    EmptyResourceId,
    DangerousWithPolicies,
    NormalWithPolicies,
    UnusedContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub kind: FindingKind,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.path, self.message)
    }
}

struct Linter<'a> {
    space: &'a ContextSpace,
    findings: Vec<Finding>,
    referenced: BTreeSet<&'a str>,
}

impl<'a> Linter<'a> {
    fn push(&mut self, severity: Severity, kind: FindingKind, path: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding { severity, kind, path: path.into(), message: message.into() });
    }

    fn error(&mut self, kind: FindingKind, path: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Error, kind, path, message);
    }

    fn warn(&mut self, kind: FindingKind, path: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Warning, kind, path, message);
    }

    fn reference(&mut self, ctx_id: &'a str, path: &str) {
        self.referenced.insert(ctx_id);
        if !self.space.contexts.contains_key(ctx_id) {
            self.error(FindingKind::DanglingContext, path, format!("undeclared context `{ctx_id}`"));
        }
    }

    fn function(&mut self, base: &str, f: &'a FunctionEntry) {
        let mut fallbacks = 0;
        for (ii, intent) in f.intents.iter().enumerate() {
            let path = format!("{base}.intents[{ii}]");
            if intent.is_fallback {
                fallbacks += 1;
                if fallbacks == 2 {
                    self.error(FindingKind::MultipleFallbacks, &path, "more than one fallback intent");
                }
            } else if intent.description.trim().is_empty() {
                self.error(
                    FindingKind::MissingIntentDescription,
                    &path,
                    format!("intent `{}` has no description", intent.intent_id),
                );
            }
            for (pi, ctx) in intent.param_contexts.iter().enumerate() {
                self.reference(ctx, &format!("{path}.param_contexts[{pi}]"));
            }
            if f.sec_level == SecurityLevel::Conditional
                && !intent.is_fallback
                && !f.policies.contains_key(&intent.intent_id)
            {
                self.error(
                    FindingKind::IntentWithoutPolicy,
                    &path,
                    format!("intent `{}` has no policy", intent.intent_id),
                );
            }
        }

        match f.sec_level {
            SecurityLevel::Conditional if f.intents.is_empty() => self.error(
                FindingKind::ConditionalWithoutIntents,
                base,
                "conditional function declares no intents",
            ),
            SecurityLevel::Conditional if f.intents.iter().all(|i| i.is_fallback) => self.warn(
                FindingKind::OnlyFallbackIntent,
                base,
                "conditional function declares only a fallback intent",
            ),
            SecurityLevel::Dangerous if !f.policies.is_empty() => self.warn(
                FindingKind::DangerousWithPolicies,
                format!("{base}.policies"),
                "policies on a dangerous function are ignored; it always requires confirmation",
            ),
            SecurityLevel::Normal if !f.policies.is_empty() => self.warn(
                FindingKind::NormalWithPolicies,
                format!("{base}.policies"),
                "policies on a normal function are ignored",
            ),
            _ => {}
        }

        for (intent_id, policy) in &f.policies {
            if f.intent(intent_id).is_none() {
                self.error(
                    FindingKind::PolicyForUnknownIntent,
                    format!("{base}.policies.{intent_id}"),
                    format!("policy for undeclared intent `{intent_id}`"),
                );
            }
            for (ri, rule) in policy.rules.iter().enumerate() {
                let path = format!("{base}.policies.{intent_id}.rules[{ri}]");
                self.reference(&rule.ctx_id, &format!("{path}.ctx_id"));
                if rule.guidance.trim().is_empty() {
                    self.error(FindingKind::EmptyGuidance, format!("{path}.guidance"), "guidance is empty");
                }
                let ast = match parse_constraint(&rule.constraint) {
                    Ok(ast) => ast,
                    Err(e) => {
                        self.error(
                            FindingKind::UnparseableConstraint,
                            format!("{path}.constraint"),
                            format!("`{}`: {e}", rule.constraint),
                        );
                        continue;
                    }
                };
                if ast.subject != rule.ctx_id {
                    self.error(
                        FindingKind::SubjectMismatch,
                        format!("{path}.constraint"),
                        format!("constraint subject `{}` differs from rule context `{}`", ast.subject, rule.ctx_id),
                    );
                }
                let refs = ast.context_refs();
                let mut dangling = false;
                for r in &refs {
                    if let Some((declared, _)) = self.space.contexts.get_key_value(*r) {
                        self.referenced.insert(declared);
                    } else if *r != rule.ctx_id {
                        dangling = true;
                        self.error(
                            FindingKind::DanglingContext,
                            format!("{path}.constraint"),
                            format!("undeclared context `{r}`"),
                        );
                    }
                }
                if !dangling && self.space.contexts.contains_key(&rule.ctx_id) {
                    if let Err(e) = typecheck(&ast, &self.space.contexts) {
                        self.error(FindingKind::IllTypedConstraint, format!("{path}.constraint"), e.to_string());
                    }
                }
            }
        }

        if let Some(b) = &f.gui_binding {
            if b.resource_id.is_empty() {
                self.error(FindingKind::EmptyResourceId, format!("{base}.gui_binding.resource_id"), "resource id is empty");
            }
        }
    }
}

/// Reports every schema, reference and policy problem in `space`.
///
/// Never fails; the findings are deterministic for a given space.
pub fn lint_space(space: &ContextSpace) -> Vec<Finding> {
    let mut l = Linter { space, findings: Vec::new(), referenced: BTreeSet::new() };

    match (&space.classes, &space.functions) {
        (Some(_), Some(_)) => l.error(FindingKind::Structure, "$", "both `classes` and `functions` are present"),
        (None, None) => l.error(FindingKind::Structure, "$", "neither `classes` nor `functions` is present"),
        _ => {}
    }

    let mut seen_classes = BTreeSet::new();
    let mut seen_functions = BTreeSet::new();
    let mut bindings: BTreeMap<&GuiBinding, &str> = BTreeMap::new();

    let mut entries: Vec<(String, &FunctionEntry)> = Vec::new();
    for (ci, class) in space.classes.iter().flatten().enumerate() {
        if !seen_classes.insert(class.class_id.as_str()) {
            l.error(FindingKind::DuplicateId, format!("classes[{ci}].class_id"), format!("duplicate class id `{}`", class.class_id));
        }
        for (fi, f) in class.functions.iter().enumerate() {
            entries.push((format!("classes[{ci}].functions[{fi}]"), f));
        }
    }
    for (fi, f) in space.functions.iter().flatten().enumerate() {
        entries.push((format!("functions[{fi}]"), f));
    }

    for (base, f) in entries {
        if !seen_functions.insert(f.function_id.as_str()) {
            l.error(FindingKind::DuplicateId, format!("{base}.function_id"), format!("duplicate function id `{}`", f.function_id));
        }
        if let Some(b) = &f.gui_binding {
            if let Some(first) = bindings.get(b) {
                l.error(
                    FindingKind::DuplicateGuiBinding,
                    format!("{base}.gui_binding"),
                    format!("binding already used by `{first}`"),
                );
            } else {
                bindings.insert(b, &f.function_id);
            }
        }
        l.function(&base, f);
    }

    let unused: Vec<&String> =
        space.contexts.keys().filter(|k| !l.referenced.contains(k.as_str())).collect();
    for ctx in unused {
        l.warn(FindingKind::UnusedContext, format!("contexts.{ctx}"), "context is declared but never referenced");
    }
    l.findings
}
