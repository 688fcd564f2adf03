//! Staged context-space generation: classify, predict intents, generate one
//! policy per intent, assemble and lint.

use std::collections::{BTreeMap, BTreeSet};

use ctxguard_core::dsl::{parse_constraint, typecheck};
use ctxguard_core::model::{
    lint_space, ContextMetadata, ContextSource, ContextSpace, FunctionEntry, GuiBinding, IntentEntry, Policy, Rule,
    SecurityLevel, Severity, Temperature,
};
use ctxguard_core::ContextType;
use serde::Deserialize;
use serde_json::json;

use crate::inputs::{FunctionDoc, SpaceInput};
use crate::provider::{ask, ReasoningProvider, ReasoningRequest, Stage};
use crate::ToolchainError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenConfig {
    /// Extra attempts per stage after a schema or validation failure.
    pub retries: usize,
    /// Regeneration passes for functions implicated in lint errors.
    pub lint_passes: usize,
    pub fallback_intent: String,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { retries: 2, lint_passes: 2, fallback_intent: "other".into() }
    }
}

/// Temperature assigned when a provider does not choose one.
pub fn default_temperature(src: ContextSource) -> Temperature {
    match src {
        ContextSource::UserRequest => Temperature::Warm,
        ContextSource::FuncParams | ContextSource::AgentHistory => Temperature::Hot,
        ContextSource::SystemApi | ContextSource::SystemCli => Temperature::Cold,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyOut {
    sec_level: SecurityLevel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntentOut {
    intent_id: String,
    description: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntentsOut {
    intents: Vec<IntentOut>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextOut {
    #[serde(rename = "type")]
    ty: ContextType,
    src: ContextSource,
    #[serde(default)]
    tempr: Option<Temperature>,
    #[serde(default)]
    acquisition: Option<String>,
}

impl ContextOut {
    fn metadata(&self) -> ContextMetadata {
        ContextMetadata {
            ty: self.ty,
            src: self.src,
            tempr: self.tempr.unwrap_or_else(|| default_temperature(self.src)),
            acquisition: self.acquisition.clone(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyOut {
    rules: Vec<Rule>,
    contexts: BTreeMap<String, ContextOut>,
}

fn request(stage: Stage, subject: &str, inputs: serde_json::Value, feedback: &[String]) -> ReasoningRequest {
    let mut r = ReasoningRequest::new(stage, subject, inputs);
    r.feedback = feedback.to_vec();
    r
}

pub fn classify(doc: &FunctionDoc, provider: &dyn ReasoningProvider, cfg: &GenConfig) -> Result<SecurityLevel, ToolchainError> {
    classify_with(doc, provider, cfg, &[])
}

fn classify_with(
    doc: &FunctionDoc,
    provider: &dyn ReasoningProvider,
    cfg: &GenConfig,
    feedback: &[String],
) -> Result<SecurityLevel, ToolchainError> {
    let out: ClassifyOut = ask(provider, request(Stage::Classify, &doc.name, json!({"doc": doc}), feedback), cfg.retries, |_| Ok(()))?;
    Ok(out.sec_level)
}

/// Predicted intents for a conditional function, with the fallback intent
/// appended.
pub fn predict_intents(
    doc: &FunctionDoc,
    level: SecurityLevel,
    provider: &dyn ReasoningProvider,
    cfg: &GenConfig,
) -> Result<Vec<IntentEntry>, ToolchainError> {
    predict_with(doc, level, provider, cfg, &[])
}

fn predict_with(
    doc: &FunctionDoc,
    level: SecurityLevel,
    provider: &dyn ReasoningProvider,
    cfg: &GenConfig,
    feedback: &[String],
) -> Result<Vec<IntentEntry>, ToolchainError> {
    if level != SecurityLevel::Conditional {
        return Err(ToolchainError::Precondition(format!("`{}` is not conditional; intents apply only to conditional functions", doc.name)));
    }
    if doc.description.trim().is_empty() {
        return Err(ToolchainError::Precondition(format!("`{}` has no description to predict intents from", doc.name)));
    }
    let check = |out: &IntentsOut| {
        if out.intents.is_empty() {
            return Err("at least one intent is required".to_owned());
        }
        let mut seen = BTreeSet::new();
        for i in &out.intents {
            if i.intent_id.trim().is_empty() || i.description.trim().is_empty() {
                return Err("intent ids and descriptions must be non-empty".to_owned());
            }
            if i.intent_id == cfg.fallback_intent {
                return Err(format!("`{}` is reserved for the fallback intent", cfg.fallback_intent));
            }
            if !seen.insert(i.intent_id.as_str()) {
                return Err(format!("duplicate intent `{}`", i.intent_id));
            }
        }
        Ok(())
    };
    let out: IntentsOut = ask(provider, request(Stage::Intents, &doc.name, json!({"doc": doc}), feedback), cfg.retries, check)?;
    let mut intents: Vec<IntentEntry> = out.intents.into_iter().map(|i| IntentEntry::new(i.intent_id, i.description)).collect();
    intents.push(IntentEntry::fallback(&cfg.fallback_intent));
    Ok(intents)
}

fn check_policy(out: &PolicyOut) -> Result<(), String> {
    let table: BTreeMap<String, ContextMetadata> = out.contexts.iter().map(|(k, v)| (k.clone(), v.metadata())).collect();
    for (i, rule) in out.rules.iter().enumerate() {
        let ast = parse_constraint(&rule.constraint).map_err(|e| format!("rules[{i}]: `{}`: {e}", rule.constraint))?;
        if ast.subject != rule.ctx_id {
            return Err(format!("rules[{i}]: constraint subject `{}` differs from ctx_id `{}`", ast.subject, rule.ctx_id));
        }
        if let Some(r) = ast.context_refs().into_iter().find(|r| !table.contains_key(*r)) {
            return Err(format!("rules[{i}]: context `{r}` is not declared in `contexts`"));
        }
        typecheck(&ast, &table).map_err(|e| format!("rules[{i}]: {e}"))?;
        if rule.guidance.trim().is_empty() {
            return Err(format!("rules[{i}]: guidance is empty"));
        }
    }
    Ok(())
}

/// The policy for one (function, intent) pair with metadata for every context
/// its rules reference.
pub fn generate_policy(
    doc: &FunctionDoc,
    intent: &IntentEntry,
    provider: &dyn ReasoningProvider,
    cfg: &GenConfig,
) -> Result<(Policy, BTreeMap<String, ContextMetadata>), ToolchainError> {
    policy_with(doc, intent, provider, cfg, &[])
}

fn policy_with(
    doc: &FunctionDoc,
    intent: &IntentEntry,
    provider: &dyn ReasoningProvider,
    cfg: &GenConfig,
    feedback: &[String],
) -> Result<(Policy, BTreeMap<String, ContextMetadata>), ToolchainError> {
    if intent.is_fallback {
        return Err(ToolchainError::Precondition("fallback intents are not given generated policies".into()));
    }
    let subject = format!("{}/{}", doc.name, intent.intent_id);
    let inputs = json!({"doc": doc, "intent": {"intent_id": intent.intent_id, "description": intent.description}});
    let out: PolicyOut = ask(provider, request(Stage::Policy, &subject, inputs, feedback), cfg.retries, check_policy)?;
    let mut used = BTreeSet::new();
    for rule in &out.rules {
        let ast = parse_constraint(&rule.constraint).expect("checked");
        used.extend(ast.context_refs().into_iter().map(str::to_owned));
    }
    let contexts = out.contexts.iter().filter(|(k, _)| used.contains(*k)).map(|(k, v)| (k.clone(), v.metadata())).collect();
    Ok((Policy { rules: out.rules }, contexts))
}

/// A generated function entry and the contexts it declares.
pub type Generated = (FunctionEntry, BTreeMap<String, ContextMetadata>);

/// Runs every stage for one function.
pub fn generate_function(
    doc: &FunctionDoc,
    binding: Option<GuiBinding>,
    provider: &dyn ReasoningProvider,
    cfg: &GenConfig,
    feedback: &[String],
) -> Result<Generated, ToolchainError> {
    let level = classify_with(doc, provider, cfg, feedback)?;
    let mut entry = FunctionEntry::new(&doc.name, level);
    entry.desc = doc.description.clone();
    entry.gui_binding = binding;
    let mut contexts: BTreeMap<String, ContextMetadata> = BTreeMap::new();
    if level == SecurityLevel::Conditional {
        entry.intents = predict_with(doc, level, provider, cfg, feedback)?;
        for intent in entry.intents.iter_mut().filter(|i| !i.is_fallback) {
            let (policy, declared) = policy_with(doc, intent, provider, cfg, feedback)?;
            for (id, meta) in declared {
                if let Some(prev) = contexts.get(&id) {
                    if *prev != meta {
                        return Err(ToolchainError::Input(format!(
                            "`{}`: intents declare context `{id}` with different metadata",
                            doc.name
                        )));
                    }
                }
                if meta.src == ContextSource::UserRequest && !intent.param_contexts.contains(&id) {
                    intent.param_contexts.push(id.clone());
                }
                contexts.insert(id, meta);
            }
            entry.policies.insert(intent.intent_id.clone(), policy);
        }
    }
    Ok((entry, contexts))
}

/// Generates functions concurrently, preserving input order.
pub(crate) fn generate_all(
    jobs: &[(FunctionDoc, Option<GuiBinding>)],
    provider: &dyn ReasoningProvider,
    cfg: &GenConfig,
    feedback: &BTreeMap<usize, Vec<String>>,
) -> Vec<Result<Generated, ToolchainError>> {
    let none = Vec::new();
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .enumerate()
            .map(|(i, (doc, binding))| {
                let fb = feedback.get(&i).unwrap_or(&none);
                s.spawn(move || generate_function(doc, binding.clone(), provider, cfg, fb))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("generation thread panicked")).collect()
    })
}

/// Index of the function a lint path points into, for flat spaces.
pub(crate) fn function_index(path: &str) -> Option<usize> {
    let rest = path.strip_prefix("functions[")?;
    rest[..rest.find(']')?].parse().ok()
}

/// Adds `declared` to `space.contexts`, reporting ids already declared with
/// different metadata.
pub(crate) fn merge_contexts(
    space: &mut ContextSpace,
    declared: &BTreeMap<String, ContextMetadata>,
    function_id: &str,
) -> Vec<String> {
    let mut problems = Vec::new();
    for (id, meta) in declared {
        match space.contexts.get(id) {
            Some(existing) if existing != meta => problems.push(format!(
                "`{function_id}` declares context `{id}` with metadata that conflicts with an existing declaration"
            )),
            Some(_) => {}
            None => {
                space.contexts.insert(id.clone(), meta.clone());
            }
        }
    }
    problems
}

fn collect_jobs(inputs: &[SpaceInput]) -> Result<Vec<(FunctionDoc, Option<GuiBinding>)>, ToolchainError> {
    let mut jobs = Vec::new();
    for input in inputs {
        match input {
            SpaceInput::Docs(docs) => jobs.extend(docs.iter().cloned().map(|d| (d, None))),
            SpaceInput::Manifest(m) => {
                m.validate()?;
                jobs.extend(m.to_docs().into_iter().map(|(d, b)| (d, Some(b))));
            }
        }
    }
    if jobs.is_empty() {
        return Err(ToolchainError::Input("no functions to generate".into()));
    }
    let mut names = BTreeSet::new();
    for (doc, _) in &jobs {
        if doc.name.is_empty() || !names.insert(doc.name.as_str()) {
            return Err(ToolchainError::Input(format!("function name `{}` is empty or repeated", doc.name)));
        }
    }
    Ok(jobs)
}

/// Builds a flat, lint-clean context space from docs and handler manifests.
///
/// Functions implicated in lint errors or context conflicts are regenerated
/// with the problems as feedback, up to `cfg.lint_passes` times.
pub fn assemble_space(
    app_id: &str,
    inputs: &[SpaceInput],
    provider: &dyn ReasoningProvider,
    cfg: &GenConfig,
) -> Result<ContextSpace, ToolchainError> {
    let jobs = collect_jobs(inputs)?;
    let mut generated: Vec<Option<Generated>> = vec![None; jobs.len()];
    let mut feedback: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut pending: Vec<usize> = (0..jobs.len()).collect();

    for pass in 0..=cfg.lint_passes {
        let batch: Vec<_> = pending.iter().map(|&i| jobs[i].clone()).collect();
        let batch_feedback = pending.iter().enumerate().filter_map(|(k, i)| feedback.get(i).map(|f| (k, f.clone()))).collect();
        for (k, result) in generate_all(&batch, provider, cfg, &batch_feedback).into_iter().enumerate() {
            generated[pending[k]] = Some(result?);
        }

        let mut space = ContextSpace::new(app_id, "1");
        let mut problems: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (i, (entry, declared)) in generated.iter().map(|g| g.as_ref().expect("generated")).enumerate() {
            let conflicts = merge_contexts(&mut space, declared, &entry.function_id);
            if !conflicts.is_empty() {
                problems.entry(i).or_default().extend(conflicts);
            }
            space.functions.as_mut().expect("flat").push(entry.clone());
        }
        let mut fatal = Vec::new();
        for finding in lint_space(&space).into_iter().filter(|f| f.severity == Severity::Error) {
            match function_index(&finding.path) {
                Some(i) => problems.entry(i).or_default().push(finding.to_string()),
                None => fatal.push(finding.to_string()),
            }
        }
        if !fatal.is_empty() {
            return Err(ToolchainError::Lint { passes: pass, problems: fatal });
        }
        if problems.is_empty() {
            return Ok(space);
        }
        if pass == cfg.lint_passes {
            return Err(ToolchainError::Lint { passes: pass, problems: problems.into_values().flatten().collect() });
        }
        log::warn!("lint pass {pass}: regenerating {} function(s)", problems.len());
        pending = problems.keys().copied().collect();
        for (i, p) in problems {
            feedback.entry(i).or_default().extend(p);
        }
    }
    unreachable!("the final pass always returns")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::StubProvider;
    use serde_json::Value;

    fn stub(v: Value) -> StubProvider {
        StubProvider { canned: serde_json::from_value(v).unwrap(), strict: true }
    }

    fn transfer_doc() -> FunctionDoc {
        FunctionDoc::new("transfer_money", "transfer money to an account")
    }

    #[test]
    fn temperature_defaults() {
        assert_eq!(default_temperature(ContextSource::UserRequest), Temperature::Warm);
        assert_eq!(default_temperature(ContextSource::FuncParams), Temperature::Hot);
        assert_eq!(default_temperature(ContextSource::AgentHistory), Temperature::Hot);
        assert_eq!(default_temperature(ContextSource::SystemApi), Temperature::Cold);
    }

    #[test]
    fn predict_refuses_non_conditional_and_empty_descriptions() {
        let p = StubProvider::bundled();
        let cfg = GenConfig::default();
        let err = predict_intents(&transfer_doc(), SecurityLevel::Normal, &p, &cfg).unwrap_err();
        assert!(matches!(err, ToolchainError::Precondition(_)));
        let err = predict_intents(&FunctionDoc::new("x", " "), SecurityLevel::Conditional, &p, &cfg).unwrap_err();
        assert!(matches!(err, ToolchainError::Precondition(_)));
    }

    #[test]
    fn reserved_fallback_id_is_retried() {
        let p = stub(serde_json::json!({"intents:f": [
            {"intents": [{"intent_id": "other", "description": "x"}]},
            {"intents": [{"intent_id": "send", "description": "send it"}]}
        ]}));
        let intents = predict_intents(&FunctionDoc::new("f", "does f"), SecurityLevel::Conditional, &p, &GenConfig::default()).unwrap();
        let ids: Vec<_> = intents.iter().map(|i| (i.intent_id.as_str(), i.is_fallback)).collect();
        assert_eq!(ids, [("send", false), ("other", true)]);
    }

    #[test]
    fn undeclared_context_is_regenerated_then_fails() {
        let bad = serde_json::json!({"rules": [{"ctx_id": "amount", "constraint": "amount <= limit", "guidance": "g"}],
                                      "contexts": {"amount": {"type": "integer", "src": "func_params"}}});
        let p = stub(serde_json::json!({"policy:transfer_money/t": bad}));
        let err = generate_policy(&transfer_doc(), &IntentEntry::new("t", "transfer"), &p, &GenConfig::default()).unwrap_err();
        match err {
            ToolchainError::Provider(e) => {
                assert_eq!(e.attempts, 3);
                assert!(e.last.contains("`limit` is not declared"), "{}", e.last);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unreferenced_contexts_are_dropped() {
        let p = stub(serde_json::json!({"policy:transfer_money/t": {
            "rules": [{"ctx_id": "amount", "constraint": "amount <= 5", "guidance": "g"}],
            "contexts": {"amount": {"type": "integer", "src": "func_params"}, "noise": {"type": "string", "src": "system_api"}}
        }}));
        let (_, ctx) = generate_policy(&transfer_doc(), &IntentEntry::new("t", "transfer"), &p, &GenConfig::default()).unwrap();
        assert_eq!(ctx.keys().collect::<Vec<_>>(), ["amount"]);
        assert_eq!(ctx["amount"].tempr, Temperature::Hot);
    }

    #[test]
    fn empty_input_is_rejected() {
        let err = assemble_space("a", &[], &StubProvider::bundled(), &GenConfig::default()).unwrap_err();
        assert!(matches!(err, ToolchainError::Input(_)));
        let err = assemble_space("a", &[SpaceInput::Docs(vec![])], &StubProvider::bundled(), &GenConfig::default()).unwrap_err();
        assert!(matches!(err, ToolchainError::Input(_)));
    }

    #[test]
    fn conflicting_contexts_across_functions_fail_after_passes() {
        let policy = |ty: &str| serde_json::json!({
            "rules": [{"ctx_id": "n", "constraint": "n == n", "guidance": "g"}],
            "contexts": {"n": {"type": ty, "src": "func_params"}}
        });
        let p = stub(serde_json::json!({
            "classify:a": {"sec_level": "conditional"}, "classify:b": {"sec_level": "conditional"},
            "intents:a": {"intents": [{"intent_id": "i", "description": "do a"}]},
            "intents:b": {"intents": [{"intent_id": "i", "description": "do b"}]},
            "policy:a/i": policy("integer"), "policy:b/i": policy("string")
        }));
        let docs = vec![FunctionDoc::new("a", "does a"), FunctionDoc::new("b", "does b")];
        let err = assemble_space("x", &[SpaceInput::Docs(docs)], &p, &GenConfig::default()).unwrap_err();
        match err {
            ToolchainError::Lint { passes, problems } => {
                assert_eq!(passes, 2);
                assert!(problems[0].contains("`b` declares context `n`"), "{problems:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn function_index_parses_paths() {
        assert_eq!(function_index("functions[12].policies.x"), Some(12));
        assert_eq!(function_index("contexts.x"), None);
    }
}
