//! Policy improvement suggestions from runtime event logs.
//!
//! Counting is authoritative. A reasoning provider may attach advisory prose
//! but never adds, drops or changes suggestions.

use std::collections::BTreeMap;

use ctxguard_core::verifier::{Decision, EventKind, MissKind, ValidationEvent};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::provider::{ask, ReasoningProvider, ReasoningRequest, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionKind {
    AddIntent,
    AddFunction,
    ReviewRule,
    RelaxRule,
    TightenRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub kind: SuggestionKind,
    /// Location in the space, e.g. `functions[function_id=f].intents`.
    pub target: String,
    /// Event ids that support the suggestion; never empty.
    pub evidence: Vec<u64>,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advisory: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisConfig {
    /// Minimum number of supporting events.
    pub threshold: usize,
    /// Overrides on one rule at or above `relax_factor * threshold` suggest
    /// relaxing it; fewer suggest a review.
    pub relax_factor: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { threshold: 3, relax_factor: 2 }
    }
}

fn function_target(f: &str) -> String {
    format!("functions[function_id={f}]")
}

fn rule_target(f: &str, intent: &str, constraint: &str) -> String {
    format!("{}.policies.{intent}.rules[constraint={constraint}]", function_target(f))
}

fn ids(evidence: &[u64]) -> String {
    evidence.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")
}

/// Statistics-only analysis; a pure function of `events`.
pub fn analyze_logs(events: &[ValidationEvent], cfg: &AnalysisConfig) -> Vec<Suggestion> {
    let by_id: BTreeMap<u64, &ValidationEvent> = events.iter().map(|e| (e.event_id, e)).collect();
    let mut groups: BTreeMap<(SuggestionKind, String), (Vec<u64>, String)> = BTreeMap::new();
    let mut add = |kind, target: String, event: u64, what: String| {
        let g = groups.entry((kind, target)).or_insert_with(|| (Vec::new(), what));
        g.0.push(event);
    };

    for e in events {
        let function = e.function_id.as_deref().unwrap_or("");
        match (e.kind, &e.decision) {
            (EventKind::Validation, Decision::Miss { kind }) if !function.is_empty() => match kind {
                MissKind::UnknownFunction => add(
                    SuggestionKind::AddFunction,
                    function_target(function),
                    e.event_id,
                    format!("the agent requested `{function}`, which the space does not declare"),
                ),
                MissKind::UnknownIntent | MissKind::UnrelatedInstruction => add(
                    SuggestionKind::AddIntent,
                    format!("{}.intents", function_target(function)),
                    e.event_id,
                    format!("no declared intent of `{function}` matched the user's instruction"),
                ),
            },
            (EventKind::Confirmation, _) if e.user_override == Some(true) => {
                let Some(original) = e.ref_event.and_then(|r| by_id.get(&r)) else { continue };
                let (Some(f), Some(intent), Decision::Block { failed, .. }) =
                    (&original.function_id, &original.intent_id, &original.decision)
                else {
                    continue;
                };
                for rule in failed {
                    add(
                        SuggestionKind::ReviewRule,
                        rule_target(f, intent, &rule.constraint),
                        e.event_id,
                        format!("the user overrode blocks by `{}` on `{f}`/`{intent}`", rule.constraint),
                    );
                }
            }
            (EventKind::Report, _) => {
                let Some(original) = e.ref_event.and_then(|r| by_id.get(&r)) else { continue };
                let (Some(f), Some(intent), Decision::Allow { .. }) =
                    (&original.function_id, &original.intent_id, &original.decision)
                else {
                    continue;
                };
                for outcome in original.rule_outcomes.iter().filter(|o| o.outcome == "true") {
                    add(
                        SuggestionKind::TightenRule,
                        rule_target(f, intent, &outcome.constraint),
                        e.event_id,
                        format!("the user reported actions that `{}` allowed on `{f}`/`{intent}`", outcome.constraint),
                    );
                }
            }
            _ => {}
        }
    }

    let mut out: Vec<Suggestion> = groups
        .into_iter()
        .filter(|(_, (evidence, _))| evidence.len() >= cfg.threshold.max(1))
        .map(|((kind, target), (evidence, what))| {
            let kind = if kind == SuggestionKind::ReviewRule && evidence.len() >= cfg.relax_factor * cfg.threshold {
                SuggestionKind::RelaxRule
            } else {
                kind
            };
            let rationale = format!("{what} {} time(s) (events {})", evidence.len(), ids(&evidence));
            Suggestion { kind, target, evidence, rationale, advisory: None }
        })
        .collect();
    out.sort_by(|a, b| (a.kind, &a.target).cmp(&(b.kind, &b.target)));
    out
}

#[derive(Deserialize)]
struct RationaleOut {
    rationale: String,
}

/// Attaches provider prose to each suggestion. Provider failures leave the
/// suggestion without prose.
pub fn annotate(suggestions: &mut [Suggestion], provider: &dyn ReasoningProvider, retries: usize) {
    for s in suggestions.iter_mut() {
        let inputs = json!({"kind": s.kind, "target": s.target, "rationale": s.rationale, "evidence": s.evidence});
        match ask::<RationaleOut>(provider, ReasoningRequest::new(Stage::Rationale, &s.target, inputs), retries, |_| Ok(())) {
            Ok(r) if !r.rationale.trim().is_empty() => s.advisory = Some(r.rationale),
            Ok(_) => {}
            Err(e) => log::warn!("{e}"),
        }
    }
}
