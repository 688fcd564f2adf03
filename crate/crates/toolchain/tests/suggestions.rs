use std::collections::BTreeMap;

use ctxguard_core::verifier::{BlockReason, Decision, EventKind, MissKind, RuleFailure, RuleOutcome, ValidationEvent};
use ctxguard_toolchain::{analyze_logs, annotate, AnalysisConfig, StubProvider, Suggestion, SuggestionKind};
use proptest::prelude::*;

fn event(id: u64, kind: EventKind, function: &str, decision: Decision) -> ValidationEvent {
    let mut e = ValidationEvent::new(kind, 1, "app", decision);
    e.event_id = id;
    e.function_id = Some(function.to_owned());
    e
}

fn miss(id: u64, function: &str, kind: MissKind) -> ValidationEvent {
    event(id, EventKind::Validation, function, Decision::Miss { kind })
}

fn block(id: u64, function: &str, intent: &str, constraints: &[&str]) -> ValidationEvent {
    let failed = constraints
        .iter()
        .map(|c| RuleFailure {
            ctx_id: c.split_whitespace().next().unwrap().into(),
            constraint: (*c).into(),
            guidance: "g".into(),
            outcome: "false".into(),
        })
        .collect();
    let mut e = event(
        id,
        EventKind::Validation,
        function,
        Decision::Block { failed, unknowns: vec![], reason: BlockReason::PolicyViolation, note: None },
    );
    e.intent_id = Some(intent.into());
    e
}

fn allow(id: u64, function: &str, intent: &str, constraints: &[&str]) -> ValidationEvent {
    let mut e = event(id, EventKind::Validation, function, Decision::allow());
    e.intent_id = Some(intent.into());
    e.rule_outcomes = constraints
        .iter()
        .map(|c| RuleOutcome { ctx_id: c.split_whitespace().next().unwrap().into(), constraint: (*c).into(), outcome: "true".into() })
        .collect();
    e
}

fn confirm(id: u64, of: &ValidationEvent, allowed: bool) -> ValidationEvent {
    let mut e = event(id, EventKind::Confirmation, of.function_id.as_deref().unwrap(), Decision::allow());
    e.intent_id = of.intent_id.clone();
    e.ref_event = Some(of.event_id);
    e.user_override = Some(allowed && matches!(of.decision, Decision::Block { .. }));
    e
}

fn report(id: u64, of: &ValidationEvent) -> ValidationEvent {
    let mut e = event(id, EventKind::Report, of.function_id.as_deref().unwrap(), of.decision.clone());
    e.ref_event = Some(of.event_id);
    e.note = Some("that was not what I wanted".into());
    e
}

#[test]
fn three_misses_suggest_a_function() {
    let events: Vec<_> = (1..=3).map(|i| miss(i, "export_csv", MissKind::UnknownFunction)).collect();
    let s = analyze_logs(&events, &AnalysisConfig::default());
    assert_eq!(s.len(), 1);
    assert_eq!((s[0].kind, s[0].target.as_str()), (SuggestionKind::AddFunction, "functions[function_id=export_csv]"));
    assert_eq!(s[0].evidence, [1, 2, 3]);
    assert!(analyze_logs(&events[..2], &AnalysisConfig::default()).is_empty());
}

#[test]
fn three_overrides_suggest_review_six_suggest_relaxing() {
    let mut events = Vec::new();
    for i in 0..6u64 {
        let b = block(10 * i + 1, "transfer_money", "other", &["amount <= 20"]);
        events.push(confirm(10 * i + 2, &b, true));
        events.push(b);
    }
    let review = analyze_logs(&events[..6], &AnalysisConfig::default());
    assert_eq!(review.len(), 1);
    assert_eq!(review[0].kind, SuggestionKind::ReviewRule);
    assert_eq!(review[0].evidence, [2, 12, 22]);
    assert_eq!(review[0].target, "functions[function_id=transfer_money].policies.other.rules[constraint=amount <= 20]");
    let relax = analyze_logs(&events, &AnalysisConfig::default());
    assert_eq!(relax[0].kind, SuggestionKind::RelaxRule);
    assert_eq!(relax[0].evidence.len(), 6);
}

#[test]
fn declined_confirmations_are_not_overrides() {
    let mut events = Vec::new();
    for i in 0..4u64 {
        let b = block(10 * i + 1, "f", "i", &["a <= 1"]);
        events.push(confirm(10 * i + 2, &b, false));
        events.push(b);
    }
    assert!(analyze_logs(&events, &AnalysisConfig::default()).is_empty());
}

#[test]
fn reports_on_allowed_actions_suggest_tightening() {
    let mut events = Vec::new();
    for i in 0..3u64 {
        let a = allow(10 * i + 1, "send_email", "send_new", &["recipients subset_of requested_recipients"]);
        events.push(report(10 * i + 2, &a));
        events.push(a);
    }
    let s = analyze_logs(&events, &AnalysisConfig::default());
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].kind, SuggestionKind::TightenRule);
    assert_eq!(s[0].evidence, [2, 12, 22]);
}

#[test]
fn annotation_never_changes_statistics() {
    let events: Vec<_> = (1..=3).map(|i| miss(i, "f", MissKind::UnrelatedInstruction)).collect();
    let mut s = analyze_logs(&events, &AnalysisConfig::default());
    let before = s.clone();
    let mut stub = StubProvider::bundled();
    stub.canned.insert("rationale:functions[function_id=f].intents".into(), serde_json::json!({"rationale": "users ask for f often"}));
    annotate(&mut s, &stub, 0);
    assert_eq!(s[0].advisory.as_deref(), Some("users ask for f often"));
    s[0].advisory = None;
    assert_eq!(s, before);
}

// Independent counting oracle over random logs.

#[derive(Debug, Clone)]
enum Step {
    Miss(usize, bool),
    Override(usize, usize),
    Decline(usize, usize),
    Report(usize, usize),
}

const FUNCS: &[&str] = &["f0", "f1", "f2"];
const RULES: &[&str] = &["a <= 1", "b == c", "d in e"];

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        (0..3usize, any::<bool>()).prop_map(|(f, u)| Step::Miss(f, u)),
        (0..3usize, 0..3usize).prop_map(|(f, r)| Step::Override(f, r)),
        (0..3usize, 0..3usize).prop_map(|(f, r)| Step::Decline(f, r)),
        (0..3usize, 0..3usize).prop_map(|(f, r)| Step::Report(f, r)),
    ]
}

fn build(steps: &[Step]) -> Vec<ValidationEvent> {
    let mut events = Vec::new();
    let mut id = 0;
    let mut next = || {
        id += 1;
        id
    };
    for s in steps {
        match *s {
            Step::Miss(f, unknown_fn) => {
                let kind = if unknown_fn { MissKind::UnknownFunction } else { MissKind::UnknownIntent };
                events.push(miss(next(), FUNCS[f], kind));
            }
            Step::Override(f, r) | Step::Decline(f, r) => {
                let b = block(next(), FUNCS[f], "i", &[RULES[r]]);
                let c = confirm(next(), &b, matches!(s, Step::Override(..)));
                events.extend([b, c]);
            }
            Step::Report(f, r) => {
                let a = allow(next(), FUNCS[f], "i", &[RULES[r]]);
                let rep = report(next(), &a);
                events.extend([a, rep]);
            }
        }
    }
    events
}

fn oracle(steps: &[Step], k: usize) -> BTreeMap<(String, String), usize> {
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for s in steps {
        let key = match *s {
            Step::Miss(f, true) => ("add_function".to_owned(), FUNCS[f].to_owned()),
            Step::Miss(f, false) => ("add_intent".to_owned(), FUNCS[f].to_owned()),
            Step::Override(f, r) => ("override".to_owned(), format!("{}/{}", FUNCS[f], RULES[r])),
            Step::Report(f, r) => ("tighten_rule".to_owned(), format!("{}/{}", FUNCS[f], RULES[r])),
            Step::Decline(..) => continue,
        };
        *counts.entry(key).or_default() += 1;
    }
    counts
        .into_iter()
        .filter(|(_, n)| *n >= k)
        .map(|((kind, what), n)| {
            let kind = match kind.as_str() {
                "override" if n >= 2 * k => "relax_rule".to_owned(),
                "override" => "review_rule".to_owned(),
                _ => kind,
            };
            ((kind, what), n)
        })
        .collect()
}

fn summarize(s: &[Suggestion]) -> BTreeMap<(String, String), usize> {
    s.iter()
        .map(|x| {
            let kind = serde_json::to_value(x.kind).unwrap().as_str().unwrap().to_owned();
            let f = x.target.split(['=', ']']).nth(1).unwrap().to_owned();
            let what = match x.target.split_once("[constraint=") {
                Some((_, rule)) => format!("{f}/{}", rule.trim_end_matches(']')),
                None => f,
            };
            ((kind, what), x.evidence.len())
        })
        .collect()
}

proptest! {
    #[test]
    fn counts_match_oracle(steps in prop::collection::vec(step(), 0..60), k in 1usize..5) {
        let events = build(&steps);
        let cfg = AnalysisConfig { threshold: k, ..AnalysisConfig::default() };
        let got = analyze_logs(&events, &cfg);
        prop_assert!(got.iter().all(|s| !s.evidence.is_empty()));
        prop_assert_eq!(summarize(&got), oracle(&steps, k));
        let mut reversed = events.clone();
        reversed.reverse();
        let again: Vec<_> = analyze_logs(&reversed, &cfg).into_iter().map(|s| (s.kind, s.target, s.evidence.len())).collect();
        let first: Vec<_> = got.into_iter().map(|s| (s.kind, s.target, s.evidence.len())).collect();
        prop_assert_eq!(first, again);
    }
}
