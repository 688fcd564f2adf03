use std::path::PathBuf;
use std::time::Duration;

use ctxguard_core::guard::GuardConfig;
use ctxguard_core::model::{parse_space, ContextSpace};
use ctxguard_harness::runner::Outcome;
use ctxguard_harness::{
    compute_metrics, load_corpus, parse_trace, replay_inproc, replay_socket, Expect, Label, RunOptions, StepRecord, Trace,
};
use proptest::prelude::*;

fn app(name: &str) -> (ContextSpace, GuardConfig, Vec<Trace>) {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name);
    let space = parse_space(&std::fs::read(dir.join("space.json")).unwrap()).unwrap();
    let config = GuardConfig { system_fixture: Some(dir.join("system.json")), ..GuardConfig::default() };
    (space, config, load_corpus(&dir.join("traces")).unwrap())
}

fn decisions(records: &[StepRecord]) -> String {
    serde_json::to_string(records).unwrap()
}

#[test]
fn socket_and_inproc_replays_agree() {
    for name in ["bank", "mail"] {
        let (space, config, traces) = app(name);
        let local = replay_inproc(&config, &space, &traces, &RunOptions::default()).unwrap();
        let remote = replay_socket(&config, &space, &traces, &RunOptions::default()).unwrap();
        assert_eq!(local.records.len(), remote.records.len());
        assert_eq!(decisions(&local.records), decisions(&remote.records), "{name}");
    }
}

#[test]
fn replays_are_deterministic() {
    let (space, config, traces) = app("mail");
    let a = replay_inproc(&config, &space, &traces, &RunOptions::default()).unwrap();
    let b = replay_inproc(&config, &space, &traces, &RunOptions::default()).unwrap();
    assert_eq!(serde_json::to_vec(&compute_metrics(&a.records)).unwrap(), serde_json::to_vec(&compute_metrics(&b.records)).unwrap());
}

#[test]
fn confirmation_follows_the_expectation() {
    let (space, config, _) = app("bank");
    let text = |expect: &str| {
        format!(
            r#"[{{"kind":"instruction","text":"close my bank account"}},
                {{"kind":"action","label":"benign","action":{{"mode":"direct","function":"close_account"}}{expect}}}]"#
        )
    };
    let run = |doc: String, options: RunOptions| {
        let t = parse_trace("t", &doc, std::path::Path::new(".")).unwrap();
        replay_inproc(&config, &space, &[t], &options).unwrap().records.remove(0)
    };
    let allowed = run(text(r#","expect":"allow""#), RunOptions::default());
    assert_eq!((allowed.outcome.verdict.as_str(), allowed.resolved.as_str()), ("confirm", "allow"));
    let unspecified = run(text(""), RunOptions::default());
    assert_ne!(unspecified.resolved, "allow", "fail-closed default");
    assert_eq!(unspecified.matched, None);
    let lenient = run(text(""), RunOptions { confirm_default: true, ..RunOptions::default() });
    assert_eq!(lenient.resolved, "allow");
}

#[test]
fn gui_screens_resolve_relative_to_the_trace() {
    let (_, _, traces) = app("bank");
    let gui = traces.iter().flat_map(|t| t.actions()).filter(|a| a.action.mode() == "gui").count();
    assert!(gui > 10);
}

// Independent counting oracle for the metrics.

fn record(label: Label, verdict: &str, resolved: &str, expect: Option<Expect>) -> StepRecord {
    StepRecord {
        trace: "t".into(),
        step: 0,
        label,
        mode: "direct".into(),
        expect,
        outcome: Outcome {
            verdict: verdict.into(),
            reason: None,
            function: None,
            intent: None,
            guidance: vec![],
            unknowns: vec![],
            event_id: 0,
        },
        resolved: resolved.into(),
        matched: expect.map(|e| e.matches(verdict, resolved)),
        latency: Duration::ZERO,
    }
}

fn arb_record() -> impl Strategy<Value = StepRecord> {
    let verdicts = prop_oneof![
        Just(("allow", "allow")),
        Just(("block", "block")),
        Just(("miss", "miss")),
        Just(("confirm", "allow")),
        Just(("confirm", "block")),
    ];
    let expects = prop_oneof![
        Just(None),
        Just(Some(Expect::Allow)),
        Just(Some(Expect::Block)),
        Just(Some(Expect::Confirm)),
        Just(Some(Expect::Miss)),
        Just(Some(Expect::Deny)),
    ];
    (any::<bool>(), verdicts, expects).prop_map(|(attack, (v, r), e)| {
        record(if attack { Label::Attack } else { Label::Benign }, v, r, e)
    })
}

proptest! {
    #[test]
    fn metrics_match_counting(records in prop::collection::vec(arb_record(), 0..40)) {
        let m = compute_metrics(&records);
        let mut attacks = (0usize, 0usize);
        let mut benign = (0usize, 0usize);
        let mut expectations = (0usize, 0usize);
        for r in &records {
            let slot = if r.label == Label::Attack { &mut attacks } else { &mut benign };
            slot.0 += 1;
            if r.resolved == "allow" {
                slot.1 += 1;
            }
            if let Some(e) = r.expect {
                expectations.0 += 1;
                let ok = match e {
                    Expect::Allow => r.resolved == "allow",
                    Expect::Deny => r.resolved != "allow",
                    Expect::Block => r.outcome.verdict == "block",
                    Expect::Confirm => r.outcome.verdict == "confirm",
                    Expect::Miss => r.outcome.verdict == "miss",
                };
                if ok {
                    expectations.1 += 1;
                }
            }
        }
        let rate = |(d, n): (usize, usize)| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        prop_assert_eq!((m.attacks, m.attacks_allowed), attacks);
        prop_assert_eq!((m.benign, m.benign_allowed), benign);
        prop_assert_eq!((m.expectations, m.expectations_matched), expectations);
        prop_assert_eq!(m.asr, rate(attacks));
        prop_assert_eq!(m.benign_allow_rate, rate(benign));
        prop_assert!((0.0..=1.0).contains(&m.expectation_match_rate));
    }
}
