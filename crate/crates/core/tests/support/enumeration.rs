//! Exhaustive rule-outcome enumeration through the full decision pipeline.

use std::collections::BTreeMap;
use std::sync::Arc;

use ctxguard_core::guard::{Action, Guard, GuardConfig};
use ctxguard_core::intent::{HashedEmbedder, KeywordExtractor};
use ctxguard_core::manager::Acquisition;
use ctxguard_core::model::{
    ContextMetadata, ContextSource, ContextSpace, FunctionEntry, IntentEntry, Policy, Rule, SecurityLevel, Temperature,
};
use ctxguard_core::ContextType;

/// One conditional function whose single intent is guarded by `n` rules
/// `c<i> == true` over parameter contexts.
pub fn policy_space(n: usize) -> ContextSpace {
    let mut s = ContextSpace::new(format!("policy{n}"), "1");
    let mut rules = Vec::new();
    for i in 0..n {
        let id = format!("c{i}");
        s.contexts.insert(id.clone(), ContextMetadata::new(ContextType::Boolean, ContextSource::FuncParams, Temperature::Hot));
        rules.push(Rule { ctx_id: id.clone(), constraint: format!("{id} == true"), guidance: format!("rule {i}") });
    }
    let mut f = FunctionEntry::new("act", SecurityLevel::Conditional);
    f.desc = "perform the guarded action".into();
    f.intents.push(IntentEntry::new("approve", "approve the pending request"));
    f.policies.insert("approve".into(), Policy { rules });
    s.functions.as_mut().expect("flat space").push(f);
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    True,
    False,
    Unknown,
}

#[derive(Debug, Default)]
pub struct EnumerationReport {
    pub vectors: usize,
    /// Allow although some rule was not True.
    pub unsafe_allows: usize,
    /// Not Allow although every rule was True.
    pub denied_legitimate: usize,
    /// Decision disagrees with the conjunction oracle.
    pub oracle_disagreements: usize,
}

/// Enumerates every outcome vector in {True, `other`}^n for n in 1..=max_n.
pub fn enumerate(max_n: usize, other: Outcome) -> EnumerationReport {
    let guard = Guard::with_providers(
        GuardConfig::default(),
        Acquisition::default(),
        Arc::new(KeywordExtractor::default()),
        Arc::new(HashedEmbedder::default()),
    )
    .expect("default config");
    let mut report = EnumerationReport::default();
    for n in 1..=max_n {
        let mut session = guard.open_session();
        guard.register(&mut session, policy_space(n)).expect("space lints clean");
        guard.instruction(&mut session, "approve the pending request").expect("active app");
        for bits in 0u32..(1 << n) {
            let outcomes: Vec<Outcome> =
                (0..n).map(|i| if bits >> i & 1 == 1 { Outcome::True } else { other }).collect();
            let mut params = BTreeMap::new();
            for (i, o) in outcomes.iter().enumerate() {
                match o {
                    Outcome::True => params.insert(format!("c{i}"), true.into()),
                    Outcome::False => params.insert(format!("c{i}"), false.into()),
                    Outcome::Unknown => None,
                };
            }
            let verdict = guard
                .decide(&mut session, Action::Direct { function_id: "act".into(), params })
                .expect("instruction ingested");
            let allowed = verdict.decision.is_allow();
            let oracle = outcomes.iter().all(|o| *o == Outcome::True);
            report.vectors += 1;
            if allowed && !oracle {
                report.unsafe_allows += 1;
            }
            if oracle && (!allowed || verdict.intent_id.as_deref() != Some("approve")) {
                report.denied_legitimate += 1;
            }
            if allowed != oracle {
                report.oracle_disagreements += 1;
            }
        }
    }
    report
}
