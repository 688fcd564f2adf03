//! Deterministic large spaces for load testing.

use ctxguard_core::model::{
    ContextMetadata, ContextSource, ContextSpace, FunctionEntry, GuiBinding, IntentEntry, Policy, Rule, SecurityLevel,
    Temperature,
};
use ctxguard_core::ContextType;

const TYPES: [ContextType; 5] =
    [ContextType::Integer, ContextType::String, ContextType::Boolean, ContextType::Float, ContextType::StringList];

const SOURCES: [(ContextSource, Temperature); 5] = [
    (ContextSource::UserRequest, Temperature::Warm),
    (ContextSource::FuncParams, Temperature::Hot),
    (ContextSource::SystemApi, Temperature::Cold),
    (ContextSource::AgentHistory, Temperature::Hot),
    (ContextSource::SystemCli, Temperature::Cold),
];

fn constraint(id: &str, ty: ContextType, k: usize) -> String {
    match ty {
        ContextType::Integer => format!("{id} <= {}", 100 + k),
        ContextType::String => format!("{id} == \"v{k}\""),
        ContextType::Boolean => format!("{id} == true"),
        ContextType::Float => format!("{id} < {}.5", k % 10),
        ContextType::StringList => format!("{id} contains \"v{k}\""),
    }
}

/// A flat space with `functions` entries and `contexts` contexts in which
/// every context is referenced by some rule. Roughly two thirds of the
/// functions are conditional with two intents, a fallback and two rules per
/// intent; the rest are normal or dangerous. Panics unless there are enough
/// rule slots to reference every context.
pub fn synthetic_space(app_id: &str, functions: usize, contexts: usize) -> ContextSpace {
    let mut space = ContextSpace::new(app_id, "1");
    let ids: Vec<String> = (0..contexts).map(|i| format!("ctx_{i:03}")).collect();
    for (i, id) in ids.iter().enumerate() {
        let (src, tempr) = SOURCES[(i / TYPES.len()) % SOURCES.len()];
        let meta = ContextMetadata::new(TYPES[i % TYPES.len()], src, tempr).with_acquisition(format!("probe.{id}"));
        space.contexts.insert(id.clone(), meta);
    }
    let conditional: Vec<usize> = (0..functions).filter(|i| i % 3 != 0).collect();
    assert!(conditional.len() * 4 >= contexts, "not enough rule slots to reference every context");

    let mut next = 0usize;
    let entries = space.functions.as_mut().expect("flat space");
    for i in 0..functions {
        let level = match i % 3 {
            0 if i % 2 == 0 => SecurityLevel::Normal,
            0 => SecurityLevel::Dangerous,
            _ => SecurityLevel::Conditional,
        };
        let mut f = FunctionEntry::new(format!("fn_{i:03}"), level);
        f.desc = format!("synthetic operation number {i}");
        f.gui_binding = Some(GuiBinding::new(app_id, "", format!("{app_id}:id/fn_{i:03}")));
        if level == SecurityLevel::Conditional {
            for j in 0..2 {
                let intent_id = format!("intent_{j}");
                f.intents.push(IntentEntry::new(&intent_id, format!("perform operation {i} variant {j}")));
                let rules = (0..2)
                    .map(|_| {
                        let k = next % contexts;
                        next += 1;
                        let id = &ids[k];
                        Rule {
                            ctx_id: id.clone(),
                            constraint: constraint(id, TYPES[k % TYPES.len()], k),
                            guidance: format!("{id} is outside the permitted range"),
                        }
                    })
                    .collect();
                f.policies.insert(intent_id, Policy { rules });
            }
            f.intents.push(IntentEntry::fallback("other"));
        }
        entries.push(f);
    }
    space
}
