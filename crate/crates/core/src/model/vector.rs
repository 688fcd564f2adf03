use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::space::{ContextMetadata, ContextSpace, Temperature};
use crate::value::{ContextType, Value};

/// Event that causes contexts to be re-acquired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateTrigger {
    /// Space loaded or activated; refreshes every temperature once.
    Load,
    /// New user instruction; refreshes warm contexts.
    Instruction,
    /// About to validate an action; refreshes hot contexts.
    PreValidation,
}

impl UpdateTrigger {
    pub fn refreshes(self, tempr: Temperature) -> bool {
        match self {
            UpdateTrigger::Load => true,
            UpdateTrigger::Instruction => tempr == Temperature::Warm,
            UpdateTrigger::PreValidation => tempr == Temperature::Hot,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextEntry {
    pub ctx_id: String,
    /// `None` is Unset.
    pub value: Option<Value>,
    pub metadata: ContextMetadata,
    pub update_count: u64,
    pub last_trigger: Option<UpdateTrigger>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VectorError {
    #[error("context `{0}` is not declared in the active space")]
    Undeclared(String),
    #[error("context `{ctx_id}` expects {expected}, got {actual}")]
    TypeMismatch { ctx_id: String, expected: ContextType, actual: ContextType },
}

/// Runtime values of every context declared by one space. The key set is
/// fixed at construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextVector {
    entries: BTreeMap<String, ContextEntry>,
}

impl ContextVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, ctx_id: &str) -> Option<&ContextEntry> {
        self.entries.get(ctx_id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &ContextEntry> {
        self.entries.values()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get(&self, ctx_id: &str) -> Option<&Value> {
        self.entries.get(ctx_id).and_then(|e| e.value.as_ref())
    }

    /// Sets a value after lossless coercion to the declared type.
    pub fn set(&mut self, ctx_id: &str, value: Value) -> Result<(), VectorError> {
        let entry = self
            .entries
            .get_mut(ctx_id)
            .ok_or_else(|| VectorError::Undeclared(ctx_id.to_owned()))?;
        let actual = value.type_of();
        let coerced = value.coerce(entry.metadata.ty).ok_or_else(|| VectorError::TypeMismatch {
            ctx_id: ctx_id.to_owned(),
            expected: entry.metadata.ty,
            actual,
        })?;
        entry.value = Some(coerced);
        Ok(())
    }

    pub fn unset(&mut self, ctx_id: &str) -> Result<(), VectorError> {
        let entry = self
            .entries
            .get_mut(ctx_id)
            .ok_or_else(|| VectorError::Undeclared(ctx_id.to_owned()))?;
        entry.value = None;
        Ok(())
    }

    pub(crate) fn entry_mut(&mut self, ctx_id: &str) -> Option<&mut ContextEntry> {
        self.entries.get_mut(ctx_id)
    }
}

/// One Unset entry per declared context.
pub fn init_vector(space: &ContextSpace) -> ContextVector {
    let entries = space
        .contexts
        .iter()
        .map(|(id, meta)| {
            let entry = ContextEntry {
                ctx_id: id.clone(),
                value: None,
                metadata: meta.clone(),
                update_count: 0,
                last_trigger: None,
            };
            (id.clone(), entry)
        })
        .collect();
    ContextVector { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContextSource, ContextSpace};

    fn space(n: usize) -> ContextSpace {
        let mut s = ContextSpace::new("a", "1");
        for i in 0..n {
            s.contexts.insert(
                format!("c{i}"),
                ContextMetadata::new(ContextType::Integer, ContextSource::SystemApi, Temperature::Cold),
            );
        }
        s
    }

    #[test]
    fn init_produces_unset_entries() {
        let cv = init_vector(&space(3));
        assert_eq!(cv.len(), 3);
        assert!(cv.entries().all(|e| e.value.is_none() && e.update_count == 0));
        assert!(init_vector(&space(0)).is_empty());
    }

    #[test]
    fn set_enforces_declared_type() {
        let mut cv = init_vector(&space(1));
        cv.set("c0", Value::Str("42".into())).unwrap();
        assert_eq!(cv.get("c0"), Some(&Value::Int(42)));
        assert!(matches!(cv.set("c0", Value::Bool(true)), Err(VectorError::TypeMismatch { .. })));
        assert!(matches!(cv.set("zz", Value::Int(1)), Err(VectorError::Undeclared(_))));
        assert_eq!(cv.len(), 1);
    }
}
