//! System context acquisition.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, RwLock};

use crate::model::{ContextMetadata, ContextSource};
use crate::value::{ContextType, Value};

/// Resolves a system context; `None` means the value is unavailable.
pub trait AcquisitionProvider: Send + Sync {
    fn resolve(&self, ctx_id: &str, meta: &ContextMetadata) -> Option<Value>;
}

/// Static key-value store keyed by acquisition descriptor (or context id
/// when no descriptor is set).
#[derive(Debug, Default)]
pub struct FixtureProvider {
    values: RwLock<BTreeMap<String, serde_json::Value>>,
}

impl FixtureProvider {
    pub fn new(values: BTreeMap<String, serde_json::Value>) -> Self {
        FixtureProvider { values: RwLock::new(values) }
    }

    pub fn from_json(doc: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(doc)?))
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn set(&self, key: impl Into<String>, value: serde_json::Value) {
        self.values.write().expect("fixture lock").insert(key.into(), value);
    }

    pub fn remove(&self, key: &str) {
        self.values.write().expect("fixture lock").remove(key);
    }
}

impl AcquisitionProvider for FixtureProvider {
    fn resolve(&self, ctx_id: &str, meta: &ContextMetadata) -> Option<Value> {
        let key = meta.acquisition.as_deref().unwrap_or(ctx_id);
        let values = self.values.read().expect("fixture lock");
        Value::from_json(values.get(key)?)?.coerce(meta.ty)
    }
}

/// Runs the acquisition descriptor as a shell command and parses stdout as
/// the declared type. String lists take one item per non-empty line.
#[derive(Debug, Default, Clone)]
pub struct CommandProvider;

pub(crate) fn parse_output(stdout: &str, ty: ContextType) -> Option<Value> {
    let trimmed = stdout.trim();
    match ty {
        ContextType::StringList => Some(Value::List(
            trimmed.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect(),
        )),
        ContextType::String => Some(Value::Str(trimmed.to_owned())),
        _ => Value::Str(trimmed.to_owned()).coerce(ty),
    }
}

impl AcquisitionProvider for CommandProvider {
    fn resolve(&self, _ctx_id: &str, meta: &ContextMetadata) -> Option<Value> {
        let cmd = meta.acquisition.as_deref()?;
        let out = Command::new("sh").arg("-c").arg(cmd).output().ok()?;
        if !out.status.success() {
            return None;
        }
        parse_output(&String::from_utf8_lossy(&out.stdout), meta.ty)
    }
}

/// Providers for the system-side context sources.
#[derive(Clone)]
pub struct Acquisition {
    pub system_api: Arc<dyn AcquisitionProvider>,
    pub system_cli: Arc<dyn AcquisitionProvider>,
}

impl Default for Acquisition {
    fn default() -> Self {
        let empty: Arc<dyn AcquisitionProvider> = Arc::new(FixtureProvider::default());
        Acquisition { system_api: empty.clone(), system_cli: empty }
    }
}

impl Acquisition {
    /// One fixture store serving both system sources.
    pub fn fixture(provider: Arc<FixtureProvider>) -> Self {
        Acquisition { system_api: provider.clone(), system_cli: provider }
    }

    pub fn provider(&self, src: ContextSource) -> Option<&dyn AcquisitionProvider> {
        match src {
            ContextSource::SystemApi => Some(self.system_api.as_ref()),
            ContextSource::SystemCli => Some(self.system_cli.as_ref()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Temperature;

    fn meta(ty: ContextType, acq: Option<&str>) -> ContextMetadata {
        ContextMetadata {
            ty,
            src: ContextSource::SystemCli,
            tempr: Temperature::Cold,
            acquisition: acq.map(str::to_owned),
        }
    }

    #[test]
    fn fixture_lookup_by_descriptor_then_id() {
        let p = FixtureProvider::from_json(r#"{"settings get lock": true, "battery": "87"}"#).unwrap();
        assert_eq!(p.resolve("x", &meta(ContextType::Boolean, Some("settings get lock"))), Some(Value::Bool(true)));
        assert_eq!(p.resolve("battery", &meta(ContextType::Integer, None)), Some(Value::Int(87)));
        assert_eq!(p.resolve("missing", &meta(ContextType::Integer, None)), None);
        assert_eq!(p.resolve("battery", &meta(ContextType::Boolean, None)), None);
    }

    #[test]
    fn command_output_parsing() {
        let p = CommandProvider;
        assert_eq!(p.resolve("n", &meta(ContextType::Integer, Some("echo ' 42 '"))), Some(Value::Int(42)));
        assert_eq!(
            p.resolve("l", &meta(ContextType::StringList, Some("printf 'a\\n\\nb\\n'"))),
            Some(Value::List(vec!["a".into(), "b".into()]))
        );
        assert_eq!(p.resolve("f", &meta(ContextType::Integer, Some("false"))), None);
        assert_eq!(p.resolve("f", &meta(ContextType::Integer, None)), None);
    }
}
