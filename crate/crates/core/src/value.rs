//! Typed context values.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Declared type of a context value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextType {
    String,
    Boolean,
    Integer,
    Float,
    StringList,
}

impl ContextType {
    pub fn is_numeric(self) -> bool {
        matches!(self, ContextType::Integer | ContextType::Float)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContextType::String => "string",
            ContextType::Boolean => "boolean",
            ContextType::Integer => "integer",
            ContextType::Float => "float",
            ContextType::StringList => "string_list",
        }
    }
}

impl fmt::Display for ContextType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A runtime context value.
///
/// JSON mapping: strings, booleans, integral numbers, other numbers and
/// arrays of strings.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Str(String),
    Bool(bool),
    Int(i64),
    Float(f64),
    List(Vec<String>),
}

impl Value {
    pub fn type_of(&self) -> ContextType {
        match self {
            Value::Str(_) => ContextType::String,
            Value::Bool(_) => ContextType::Boolean,
            Value::Int(_) => ContextType::Integer,
            Value::Float(_) => ContextType::Float,
            Value::List(_) => ContextType::StringList,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(x) => Some(*x),
            _ => None,
        }
    }

    pub fn from_json(json: &serde_json::Value) -> Option<Value> {
        match json {
            serde_json::Value::String(s) => Some(Value::Str(s.clone())),
            serde_json::Value::Bool(b) => Some(Value::Bool(*b)),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Some(Value::Int(i))
                } else {
                    n.as_f64().map(Value::Float)
                }
            }
            serde_json::Value::Array(items) => items
                .iter()
                .map(|v| v.as_str().map(str::to_owned))
                .collect::<Option<Vec<_>>>()
                .map(Value::List),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Str(s) => serde_json::Value::String(s.clone()),
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Float(x) => serde_json::Number::from_f64(*x)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Value::List(items) => serde_json::Value::from(items.clone()),
        }
    }

    /// Converts the value to `target` when no information is lost.
    ///
    /// Accepted conversions besides identity: integer to float, numeric strings
    /// to integer/float, integral floats to integer, a lone string to a
    /// one-element list, and `"true"`/`"false"` to boolean.
    pub fn coerce(self, target: ContextType) -> Option<Value> {
        if self.type_of() == target {
            return Some(self);
        }
        match (self, target) {
            (Value::Int(i), ContextType::Float) => Some(Value::Float(i as f64)),
            (Value::Float(x), ContextType::Integer)
                if x.fract() == 0.0 && x.abs() < 9.007_199_254_740_992e15 =>
            {
                Some(Value::Int(x as i64))
            }
            (Value::Str(s), ContextType::Integer) => s.trim().parse::<i64>().ok().map(Value::Int),
            (Value::Str(s), ContextType::Float) => s
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Value::Float),
            (Value::Str(s), ContextType::Boolean) => match s.trim() {
                "true" => Some(Value::Bool(true)),
                "false" => Some(Value::Bool(false)),
                _ => None,
            },
            (Value::Str(s), ContextType::StringList) => Some(Value::List(vec![s])),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let json = serde_json::Value::deserialize(deserializer)?;
        Value::from_json(&json).ok_or_else(|| {
            serde::de::Error::custom("expected string, boolean, number or list of strings")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn json_mapping() {
        assert_eq!(Value::from_json(&json!(3)), Some(Value::Int(3)));
        assert_eq!(Value::from_json(&json!(3.5)), Some(Value::Float(3.5)));
        assert_eq!(
            Value::from_json(&json!(["a", "b"])),
            Some(Value::List(vec!["a".into(), "b".into()]))
        );
        assert_eq!(Value::from_json(&json!([1])), None);
        assert_eq!(Value::from_json(&json!(null)), None);
    }

    #[test]
    fn lossless_coercions_only() {
        assert_eq!(Value::Str("200".into()).coerce(ContextType::Integer), Some(Value::Int(200)));
        assert_eq!(Value::Str("2.5".into()).coerce(ContextType::Integer), None);
        assert_eq!(Value::Float(4.0).coerce(ContextType::Integer), Some(Value::Int(4)));
        assert_eq!(Value::Float(4.5).coerce(ContextType::Integer), None);
        assert_eq!(Value::Int(2).coerce(ContextType::Float), Some(Value::Float(2.0)));
        assert_eq!(Value::Bool(true).coerce(ContextType::String), None);
    }
}
