//! Context-space data model, canonical file format, lint and lookup.

mod lint;
mod space;
mod vector;

use std::collections::BTreeSet;

use thiserror::Error;

pub use lint::{lint_space, Finding, FindingKind, Severity};
pub use space::{
    ClassEntry, ContextMetadata, ContextSource, ContextSpace, FunctionEntry, GuiBinding,
    IntentEntry, Policy, Rule, SecurityLevel, Temperature,
};
pub use vector::{init_vector, ContextEntry, ContextVector, UpdateTrigger, VectorError};

/// A context-space document failed to parse or violated a structural invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct SchemaError {
    /// Field path of the first violation, e.g. `functions[2].policies.send.rules[0].ctx_id`.
    pub path: String,
    pub message: String,
}

impl SchemaError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaError { path: path.into(), message: message.into() }
    }
}

/// Parses a context-space document and checks its structural invariants.
///
/// Semantic problems that do not prevent materialization (unparseable
/// constraints, missing policies) are left to [`lint_space`].
pub fn parse_space(document: &[u8]) -> Result<ContextSpace, SchemaError> {
    let text = std::str::from_utf8(document)
        .map_err(|e| SchemaError::new("$", format!("document is not UTF-8: {e}")))?;
    let mut de = serde_json::Deserializer::from_str(text);
    let space: ContextSpace = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        SchemaError::new(if path == "." { "$".into() } else { path }, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| SchemaError::new("$", e.to_string()))?;
    check_structure(&space)?;
    Ok(space)
}

/// Canonical form: sorted object keys, two-space indentation, trailing newline.
pub fn serialize_space(space: &ContextSpace) -> Vec<u8> {
    // Going through `Value` sorts keys (serde_json's map is ordered).
    let value = serde_json::to_value(space).expect("context space is always representable");
    let mut out = serde_json::to_vec_pretty(&value).expect("value serialization cannot fail");
    out.push(b'\n');
    out
}

fn check_structure(space: &ContextSpace) -> Result<(), SchemaError> {
    match (&space.classes, &space.functions) {
        (Some(_), Some(_)) => {
            return Err(SchemaError::new("$", "exactly one of `classes` and `functions` may be present"))
        }
        (None, None) => {
            return Err(SchemaError::new("$", "one of `classes` or `functions` is required"))
        }
        _ => {}
    }
    if space.app_id.is_empty() {
        return Err(SchemaError::new("app_id", "must not be empty"));
    }

    let mut class_ids = BTreeSet::new();
    for (ci, class) in space.classes.iter().flatten().enumerate() {
        if !class_ids.insert(class.class_id.as_str()) {
            return Err(SchemaError::new(
                format!("classes[{ci}].class_id"),
                format!("duplicate class id `{}`", class.class_id),
            ));
        }
    }

    let mut function_ids = BTreeSet::new();
    let paths: Vec<(String, &FunctionEntry)> = match (&space.classes, &space.functions) {
        (Some(classes), _) => classes
            .iter()
            .enumerate()
            .flat_map(|(ci, c)| c.functions.iter().enumerate().map(move |(fi, f)| (format!("classes[{ci}].functions[{fi}]"), f)))
            .collect(),
        (None, Some(fs)) => fs.iter().enumerate().map(|(fi, f)| (format!("functions[{fi}]"), f)).collect(),
        (None, None) => Vec::new(),
    };
    for (base, function) in paths {
        if !function_ids.insert(function.function_id.as_str()) {
            return Err(SchemaError::new(
                format!("{base}.function_id"),
                format!("duplicate function id `{}`", function.function_id),
            ));
        }
        check_function(space, function, &base)?;
    }
    Ok(())
}

fn check_function(space: &ContextSpace, function: &FunctionEntry, base: &str) -> Result<(), SchemaError> {
    if function.function_id.is_empty() {
        return Err(SchemaError::new(format!("{base}.function_id"), "must not be empty"));
    }
    let mut intent_ids = BTreeSet::new();
    let mut fallbacks = 0;
    for (ii, intent) in function.intents.iter().enumerate() {
        let path = format!("{base}.intents[{ii}]");
        if !intent_ids.insert(intent.intent_id.as_str()) {
            return Err(SchemaError::new(
                format!("{path}.intent_id"),
                format!("duplicate intent id `{}`", intent.intent_id),
            ));
        }
        if intent.is_fallback {
            fallbacks += 1;
            if fallbacks > 1 {
                return Err(SchemaError::new(format!("{path}.is_fallback"), "more than one fallback intent"));
            }
        }
        for (pi, ctx) in intent.param_contexts.iter().enumerate() {
            if !space.contexts.contains_key(ctx) {
                return Err(SchemaError::new(
                    format!("{path}.param_contexts[{pi}]"),
                    format!("undeclared context `{ctx}`"),
                ));
            }
        }
    }
    for (intent_id, policy) in &function.policies {
        if !intent_ids.contains(intent_id.as_str()) {
            return Err(SchemaError::new(
                format!("{base}.policies.{intent_id}"),
                format!("policy for undeclared intent `{intent_id}`"),
            ));
        }
        for (ri, rule) in policy.rules.iter().enumerate() {
            if !space.contexts.contains_key(&rule.ctx_id) {
                return Err(SchemaError::new(
                    format!("{base}.policies.{intent_id}.rules[{ri}].ctx_id"),
                    format!("undeclared context `{}`", rule.ctx_id),
                ));
            }
        }
    }
    if let Some(binding) = &function.gui_binding {
        if binding.resource_id.is_empty() {
            return Err(SchemaError::new(format!("{base}.gui_binding.resource_id"), "must not be empty"));
        }
    }
    Ok(())
}

/// How to address a function entry.
#[derive(Debug, Clone, Copy)]
pub enum Selector<'a> {
    Id(&'a str),
    Qualified { class_id: &'a str, function_id: &'a str },
    /// Attributes of a concrete GUI element.
    Gui(&'a GuiBinding),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LookupError {
    #[error("selector matches both `{0}` and `{1}`")]
    Ambiguous(String, String),
}

/// Resolves a selector to a unique entry; `Ok(None)` is a miss.
pub fn lookup_function<'s>(
    space: &'s ContextSpace,
    selector: Selector<'_>,
) -> Result<Option<&'s FunctionEntry>, LookupError> {
    match selector {
        Selector::Id(id) => Ok(space.function(id)),
        Selector::Qualified { class_id, function_id } => Ok(space
            .iter_functions()
            .find(|(c, f)| *c == Some(class_id) && f.function_id == function_id)
            .map(|(_, f)| f)),
        Selector::Gui(element) => {
            let mut best: Option<(u8, &FunctionEntry)> = None;
            let mut tied: Option<&FunctionEntry> = None;
            for (_, f) in space.iter_functions() {
                let Some(rank) = f.gui_binding.as_ref().and_then(|b| b.match_rank(element)) else {
                    continue;
                };
                match best {
                    Some((top, _)) if rank < top => {}
                    Some((top, _)) if rank == top => tied = Some(f),
                    _ => {
                        best = Some((rank, f));
                        tied = None;
                    }
                }
            }
            match (best, tied) {
                (Some((_, a)), Some(b)) => {
                    Err(LookupError::Ambiguous(a.function_id.clone(), b.function_id.clone()))
                }
                (best, _) => Ok(best.map(|(_, f)| f)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
  "app_id": "clock",
  "contexts": {},
  "functions": [
    {
      "desc": "Read the current time",
      "function_id": "get_current_time",
      "sec_level": "normal"
    }
  ],
  "version": "1"
}
"#;

    #[test]
    fn minimal_space_round_trips_byte_identically() {
        let space = parse_space(MINIMAL.as_bytes()).unwrap();
        assert_eq!(String::from_utf8(serialize_space(&space)).unwrap(), MINIMAL);
    }

    #[test]
    fn serialization_is_idempotent() {
        let once = serialize_space(&parse_space(MINIMAL.as_bytes()).unwrap());
        let twice = serialize_space(&parse_space(&once).unwrap());
        assert_eq!(once, twice);
    }

    #[test]
    fn undeclared_rule_context_names_the_rule() {
        let doc = r#"{"app_id":"a","version":"1","contexts":{},"functions":[
            {"function_id":"f","sec_level":"conditional",
             "intents":[{"intent_id":"i","description":"do it"}],
             "policies":{"i":{"rules":[{"ctx_id":"foo","constraint":"foo == 1","guidance":"g"}]}}}]}"#;
        let err = parse_space(doc.as_bytes()).unwrap_err();
        assert_eq!(err.path, "functions[0].policies.i.rules[0].ctx_id");
        assert!(err.message.contains("foo"));
    }

    #[test]
    fn structural_errors() {
        let both = r#"{"app_id":"a","version":"1","contexts":{},"functions":[],"classes":[]}"#;
        assert!(parse_space(both.as_bytes()).unwrap_err().message.contains("exactly one"));
        let neither = r#"{"app_id":"a","version":"1","contexts":{}}"#;
        assert!(parse_space(neither.as_bytes()).is_err());
        let bad_enum = r#"{"app_id":"a","version":"1","functions":[{"function_id":"f","sec_level":"risky"}]}"#;
        let err = parse_space(bad_enum.as_bytes()).unwrap_err();
        assert_eq!(err.path, "functions[0].sec_level");
        let dup = r#"{"app_id":"a","version":"1","classes":[
            {"class_id":"A","functions":[{"function_id":"f","sec_level":"normal"}]},
            {"class_id":"B","functions":[{"function_id":"f","sec_level":"normal"}]}]}"#;
        let err = parse_space(dup.as_bytes()).unwrap_err();
        assert_eq!(err.path, "classes[1].functions[0].function_id");
        assert!(parse_space(b"{not json").is_err());
        assert!(parse_space(&[0xff, 0xfe]).is_err());
    }

    #[test]
    fn shuffled_keys_serialize_identically() {
        let a = r#"{"version":"1","functions":[{"sec_level":"normal","function_id":"f","desc":"d"}],"contexts":{},"app_id":"x"}"#;
        let b = r#"{"app_id":"x","contexts":{},"functions":[{"desc":"d","function_id":"f","sec_level":"normal"}],"version":"1"}"#;
        assert_eq!(
            serialize_space(&parse_space(a.as_bytes()).unwrap()),
            serialize_space(&parse_space(b.as_bytes()).unwrap())
        );
    }

    fn classed_space() -> ContextSpace {
        let doc = r#"{"app_id":"gui","version":"1","classes":[
            {"class_id":"Compose","functions":[{"function_id":"compose.send","sec_level":"normal",
              "gui_binding":{"package":"com.mail","class":"android.widget.Button","resource_id":"send"}}]},
            {"class_id":"Chat","functions":[{"function_id":"chat.send","sec_level":"normal",
              "gui_binding":{"package":"com.mail","class":"","resource_id":"send"}}]}]}"#;
        parse_space(doc.as_bytes()).unwrap()
    }

    #[test]
    fn lookup_by_id_and_class() {
        let space = classed_space();
        assert_eq!(lookup_function(&space, Selector::Id("chat.send")).unwrap().unwrap().function_id, "chat.send");
        assert!(lookup_function(&space, Selector::Id("nope")).unwrap().is_none());
        let q = Selector::Qualified { class_id: "Compose", function_id: "compose.send" };
        assert_eq!(lookup_function(&space, q).unwrap().unwrap().function_id, "compose.send");
        let wrong = Selector::Qualified { class_id: "Chat", function_id: "compose.send" };
        assert!(lookup_function(&space, wrong).unwrap().is_none());
    }

    #[test]
    fn gui_lookup_prefers_exact_binding() {
        let space = classed_space();
        let exact = GuiBinding::new("com.mail", "android.widget.Button", "send");
        assert_eq!(lookup_function(&space, Selector::Gui(&exact)).unwrap().unwrap().function_id, "compose.send");
        let other_class = GuiBinding::new("com.mail", "android.widget.ImageView", "send");
        assert_eq!(
            lookup_function(&space, Selector::Gui(&other_class)).unwrap().unwrap().function_id,
            "chat.send"
        );
        let other_pkg = GuiBinding::new("com.other", "android.widget.Button", "send");
        assert!(lookup_function(&space, Selector::Gui(&other_pkg)).unwrap().is_none());
    }

    #[test]
    fn duplicate_bindings_are_ambiguous() {
        let mut space = ContextSpace::new("a", "1");
        for id in ["f", "g"] {
            let mut f = FunctionEntry::new(id, SecurityLevel::Normal);
            f.gui_binding = Some(GuiBinding::new("p", "c", "r"));
            space.functions.as_mut().unwrap().push(f);
        }
        let el = GuiBinding::new("p", "c", "r");
        assert!(matches!(lookup_function(&space, Selector::Gui(&el)), Err(LookupError::Ambiguous(..))));
    }
}
