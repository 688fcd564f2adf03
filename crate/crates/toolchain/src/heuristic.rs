//! Keyword fallback used by the stub provider for subjects without canned
//! responses.

use serde_json::{json, Map, Value};

use crate::provider::{ProviderError, ReasoningRequest, Stage};

const DANGEROUS: &[&str] = &["delete", "destroy", "erase", "factory", "format", "remove", "reset", "uninstall", "wipe"];
const CONDITIONAL: &[&str] = &[
    "book", "buy", "call", "create", "email", "forward", "install", "message", "modify", "pay", "post", "purchase",
    "send", "set", "share", "transfer", "update", "upload", "write",
];

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

fn ident(text: &str) -> String {
    let s: String = text.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
    if s.starts_with(|c: char| c.is_ascii_digit()) {
        format!("_{s}")
    } else {
        s
    }
}

fn doc_words(doc: &Value) -> Vec<String> {
    let mut w = words(doc["name"].as_str().unwrap_or_default());
    w.extend(words(doc["description"].as_str().unwrap_or_default()));
    w
}

fn context_type(ty: &str) -> &'static str {
    match ty.to_lowercase().as_str() {
        "int" | "integer" | "long" => "integer",
        "float" | "double" | "number" => "float",
        "bool" | "boolean" => "boolean",
        "list" | "array" | "string_list" | "list<string>" => "string_list",
        _ => "string",
    }
}

fn classify(doc: &Value) -> Value {
    let w = doc_words(doc);
    let has = |set: &[&str]| w.iter().any(|x| set.contains(&x.as_str()));
    let level = if has(DANGEROUS) {
        "dangerous"
    } else if has(CONDITIONAL) {
        "conditional"
    } else {
        "normal"
    };
    json!({"sec_level": level})
}

fn intents(doc: &Value) -> Value {
    json!({"intents": [{
        "intent_id": "as_requested",
        "description": doc["description"].as_str().unwrap_or_default(),
    }]})
}

/// Each parameter must match what the user asked for.
fn policy(doc: &Value) -> Value {
    let name = ident(doc["name"].as_str().unwrap_or_default());
    let mut rules = Vec::new();
    let mut contexts = Map::new();
    for p in doc["parameters"].as_array().into_iter().flatten() {
        let pname = p["name"].as_str().unwrap_or_default();
        let ty = context_type(p["type"].as_str().unwrap_or_default());
        let actual = format!("{name}_{}", ident(pname));
        let requested = format!("{actual}_requested");
        let op = match ty {
            "integer" | "float" => "<=",
            "string_list" => "subset_of",
            _ => "==",
        };
        rules.push(json!({
            "ctx_id": actual,
            "constraint": format!("{actual} {op} {requested}"),
            "guidance": format!("`{pname}` must match the user's request"),
        }));
        contexts.insert(actual, json!({"type": ty, "src": "func_params", "acquisition": pname}));
        contexts.insert(requested, json!({"type": ty, "src": "user_request"}));
    }
    json!({"rules": rules, "contexts": contexts})
}

/// Lines that register a click handler and name an `R.id` resource.
fn handlers(inputs: &Value) -> Value {
    let file = inputs["file"].as_str().unwrap_or_default();
    let stem = file.rsplit('/').next().unwrap_or(file).split('.').next().unwrap_or(file);
    let package = inputs["package"].as_str().unwrap_or("*");
    let content = inputs["content"].as_str().unwrap_or_default();
    let mut out = Vec::new();
    for line in content.lines().filter(|l| l.to_lowercase().contains("onclick")) {
        let Some(pos) = line.find("R.id.") else { continue };
        let id: String = line[pos + 5..].chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
        if id.is_empty() || out.iter().any(|h: &Value| h["function_id"] == id.as_str()) {
            continue;
        }
        out.push(json!({
            "binding": {"package": package, "class": "*", "resource_id": format!("{package}:id/{id}")},
            "handler": format!("{stem}.{id}"),
            "function_id": ident(&id),
            "description": format!("handle taps on {}", id.replace('_', " ")),
            "excerpt": line.trim(),
        }));
    }
    json!({"handlers": out})
}

pub(crate) fn respond(request: &ReasoningRequest) -> Result<Value, ProviderError> {
    let doc = &request.inputs["doc"];
    Ok(match request.stage {
        Stage::Classify => classify(doc),
        Stage::Intents => intents(doc),
        Stage::Policy => policy(doc),
        Stage::Handlers => handlers(&request.inputs),
        Stage::Rationale => json!({"rationale": ""}),
    })
}
