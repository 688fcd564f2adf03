//! Structural differences between canonical space documents.

use std::collections::BTreeSet;

use serde_json::Value;

/// Keys that identify elements of arrays of objects.
const ID_KEYS: &[&str] = &["function_id", "class_id", "intent_id"];

fn id_key(items: &[Value]) -> Option<&'static str> {
    ID_KEYS.iter().copied().find(|k| {
        let mut seen = BTreeSet::new();
        items.iter().all(|v| v.get(*k).and_then(Value::as_str).is_some_and(|id| seen.insert(id.to_owned())))
    })
}

fn join(base: &str, key: &str) -> String {
    if base.is_empty() {
        key.to_owned()
    } else {
        format!("{base}.{key}")
    }
}

fn walk(base: &str, a: Option<&Value>, b: Option<&Value>, out: &mut Vec<String>) {
    match (a, b) {
        (Some(Value::Object(x)), Some(Value::Object(y))) => {
            let keys: BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            for k in keys {
                walk(&join(base, k), x.get(k), y.get(k), out);
            }
        }
        (Some(Value::Array(x)), Some(Value::Array(y))) => {
            let key = match (x.is_empty(), y.is_empty()) {
                (true, true) => None,
                (true, false) => id_key(y),
                (false, true) => id_key(x),
                (false, false) => id_key(x).filter(|k| id_key(y) == Some(*k)),
            };
            match key {
                Some(k) => {
                    let find = |items: &[Value], id: &str| items.iter().find(|v| v[k] == id).cloned();
                    let ids: BTreeSet<&str> = x.iter().chain(y).filter_map(|v| v[k].as_str()).collect();
                    for id in ids {
                        walk(&format!("{base}[{k}={id}]"), find(x, id).as_ref(), find(y, id).as_ref(), out);
                    }
                }
                _ => {
                    for i in 0..x.len().max(y.len()) {
                        walk(&format!("{base}[{i}]"), x.get(i), y.get(i), out);
                    }
                }
            }
        }
        (x, y) if x == y => {}
        _ => out.push(if base.is_empty() { "$".into() } else { base.to_owned() }),
    }
}

/// Paths at which `a` and `b` differ. Arrays whose elements carry a unique
/// `function_id`, `class_id` or `intent_id` are matched by that id, so
/// removing one entry reports only that entry.
pub fn diff_paths(a: &Value, b: &Value) -> Vec<String> {
    let mut out = Vec::new();
    walk("", Some(a), Some(b), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keyed_arrays_report_only_changed_entries() {
        let a = json!({"version": "1", "functions": [{"function_id": "a", "x": 1}, {"function_id": "b"}, {"function_id": "c"}]});
        let b = json!({"version": "2", "functions": [{"function_id": "a", "x": 2}, {"function_id": "c"}, {"function_id": "d"}]});
        assert_eq!(
            diff_paths(&a, &b),
            ["functions[function_id=a].x", "functions[function_id=b]", "functions[function_id=d]", "version"]
        );
    }

    #[test]
    fn plain_arrays_compare_by_index() {
        assert_eq!(diff_paths(&json!({"l": [1, 2]}), &json!({"l": [1, 3, 4]})), ["l[1]", "l[2]"]);
        assert!(diff_paths(&json!({"a": [1]}), &json!({"a": [1]})).is_empty());
        assert_eq!(diff_paths(&json!(1), &json!(2)), ["$"]);
    }
}
