//! Brute-force reference semantics for constraints over small universes.

use ctxguard_core::dsl::{evaluate, parse_constraint, Operator, TriBool};
use ctxguard_core::model::{init_vector, ContextMetadata, ContextSource, ContextSpace, ContextVector, Temperature};
use ctxguard_core::{ContextType, Value};

pub const ALPHABET: [&str; 4] = ["a", "b", "c", "d"];

/// Every list of length <= `max_len` over the alphabet (order and repeats kept).
pub fn lists(max_len: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Vec<String>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for l in &frontier {
            for s in ALPHABET {
                let mut m = l.clone();
                m.push(s.to_string());
                next.push(m);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Strings over the alphabet of length <= 2, including the empty string.
pub fn strings() -> Vec<String> {
    lists(2).into_iter().map(|l| l.concat()).collect()
}

pub fn universe() -> Vec<Value> {
    let mut u: Vec<Value> = (-2..=2).map(Value::Int).collect();
    u.extend([-1.5, 0.0, 0.5, 2.0].map(Value::Float));
    u.extend([true, false].map(Value::Bool));
    u.extend(strings().into_iter().map(Value::Str));
    u.extend(lists(3).into_iter().map(Value::List));
    u
}

fn num(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Float(x) => Some(*x),
        _ => None,
    }
}

fn mask(items: &[String]) -> u8 {
    items.iter().fold(0, |m, s| m | 1 << ALPHABET.iter().position(|a| a == s).expect("alphabet symbol"))
}

fn substring(hay: &str, needle: &str) -> bool {
    let (h, n) = (hay.as_bytes(), needle.as_bytes());
    if n.is_empty() {
        return true;
    }
    (0..h.len()).any(|i| i + n.len() <= h.len() && (0..n.len()).all(|k| h[i + k] == n[k]))
}

/// Reference truth value; `false` for operand kinds the operator does not cover.
pub fn oracle(op: &str, lhs: &Value, rhs: &Value) -> bool {
    let same_kind = std::mem::discriminant(lhs) == std::mem::discriminant(rhs);
    match op {
        "==" | "!=" => {
            let eq = match (num(lhs), num(rhs)) {
                (Some(a), Some(b)) => Some(a == b),
                _ if same_kind => Some(lhs == rhs),
                _ => None,
            };
            match eq {
                Some(e) => (op == "==") == e,
                None => false,
            }
        }
        "<" | "<=" | ">" | ">=" => match (num(lhs), num(rhs)) {
            (Some(a), Some(b)) => match op {
                "<" => a < b,
                "<=" => a <= b,
                ">" => a > b,
                _ => a >= b,
            },
            _ => false,
        },
        "in" | "not_in" => match (lhs, rhs) {
            (Value::Str(s), Value::List(l)) => {
                let hit = l.iter().any(|x| x == s);
                (op == "in") == hit
            }
            _ => false,
        },
        "subset_of" => match (lhs, rhs) {
            (Value::List(a), Value::List(b)) => mask(a) & !mask(b) == 0,
            _ => false,
        },
        "contains" => match (lhs, rhs) {
            (Value::Str(h), Value::Str(n)) => substring(h, n),
            (Value::List(l), Value::Str(n)) => l.iter().any(|x| x == n),
            _ => false,
        },
        other => panic!("unknown operator {other}"),
    }
}

pub fn type_name(ty: ContextType) -> &'static str {
    ty.as_str()
}

/// A space with one `l_<type>` and one `r_<type>` context per value type.
pub fn typed_space() -> ContextSpace {
    let mut s = ContextSpace::new("oracle", "1");
    for ty in [ContextType::String, ContextType::Boolean, ContextType::Integer, ContextType::Float, ContextType::StringList] {
        for side in ["l", "r"] {
            s.contexts.insert(
                format!("{side}_{}", type_name(ty)),
                ContextMetadata::new(ty, ContextSource::UserRequest, Temperature::Warm),
            );
        }
    }
    s
}

/// Source text of a literal operand.
pub fn literal(v: &Value) -> String {
    match v {
        Value::Str(s) => format!("{s:?}"),
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Float(x) => format!("{x:?}"),
        Value::List(items) => format!("[{}]", items.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(", ")),
    }
}

pub struct Mismatch {
    pub text: String,
    pub lhs: Value,
    pub rhs: Value,
    pub expected: bool,
    pub actual: TriBool,
}

/// Evaluates every operator on every value pair, with the right operand
/// both as a literal and as a context reference. Returns (cases, mismatches).
pub fn run_exhaustive() -> (usize, Vec<Mismatch>) {
    let space = typed_space();
    let base = init_vector(&space);
    let values = universe();
    let mut cases = 0;
    let mut mismatches = Vec::new();
    for op in Operator::ALL {
        let sym = op.symbol();
        for lhs in &values {
            let lname = format!("l_{}", type_name(lhs.type_of()));
            for rhs in &values {
                let rname = format!("r_{}", type_name(rhs.type_of()));
                let mut cv: ContextVector = base.clone();
                cv.set(&lname, lhs.clone()).expect("declared");
                cv.set(&rname, rhs.clone()).expect("declared");
                let expected = oracle(sym, lhs, rhs);
                for text in [format!("{lname} {sym} {}", literal(rhs)), format!("{lname} {sym} {rname}")] {
                    cases += 1;
                    let ast = parse_constraint(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
                    let actual = evaluate(&ast, &cv);
                    if actual != TriBool::from(expected) {
                        mismatches.push(Mismatch { text, lhs: lhs.clone(), rhs: rhs.clone(), expected, actual });
                    }
                }
            }
        }
    }
    (cases, mismatches)
}
