#[path = "support/dsl_oracle.rs"]
mod dsl_oracle;

use ctxguard_core::dsl::{apply, evaluate_with, parse_constraint, Operator, TriBool};
use ctxguard_core::Value;
use dsl_oracle::{lists, literal, oracle, run_exhaustive};
use proptest::prelude::*;

#[test]
fn evaluator_matches_oracle_exhaustively() {
    let (cases, mismatches) = run_exhaustive();
    assert!(cases > 100_000, "{cases}");
    for m in mismatches.iter().take(10) {
        eprintln!("{}: lhs={} rhs={} expected={} actual={:?}", m.text, m.lhs, m.rhs, m.expected, m.actual);
    }
    assert!(mismatches.is_empty(), "{} mismatches", mismatches.len());
}

#[test]
fn subset_of_matches_set_inclusion_on_all_pairs() {
    let all = lists(4);
    for a in &all {
        for b in &all {
            let expected = a.iter().all(|x| b.iter().any(|y| y == x));
            let got = apply(Operator::SubsetOf, &Value::List(a.clone()), &Value::List(b.clone()));
            assert_eq!(got, Some(expected), "{a:?} subset_of {b:?}");
        }
    }
}

#[test]
fn subset_examples() {
    let l = |v: &[&str]| Value::List(v.iter().map(|s| s.to_string()).collect());
    assert_eq!(apply(Operator::SubsetOf, &l(&["a", "b"]), &l(&["a", "b", "c"])), Some(true));
    assert_eq!(apply(Operator::SubsetOf, &l(&["a", "b", "c"]), &l(&["a", "b"])), Some(false));
}

fn small_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        (-3i64..=3).prop_map(Value::Int),
        prop::sample::select(vec![-1.5, 0.0, 0.5, 3.0]).prop_map(Value::Float),
        any::<bool>().prop_map(Value::Bool),
        "[a-d]{0,3}".prop_map(Value::Str),
        prop::collection::vec("[a-d]", 0..4).prop_map(Value::List),
    ]
}

fn eval_pair(text: &str, lhs: Option<&Value>, rhs: Option<&Value>) -> TriBool {
    let ast = parse_constraint(text).unwrap();
    evaluate_with(&ast, |id| if id == "x" { lhs } else { rhs })
}

proptest! {
    #[test]
    fn negation_duality(a in small_value(), b in small_value()) {
        let well_typed = |op: Operator| ctxguard_core::dsl::operator_accepts(op, a.type_of(), b.type_of());
        if well_typed(Operator::Eq) {
            let eq = eval_pair("x == y", Some(&a), Some(&b));
            let ne = eval_pair("x != y", Some(&a), Some(&b));
            prop_assert_ne!(eq, TriBool::Unknown);
            prop_assert_eq!(eq == TriBool::True, ne == TriBool::False);
        }
        if well_typed(Operator::In) {
            let i = eval_pair("x in y", Some(&a), Some(&b));
            let n = eval_pair("x not_in y", Some(&a), Some(&b));
            prop_assert_eq!(i == TriBool::True, n == TriBool::False);
        }
    }

    #[test]
    fn unknown_iff_unset(a in small_value(), b in small_value(), set_a: bool, set_b: bool, op in 0usize..10) {
        let op = Operator::ALL[op];
        let text = format!("x {} y", op.symbol());
        let got = eval_pair(&text, set_a.then_some(&a), set_b.then_some(&b));
        prop_assert_eq!(got == TriBool::Unknown, !(set_a && set_b));
        if set_a && set_b {
            prop_assert_eq!(got, TriBool::from(oracle(op.symbol(), &a, &b)));
        }
    }

    #[test]
    fn display_reparses(b in small_value(), op in 0usize..10) {
        let text = format!("x {} {}", Operator::ALL[op].symbol(), literal(&b));
        let ast = parse_constraint(&text).unwrap();
        prop_assert_eq!(parse_constraint(&ast.to_string()).unwrap(), ast);
    }

    #[test]
    fn evaluation_is_deterministic(a in small_value(), b in small_value(), op in 0usize..10) {
        let text = format!("x {} y", Operator::ALL[op].symbol());
        prop_assert_eq!(eval_pair(&text, Some(&a), Some(&b)), eval_pair(&text, Some(&a), Some(&b)));
    }
}
