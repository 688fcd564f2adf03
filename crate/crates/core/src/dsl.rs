//! Rule constraint language: `subject OP operand`.
//!
//! ```text
//! constraint := ident op operand
//! operand    := ident | string | number | boolean | list
//! list       := "[" (string ("," string)*)? "]"
//! op         := == | != | < | <= | > | >= | in | not_in | subset_of | contains
//! ```
//!
//! Identifiers (`[a-z_][a-z0-9_.]*`) name contexts on either side; strings are
//! double-quoted with backslash escapes.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::model::{ContextMetadata, ContextVector};
use crate::value::{ContextType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    NotIn,
    SubsetOf,
    Contains,
}

impl Operator {
    pub const ALL: [Operator; 10] = [
        Operator::Eq,
        Operator::Ne,
        Operator::Lt,
        Operator::Le,
        Operator::Gt,
        Operator::Ge,
        Operator::In,
        Operator::NotIn,
        Operator::SubsetOf,
        Operator::Contains,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Eq => "==",
            Operator::Ne => "!=",
            Operator::Lt => "<",
            Operator::Le => "<=",
            Operator::Gt => ">",
            Operator::Ge => ">=",
            Operator::In => "in",
            Operator::NotIn => "not_in",
            Operator::SubsetOf => "subset_of",
            Operator::Contains => "contains",
        }
    }

    fn from_word(word: &str) -> Option<Operator> {
        Operator::ALL.into_iter().find(|op| op.symbol() == word)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    ContextRef(String),
    Literal(Value),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::ContextRef(id) => f.write_str(id),
            Operand::Literal(Value::Str(s)) => write_string(f, s),
            Operand::Literal(Value::Bool(b)) => write!(f, "{b}"),
            Operand::Literal(Value::Int(i)) => write!(f, "{i}"),
            Operand::Literal(Value::Float(x)) => write!(f, "{x:?}"),
            Operand::Literal(Value::List(items)) => {
                f.write_str("[")?;
                for (i, s) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write_string(f, s)?;
                }
                f.write_str("]")
            }
        }
    }
}

fn write_string(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            '\r' => f.write_str("\\r")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

/// A parsed constraint. The left-hand side is always a context reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintAst {
    pub subject: String,
    pub op: Operator,
    pub rhs: Operand,
}

impl ConstraintAst {
    /// Every context id the constraint reads, subject first.
    pub fn context_refs(&self) -> Vec<&str> {
        let mut refs = vec![self.subject.as_str()];
        if let Operand::ContextRef(id) = &self.rhs {
            if id != &self.subject {
                refs.push(id);
            }
        }
        refs
    }
}

impl fmt::Display for ConstraintAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.subject, self.op, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("unterminated string starting at {0}")]
    UnterminatedString(usize),
    #[error("invalid escape `\\{0}`")]
    InvalidEscape(char),
    #[error("trailing tokens after operand at {0}")]
    TrailingTokens(usize),
    #[error("left-hand side must be a context identifier")]
    LhsNotIdentifier,
    #[error("unexpected character `{0}` at {1}")]
    UnexpectedChar(char, usize),
    #[error("unexpected end of constraint")]
    UnexpectedEnd,
    #[error("invalid number `{0}`")]
    InvalidNumber(String),
    #[error("list elements must be string literals")]
    NonStringListElement,
    #[error("`{0}` is reserved and cannot name a context")]
    ReservedWord(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Str(String),
    Int(i64),
    Float(f64),
    LBracket,
    RBracket,
    Comma,
    Symbol(String),
}

fn lex(text: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '[' => {
                tokens.push((pos, Token::LBracket));
                i += 1;
            }
            ']' => {
                tokens.push((pos, Token::RBracket));
                i += 1;
            }
            ',' => {
                tokens.push((pos, Token::Comma));
                i += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    let Some(&(_, c)) = chars.get(i) else {
                        return Err(ParseError::UnterminatedString(pos));
                    };
                    i += 1;
                    match c {
                        '"' => break,
                        '\\' => {
                            let Some(&(_, e)) = chars.get(i) else {
                                return Err(ParseError::UnterminatedString(pos));
                            };
                            i += 1;
                            s.push(match e {
                                '"' => '"',
                                '\\' => '\\',
                                'n' => '\n',
                                't' => '\t',
                                'r' => '\r',
                                '/' => '/',
                                other => return Err(ParseError::InvalidEscape(other)),
                            });
                        }
                        c => s.push(c),
                    }
                }
                tokens.push((pos, Token::Str(s)));
            }
            '=' | '!' | '<' | '>' | '~' | '&' | '|' => {
                let start = i;
                while i < chars.len() && matches!(chars[i].1, '=' | '!' | '<' | '>' | '~' | '&' | '|') {
                    i += 1;
                }
                let sym: String = chars[start..i].iter().map(|(_, c)| c).collect();
                tokens.push((pos, Token::Symbol(sym)));
            }
            c if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|(_, d)| d.is_ascii_digit())) => {
                let start = i;
                i += 1;
                while i < chars.len()
                    && (chars[i].1.is_ascii_alphanumeric() || matches!(chars[i].1, '.' | '+' | '-'))
                {
                    // a sign is only part of a number right after an exponent marker
                    if matches!(chars[i].1, '+' | '-') && !matches!(chars[i - 1].1, 'e' | 'E') {
                        break;
                    }
                    i += 1;
                }
                let lit: String = chars[start..i].iter().map(|(_, c)| c).collect();
                let token = if lit.contains(['.', 'e', 'E']) {
                    lit.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .map(Token::Float)
                } else {
                    lit.parse::<i64>().ok().map(Token::Int)
                };
                tokens.push((pos, token.ok_or(ParseError::InvalidNumber(lit))?));
            }
            c if c.is_ascii_lowercase() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].1.is_ascii_lowercase()
                        || chars[i].1.is_ascii_digit()
                        || matches!(chars[i].1, '_' | '.'))
                {
                    i += 1;
                }
                let word: String = chars[start..i].iter().map(|(_, c)| c).collect();
                tokens.push((pos, Token::Ident(word)));
            }
            other => return Err(ParseError::UnexpectedChar(other, pos)),
        }
    }
    Ok(tokens)
}

fn is_reserved(word: &str) -> bool {
    word == "true" || word == "false" || Operator::from_word(word).is_some()
}

/// Parses constraint text into an AST.
pub fn parse_constraint(text: &str) -> Result<ConstraintAst, ParseError> {
    let tokens = lex(text)?;
    let mut it = tokens.into_iter().peekable();

    let subject = match it.next() {
        Some((_, Token::Ident(w))) if !is_reserved(&w) => w,
        Some((_, Token::Ident(w))) if Operator::from_word(&w).is_some() => {
            return Err(ParseError::LhsNotIdentifier)
        }
        None => return Err(ParseError::UnexpectedEnd),
        Some(_) => return Err(ParseError::LhsNotIdentifier),
    };

    let op = match it.next() {
        Some((_, Token::Symbol(s))) => match s.as_str() {
            "==" => Operator::Eq,
            "!=" => Operator::Ne,
            "<" => Operator::Lt,
            "<=" => Operator::Le,
            ">" => Operator::Gt,
            ">=" => Operator::Ge,
            _ => return Err(ParseError::UnknownOperator(s)),
        },
        Some((_, Token::Ident(w))) => {
            Operator::from_word(&w).ok_or(ParseError::UnknownOperator(w))?
        }
        Some((pos, _)) => return Err(ParseError::UnknownOperator(format!("<token at {pos}>"))),
        None => return Err(ParseError::UnexpectedEnd),
    };

    let rhs = match it.next() {
        Some((_, Token::Ident(w))) => match w.as_str() {
            "true" => Operand::Literal(Value::Bool(true)),
            "false" => Operand::Literal(Value::Bool(false)),
            w if is_reserved(w) => return Err(ParseError::ReservedWord(w.to_owned())),
            _ => Operand::ContextRef(w),
        },
        Some((_, Token::Str(s))) => Operand::Literal(Value::Str(s)),
        Some((_, Token::Int(i))) => Operand::Literal(Value::Int(i)),
        Some((_, Token::Float(x))) => Operand::Literal(Value::Float(x)),
        Some((_, Token::LBracket)) => {
            let mut items = Vec::new();
            if matches!(it.peek(), Some((_, Token::RBracket))) {
                it.next();
            } else {
                loop {
                    match it.next() {
                        Some((_, Token::Str(s))) => items.push(s),
                        Some(_) => return Err(ParseError::NonStringListElement),
                        None => return Err(ParseError::UnexpectedEnd),
                    }
                    match it.next() {
                        Some((_, Token::Comma)) => continue,
                        Some((_, Token::RBracket)) => break,
                        Some((pos, _)) => return Err(ParseError::UnexpectedChar(',', pos)),
                        None => return Err(ParseError::UnexpectedEnd),
                    }
                }
            }
            Operand::Literal(Value::List(items))
        }
        Some((pos, Token::Symbol(s))) => {
            return Err(ParseError::UnexpectedChar(s.chars().next().unwrap_or('?'), pos))
        }
        Some((pos, _)) => return Err(ParseError::UnexpectedChar(']', pos)),
        None => return Err(ParseError::UnexpectedEnd),
    };

    if let Some((pos, _)) = it.next() {
        return Err(ParseError::TrailingTokens(pos));
    }
    Ok(ConstraintAst { subject, op, rhs })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("unresolved context reference `{0}`")]
    Unresolved(String),
    #[error("operator `{op}` is not defined for {lhs} and {rhs}")]
    Mismatch { op: Operator, lhs: ContextType, rhs: ContextType },
}

/// Whether `op` is defined for the operand types.
pub fn operator_accepts(op: Operator, lhs: ContextType, rhs: ContextType) -> bool {
    use ContextType::*;
    match op {
        Operator::Eq | Operator::Ne => lhs == rhs || (lhs.is_numeric() && rhs.is_numeric()),
        Operator::Lt | Operator::Le | Operator::Gt | Operator::Ge => {
            lhs.is_numeric() && rhs.is_numeric()
        }
        Operator::In | Operator::NotIn => lhs == String && rhs == StringList,
        Operator::SubsetOf => lhs == StringList && rhs == StringList,
        Operator::Contains => matches!((lhs, rhs), (String, String) | (StringList, String)),
    }
}

/// Checks operand types against the declared context types.
pub fn typecheck(
    ast: &ConstraintAst,
    table: &BTreeMap<String, ContextMetadata>,
) -> Result<(), TypeError> {
    let resolve = |id: &str| {
        table.get(id).map(|m| m.ty).ok_or_else(|| TypeError::Unresolved(id.to_owned()))
    };
    let lhs = resolve(&ast.subject)?;
    let rhs = match &ast.rhs {
        Operand::ContextRef(id) => resolve(id)?,
        Operand::Literal(v) => v.type_of(),
    };
    if operator_accepts(ast.op, lhs, rhs) {
        Ok(())
    } else {
        Err(TypeError::Mismatch { op: ast.op, lhs, rhs })
    }
}

/// Three-valued truth: `Unknown` when a referenced context is unset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TriBool {
    True,
    False,
    Unknown,
}

impl From<bool> for TriBool {
    fn from(b: bool) -> Self {
        if b {
            TriBool::True
        } else {
            TriBool::False
        }
    }
}

impl TriBool {
    pub fn as_str(self) -> &'static str {
        match self {
            TriBool::True => "true",
            TriBool::False => "false",
            TriBool::Unknown => "unknown",
        }
    }
}

/// Evaluates against the context vector.
pub fn evaluate(ast: &ConstraintAst, cv: &ContextVector) -> TriBool {
    evaluate_with(ast, |id| cv.get(id))
}

/// Evaluates with an arbitrary value source; `None` means Unset.
pub fn evaluate_with<'v>(
    ast: &ConstraintAst,
    lookup: impl Fn(&str) -> Option<&'v Value>,
) -> TriBool {
    let Some(lhs) = lookup(&ast.subject) else {
        return TriBool::Unknown;
    };
    let rhs = match &ast.rhs {
        Operand::ContextRef(id) => match lookup(id) {
            Some(v) => v,
            None => return TriBool::Unknown,
        },
        Operand::Literal(v) => v,
    };
    apply(ast.op, lhs, rhs).map_or(TriBool::False, TriBool::from)
}

/// Operator semantics on concrete values; `None` on a type mismatch.
pub fn apply(op: Operator, lhs: &Value, rhs: &Value) -> Option<bool> {
    match op {
        Operator::Eq => equals(lhs, rhs),
        Operator::Ne => equals(lhs, rhs).map(|b| !b),
        Operator::Lt | Operator::Le | Operator::Gt | Operator::Ge => {
            let ord = match (lhs, rhs) {
                (Value::Int(a), Value::Int(b)) => a.cmp(b),
                _ => lhs.as_f64()?.partial_cmp(&rhs.as_f64()?)?,
            };
            Some(match op {
                Operator::Lt => ord.is_lt(),
                Operator::Le => ord.is_le(),
                Operator::Gt => ord.is_gt(),
                _ => ord.is_ge(),
            })
        }
        Operator::In | Operator::NotIn => match (lhs, rhs) {
            (Value::Str(s), Value::List(items)) => {
                Some(items.contains(s) == (op == Operator::In))
            }
            _ => None,
        },
        Operator::SubsetOf => match (lhs, rhs) {
            (Value::List(a), Value::List(b)) => Some(a.iter().all(|x| b.contains(x))),
            _ => None,
        },
        Operator::Contains => match (lhs, rhs) {
            (Value::Str(hay), Value::Str(needle)) => Some(hay.contains(needle.as_str())),
            (Value::List(items), Value::Str(needle)) => Some(items.contains(needle)),
            _ => None,
        },
    }
}

fn equals(lhs: &Value, rhs: &Value) -> Option<bool> {
    match (lhs, rhs) {
        (Value::Int(a), Value::Int(b)) => Some(a == b),
        (Value::Str(a), Value::Str(b)) => Some(a == b),
        (Value::Bool(a), Value::Bool(b)) => Some(a == b),
        (Value::List(a), Value::List(b)) => Some(a == b),
        _ => Some(lhs.as_f64()? == rhs.as_f64()?),
    }
}
