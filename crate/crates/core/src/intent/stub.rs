//! Deterministic offline providers: a keyword-overlap extractor and a hashed
//! bag-of-words embedder.
//!
//! Parameter hints understood by [`KeywordExtractor`] (taken from the
//! context's `acquisition` descriptor):
//!
//! * `number` - first numeric token
//! * `number_after:<word>` - first numeric token after `<word>`
//! * `after:<word>` - token(s) following `<word>`; string lists collect
//!   tokens separated by `and` or commas up to the next stop word
//! * `flag:<word>` - boolean, whether `<word>` occurs

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use super::{Embedder, EmbeddingVector, IntentCatalog, IntentExtractor, ProviderError, RawExtraction};
use crate::value::ContextType;

pub const STUB_EMBEDDING_DIM: usize = 256;

const STOPWORDS: &[&str] = &[
    "a", "about", "all", "am", "an", "and", "any", "are", "as", "at", "be", "by", "can", "could", "do",
    "for", "from", "i", "in", "into", "is", "it", "its", "me", "my", "of", "on", "or", "our", "please",
    "so", "that", "the", "their", "them", "then", "this", "to", "up", "us", "we", "what", "with",
    "would", "you", "your",
];

fn is_stopword(word: &str) -> bool {
    STOPWORDS.binary_search(&word).is_ok()
}

fn normalize(word: &str) -> String {
    let w = word.to_lowercase();
    // crude plural folding so "emails"/"email" match
    if w.len() > 3 && w.ends_with('s') && !w.ends_with("ss") && !w.chars().all(|c| c.is_ascii_digit()) {
        w[..w.len() - 1].to_owned()
    } else {
        w
    }
}

/// Lowercased alphanumeric words with stop words removed, in order.
pub fn content_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(normalize)
        .filter(|w| !is_stopword(w))
        .collect()
}

/// Whitespace tokens with surrounding punctuation trimmed, original case kept.
fn raw_tokens(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| matches!(c, ',' | '.' | ';' | ':' | '!' | '?' | '"' | '\'' | '(' | ')')))
        .filter(|t| !t.is_empty())
        .collect()
}

fn parse_number(token: &str) -> Option<serde_json::Value> {
    let t = token.trim_start_matches(['$', '€', '£']);
    if let Ok(i) = t.parse::<i64>() {
        return Some(i.into());
    }
    t.parse::<f64>().ok().filter(|x| x.is_finite()).map(Into::into)
}

fn position_after(tokens: &[&str], cue: &str) -> Option<usize> {
    tokens.iter().position(|t| t.eq_ignore_ascii_case(cue)).map(|p| p + 1)
}

fn extract_param(tokens: &[&str], ty: ContextType, hint: &str) -> Option<serde_json::Value> {
    let (kind, arg) = hint.split_once(':').unwrap_or((hint, ""));
    match kind {
        "number" => tokens.iter().find_map(|t| parse_number(t)),
        "number_after" => {
            let start = position_after(tokens, arg)?;
            tokens[start..].iter().find_map(|t| parse_number(t))
        }
        "flag" => Some(tokens.iter().any(|t| t.eq_ignore_ascii_case(arg)).into()),
        "after" => {
            let start = position_after(tokens, arg)?;
            let mut rest = tokens[start..]
                .iter()
                .copied()
                .skip_while(|t| matches!(t.to_lowercase().as_str(), "a" | "an" | "the"));
            if ty == ContextType::StringList {
                let items: Vec<String> = rest
                    .filter(|t| !t.eq_ignore_ascii_case("and"))
                    .take_while(|t| !is_stopword(&t.to_lowercase()))
                    .map(str::to_owned)
                    .collect();
                (!items.is_empty()).then(|| items.into())
            } else {
                rest.next().map(|t| t.to_owned().into())
            }
        }
        _ => None,
    }
}

/// Selects every intent whose description shares a content word with the
/// instruction.
#[derive(Debug, Clone, Default)]
pub struct KeywordExtractor {
    /// Simulated provider latency.
    pub delay: Duration,
}

impl KeywordExtractor {
    pub fn with_delay(delay: Duration) -> Self {
        KeywordExtractor { delay }
    }
}

impl IntentExtractor for KeywordExtractor {
    fn extract(&self, instruction: &str, catalog: &IntentCatalog) -> Result<RawExtraction, ProviderError> {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let words = content_words(instruction);
        let first_pos: BTreeMap<&str, usize> =
            words.iter().enumerate().rev().map(|(i, w)| (w.as_str(), i)).collect();

        let mut selections = BTreeMap::new();
        let mut ordered: Vec<(usize, usize, String)> = Vec::new();
        for (fidx, function) in catalog.functions.iter().enumerate() {
            let mut chosen = Vec::new();
            let mut earliest = usize::MAX;
            for intent in function.intents.iter().filter(|i| !i.is_fallback) {
                let desc: BTreeSet<String> = content_words(&intent.description).into_iter().collect();
                let hits: Vec<usize> =
                    desc.iter().filter_map(|w| first_pos.get(w.as_str()).copied()).collect();
                if let Some(min) = hits.iter().min() {
                    chosen.push(intent.intent_id.clone());
                    earliest = earliest.min(*min);
                }
            }
            if !chosen.is_empty() {
                selections.insert(function.function_id.clone(), chosen);
                ordered.push((earliest, fidx, function.function_id.clone()));
            }
        }
        ordered.sort();

        let tokens = raw_tokens(instruction);
        let mut param_values = BTreeMap::new();
        for (ctx_id, spec) in &catalog.params {
            if let Some(v) = spec.hint.as_deref().and_then(|h| extract_param(&tokens, spec.ty, h)) {
                param_values.insert(ctx_id.clone(), v);
            }
        }

        Ok(RawExtraction {
            selections,
            param_values,
            predicted_sequence: ordered.into_iter().map(|(_, _, f)| f).collect(),
        })
    }
}

/// Counts content words into `dim` buckets by FNV-1a hash.
#[derive(Debug, Clone)]
pub struct HashedEmbedder {
    pub dim: usize,
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        HashedEmbedder { dim: STUB_EMBEDDING_DIM }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl Embedder for HashedEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> EmbeddingVector {
        let mut v = vec![0.0; self.dim];
        for w in content_words(text) {
            v[(fnv1a(w.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        EmbeddingVector(v)
    }
}
