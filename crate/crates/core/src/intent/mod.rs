//! Intent extraction, similarity refinement and execution-order checks.

mod remote;
mod stub;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ContextSource, ContextSpace};
use crate::value::{ContextType, Value};

pub use remote::RemoteExtractor;
pub use stub::{content_words, HashedEmbedder, KeywordExtractor, STUB_EMBEDDING_DIM};

/// Default similarity threshold for refining a missing selection.
pub const DEFAULT_THRESHOLD: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogIntent {
    pub intent_id: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogFunction {
    pub function_id: String,
    pub intents: Vec<CatalogIntent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    #[serde(rename = "type")]
    pub ty: ContextType,
    /// Extraction hint copied from the context's acquisition descriptor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
}

/// Everything the extractor may select from: the intents of every function
/// and the parameter contexts an instruction can fill.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntentCatalog {
    pub functions: Vec<CatalogFunction>,
    pub params: BTreeMap<String, ParamSpec>,
}

impl IntentCatalog {
    pub fn from_space(space: &ContextSpace) -> Self {
        let mut params = BTreeMap::new();
        let mut functions = Vec::new();
        for (_, f) in space.iter_functions() {
            if f.intents.is_empty() {
                continue;
            }
            functions.push(CatalogFunction {
                function_id: f.function_id.clone(),
                intents: f
                    .intents
                    .iter()
                    .map(|i| CatalogIntent {
                        intent_id: i.intent_id.clone(),
                        description: i.description.clone(),
                        is_fallback: i.is_fallback,
                    })
                    .collect(),
            });
            for ctx in f.intents.iter().flat_map(|i| &i.param_contexts) {
                if let Some(meta) = space.contexts.get(ctx) {
                    params.insert(ctx.clone(), ParamSpec { ty: meta.ty, hint: meta.acquisition.clone() });
                }
            }
        }
        for (id, meta) in &space.contexts {
            if meta.src == ContextSource::UserRequest {
                params
                    .entry(id.clone())
                    .or_insert_with(|| ParamSpec { ty: meta.ty, hint: meta.acquisition.clone() });
            }
        }
        IntentCatalog { functions, params }
    }

    pub fn function(&self, function_id: &str) -> Option<&CatalogFunction> {
        self.functions.iter().find(|f| f.function_id == function_id)
    }
}

/// Unvalidated provider output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExtraction {
    #[serde(default)]
    pub selections: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub param_values: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub predicted_sequence: Vec<String>,
}

/// Extraction output after validation against the catalog.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub selections: BTreeMap<String, Vec<String>>,
    pub param_values: BTreeMap<String, Value>,
    pub predicted_sequence: Vec<String>,
    /// The provider failed; selections are empty and should be treated as unmatched.
    #[serde(default)]
    pub degraded: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ExtractionResult {
    pub fn degraded(reason: impl Into<String>) -> Self {
        ExtractionResult { degraded: true, warnings: vec![reason.into()], ..Default::default() }
    }
}

#[derive(Debug, Error)]
#[error("intent provider failed: {0}")]
pub struct ProviderError(pub String);

/// Selects intents and parameter values for an instruction.
pub trait IntentExtractor: Send + Sync {
    fn extract(&self, instruction: &str, catalog: &IntentCatalog) -> Result<RawExtraction, ProviderError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> EmbeddingVector;
}

/// Runs the extractor and validates its output against the catalog.
pub fn extract(instruction: &str, catalog: &IntentCatalog, extractor: &dyn IntentExtractor) -> ExtractionResult {
    if instruction.trim().is_empty() {
        return ExtractionResult::default();
    }
    match extractor.extract(instruction, catalog) {
        Ok(raw) => validate_extraction(raw, catalog),
        Err(e) => ExtractionResult::degraded(e.to_string()),
    }
}

/// Drops unknown functions, intents and parameters; coerces parameter values
/// to their declared types.
pub fn validate_extraction(raw: RawExtraction, catalog: &IntentCatalog) -> ExtractionResult {
    let mut out = ExtractionResult::default();
    for (function_id, intents) in raw.selections {
        let Some(function) = catalog.function(&function_id) else {
            out.warnings.push(format!("dropped selection for unknown function `{function_id}`"));
            continue;
        };
        let mut kept = Vec::new();
        for intent in intents {
            if function.intents.iter().any(|i| i.intent_id == intent) {
                if !kept.contains(&intent) {
                    kept.push(intent);
                }
            } else {
                out.warnings.push(format!("dropped unknown intent `{intent}` of `{function_id}`"));
            }
        }
        if !kept.is_empty() {
            out.selections.insert(function_id, kept);
        }
    }
    for (ctx_id, json) in raw.param_values {
        let Some(spec) = catalog.params.get(&ctx_id) else {
            out.warnings.push(format!("dropped value for unknown parameter `{ctx_id}`"));
            continue;
        };
        match Value::from_json(&json).and_then(|v| v.coerce(spec.ty)) {
            Some(v) => {
                out.param_values.insert(ctx_id, v);
            }
            None => out.warnings.push(format!("dropped `{ctx_id}`: {json} is not a valid {}", spec.ty)),
        }
    }
    for function_id in raw.predicted_sequence {
        if catalog.function(&function_id).is_some() {
            out.predicted_sequence.push(function_id);
        } else {
            out.warnings.push(format!("dropped unknown function `{function_id}` from predicted sequence"));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("embedding dimensions differ: {0} vs {1}")]
pub struct DimensionMismatch(pub usize, pub usize);

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, DimensionMismatch> {
    if u.dim() != v.dim() {
        return Err(DimensionMismatch(u.dim(), v.dim()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.0.iter().zip(&v.0) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Outcome of intent refinement for one function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "intent_id")]
pub enum Refined {
    Intent(String),
    Fallback,
    Unrelated,
}

/// Settles on a single intent for `function_id`.
///
/// Several raw selections are ranked by similarity to the instruction; a
/// single selection is taken as is; no selection falls back to a similarity
/// search over the function's intents gated by `threshold`. Ties go to the
/// intent listed first in the catalog.
pub fn refine(
    function_id: &str,
    raw_intents: &[String],
    instruction: &str,
    catalog: &IntentCatalog,
    embedder: &dyn Embedder,
    threshold: f64,
) -> Refined {
    let Some(function) = catalog.function(function_id) else {
        return Refined::Unrelated;
    };
    let as_refined = |intent: &CatalogIntent| {
        if intent.is_fallback {
            Refined::Fallback
        } else {
            Refined::Intent(intent.intent_id.clone())
        }
    };
    let candidates: Vec<&CatalogIntent> = function
        .intents
        .iter()
        .filter(|i| raw_intents.contains(&i.intent_id))
        .collect();
    let query = embedder.embed(instruction);
    let best = |pool: &[&CatalogIntent]| -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (idx, intent) in pool.iter().enumerate() {
            let sim = cosine(&query, &embedder.embed(&intent.description)).unwrap_or(0.0);
            if best.is_none_or(|(top, _)| sim > top) {
                best = Some((sim, idx));
            }
        }
        best
    };
    match candidates.len() {
        0 => {
            let specific: Vec<&CatalogIntent> = function.intents.iter().filter(|i| !i.is_fallback).collect();
            match best(&specific) {
                Some((sim, idx)) if sim >= threshold => as_refined(specific[idx]),
                _ if function.intents.iter().any(|i| i.is_fallback) => Refined::Fallback,
                _ => Refined::Unrelated,
            }
        }
        1 => as_refined(candidates[0]),
        _ => {
            let (_, idx) = best(&candidates).expect("non-empty candidates");
            as_refined(candidates[idx])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("`{function}` is predicted after unexecuted {missing:?}")]
pub struct OrderViolation {
    pub function: String,
    pub missing: Vec<String>,
}

/// Checks that every function predicted before `next` has already run.
/// Functions absent from the prediction are unconstrained.
pub fn check_order(predicted: &[String], executed: &[String], next: &str) -> Result<(), OrderViolation> {
    let Some(pos) = predicted.iter().position(|f| f == next) else {
        return Ok(());
    };
    let done: BTreeSet<&str> = executed.iter().map(String::as_str).collect();
    let mut missing: Vec<String> = Vec::new();
    for f in &predicted[..pos] {
        if f != next && !done.contains(f.as_str()) && !missing.contains(f) {
            missing.push(f.clone());
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(OrderViolation { function: next.to_owned(), missing })
    }
}
