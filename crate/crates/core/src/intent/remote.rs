use serde::Serialize;

use super::{IntentCatalog, IntentExtractor, ProviderError, RawExtraction};
use crate::transport::Transport;

#[derive(Serialize)]
struct ExtractionRequest<'a> {
    instruction: &'a str,
    catalog: &'a IntentCatalog,
}

/// Extractor backed by an out-of-process model. Responses that do not match
/// the [`RawExtraction`] schema are retried up to `retries` times.
#[derive(Debug, Clone)]
pub struct RemoteExtractor {
    pub transport: Transport,
    pub retries: usize,
}

impl RemoteExtractor {
    pub fn new(transport: Transport) -> Self {
        RemoteExtractor { transport, retries: 2 }
    }
}

impl IntentExtractor for RemoteExtractor {
    fn extract(&self, instruction: &str, catalog: &IntentCatalog) -> Result<RawExtraction, ProviderError> {
        let request = serde_json::to_string(&ExtractionRequest { instruction, catalog })
            .map_err(|e| ProviderError(e.to_string()))?;
        let mut last = String::new();
        for attempt in 0..=self.retries {
            match self.transport.call(&request) {
                Ok(body) => match serde_json::from_str::<RawExtraction>(&body) {
                    Ok(raw) => return Ok(raw),
                    Err(e) => last = format!("attempt {attempt}: schema-invalid response: {e}"),
                },
                Err(e) => last = format!("attempt {attempt}: {e}"),
            }
            log::warn!("intent extraction {last}");
        }
        Err(ProviderError(last))
    }
}
