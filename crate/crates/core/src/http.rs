//! Shared blocking HTTP agent for providers, sinks and the document fetcher.

use std::time::Duration;

use crate::error::ProviderError;

pub(crate) fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::new_with_config(
        ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build(),
    )
}

/// Map a non-2xx provider status to the retry taxonomy.
pub(crate) fn classify_status(status: u16, body: &str) -> ProviderError {
    let snippet: String = body.chars().take(200).collect();
    match status {
        401 | 403 => ProviderError::Auth(format!("HTTP {status}: {snippet}")),
        408 | 425 | 429 | 500..=599 => ProviderError::Transient(format!("HTTP {status}: {snippet}")),
        _ => ProviderError::Other(format!("HTTP {status}: {snippet}")),
    }
}

pub(crate) fn transport_error(e: ureq::Error) -> ProviderError {
    ProviderError::Transient(e.to_string())
}
