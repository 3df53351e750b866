use std::collections::BTreeMap;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::DeepResearchProvider;
use crate::citations::scan_labels;
use crate::error::ProviderError;
use crate::http::{agent, classify_status, transport_error};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationRef {
    pub paper_id: Option<String>,
    pub title: Option<String>,
    pub url: Option<String>,
}

/// Report as returned by a deep-research provider (also the fixture format).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnswer {
    pub answer_text: String,
    #[serde(default)]
    pub citation_labels: BTreeMap<String, CitationRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeepResearchAnswer {
    pub question_id: String,
    /// `{question_id}#{n}`; answers for a question are numbered from 1.
    pub answer_ref: String,
    pub answer_text: String,
    pub citation_labels: BTreeMap<String, CitationRef>,
    pub retrieved_at: DateTime<Utc>,
    pub provider_id: String,
}

impl DeepResearchAnswer {
    pub fn has_label(&self, label: &str) -> bool {
        self.citation_labels.contains_key(label)
    }

    /// Label table as shown to the model.
    pub fn render_labels(&self) -> String {
        self.citation_labels
            .iter()
            .map(|(label, r)| {
                let mut line = format!("[{label}]");
                if let Some(t) = &r.title {
                    line.push_str(&format!(" {t}"));
                }
                if let Some(u) = &r.url {
                    line.push_str(&format!(" ({u})"));
                }
                line
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Every label used in the answer text must have a table entry. Missing
/// ones are added with empty metadata.
pub fn ensure_label_closure(mut raw: RawAnswer) -> RawAnswer {
    for (_, label) in scan_labels(&raw.answer_text) {
        if let std::collections::btree_map::Entry::Vacant(slot) = raw.citation_labels.entry(label) {
            tracing::warn!(label = %slot.key(), "answer cites a label missing from its table");
            slot.insert(CitationRef::default());
        }
    }
    raw
}

/// JSON-over-HTTP deep-research client: `POST {endpoint}` with
/// `{"query": question}`, response body is a [`RawAnswer`].
#[derive(Debug, Clone)]
pub struct HttpDeepResearch {
    endpoint: String,
    api_key: Option<String>,
    timeout: Duration,
}

impl HttpDeepResearch {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key,
            timeout: Duration::from_secs(1800),
        }
    }
}

impl DeepResearchProvider for HttpDeepResearch {
    fn provider_id(&self) -> &str {
        &self.endpoint
    }

    fn query(&self, question: &str) -> Result<RawAnswer, ProviderError> {
        let mut req = agent(self.timeout).post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(json!({ "query": question }))
            .map_err(transport_error)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(transport_error)?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        serde_json::from_str(&text).map_err(|e| ProviderError::Other(format!("bad answer payload: {e}")))
    }
}
