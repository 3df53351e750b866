//! Tie suggestions to one verbatim document sentence each, and check every
//! anchor mechanically before it is kept.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::document::SentenceEntry;
use crate::error::{ParseError, Result};
use crate::gateway::structured::extract_json;
use crate::gateway::{Gateway, PromptRequest, PromptTemplate};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceAnchor {
    pub suggestion_id: String,
    pub revision_id: u64,
    pub sentence_index: usize,
    pub quote: String,
    pub reasoning: String,
    pub location: String,
}

/// One proposed match as returned by the model, before verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorMatch {
    pub sentence_index: i64,
    pub quote: String,
    pub reasoning: String,
    pub location: String,
}

/// What gets sent for each suggestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorItem {
    pub id: String,
    pub text: String,
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorRejection {
    IndexOutOfRange,
    /// The quote is a real sentence, just not the one at the index.
    IndexTextMismatch,
    QuoteMismatch,
    MissingExplanation,
}

impl fmt::Display for AnchorRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnchorRejection::IndexOutOfRange => "index_out_of_range",
            AnchorRejection::IndexTextMismatch => "index_text_mismatch",
            AnchorRejection::QuoteMismatch => "quote_mismatch",
            AnchorRejection::MissingExplanation => "missing_explanation",
        })
    }
}

pub fn render_sentences(sentences: &[SentenceEntry]) -> String {
    sentences
        .iter()
        .map(|s| format!("[{}] {}", s.index, s.content))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_items(items: &[AnchorItem]) -> String {
    let list: Vec<Value> = items
        .iter()
        .map(|i| {
            let mut v = json!({"id": i.id, "text": i.text});
            if let Some(e) = &i.explanation {
                v["explanation"] = json!(e);
            }
            v
        })
        .collect();
    serde_json::to_string_pretty(&list).expect("items serialize")
}

pub fn anchoring_request(sentences: &[SentenceEntry], items: &[AnchorItem], today: &str) -> Result<PromptRequest> {
    PromptRequest::new(
        PromptTemplate::DocumentAnchoring,
        BTreeMap::from([
            ("document_sentences".to_owned(), render_sentences(sentences)),
            ("items".to_owned(), render_items(items)),
            ("today".to_owned(), today.to_owned()),
        ]),
    )
}

fn parse_match(v: &Value) -> Option<AnchorMatch> {
    let index = v.get("sentence_index").and_then(|i| {
        i.as_i64()
            .or_else(|| i.as_str().and_then(|s| s.trim().parse().ok()))
    })?;
    let text = |k: &str| v.get(k).and_then(Value::as_str).unwrap_or_default().to_owned();
    Some(AnchorMatch {
        sentence_index: index,
        quote: text("quote"),
        reasoning: text("reasoning").trim().to_owned(),
        location: text("location").trim().to_owned(),
    })
}

/// Parse the anchoring output into at most one match per requested id.
/// Ids missing from the output get no match; unknown ids are ignored.
pub fn parse_anchor_output(raw: &str, ids: &[String]) -> Result<BTreeMap<String, Option<AnchorMatch>>, ParseError> {
    let v = extract_json(raw)?;
    let obj = v
        .as_object()
        .ok_or_else(|| ParseError::Schema("expected a JSON object keyed by item id".into()))?;
    Ok(ids
        .iter()
        .map(|id| {
            let found = obj
                .get(id)
                .and_then(|entry| entry.get("matches"))
                .and_then(Value::as_array)
                .and_then(|m| m.first())
                .and_then(parse_match);
            (id.clone(), found)
        })
        .collect())
}

/// Ask for anchors for a batch. A provider or parse failure leaves every
/// item without a match.
pub fn anchor_suggestions(
    gateway: &Gateway,
    sentences: &[SentenceEntry],
    items: &[AnchorItem],
    today: &str,
) -> BTreeMap<String, Option<AnchorMatch>> {
    let none = || items.iter().map(|i| (i.id.clone(), None)).collect();
    if items.is_empty() {
        return BTreeMap::new();
    }
    if sentences.is_empty() {
        return none();
    }
    let ids: Vec<String> = items.iter().map(|i| i.id.clone()).collect();
    let request = match anchoring_request(sentences, items, today) {
        Ok(r) => r,
        Err(e) => {
            tracing::warn!(error = %e, "could not build anchoring prompt");
            return none();
        }
    };
    match gateway.complete_parsed(&request, |raw| parse_anchor_output(raw, &ids)) {
        Ok(map) => map,
        Err(e) => {
            tracing::warn!(error = %e, "anchoring failed; suggestions ship unanchored");
            none()
        }
    }
}

/// Accept a match only if its index is in range and its quote equals that
/// sentence byte for byte, ignoring trailing whitespace.
pub fn verify_anchor(m: &AnchorMatch, sentences: &[SentenceEntry]) -> Result<(), AnchorRejection> {
    let quote = m.quote.trim_end();
    let Some(sentence) = usize::try_from(m.sentence_index)
        .ok()
        .and_then(|i| sentences.get(i))
    else {
        return Err(AnchorRejection::IndexOutOfRange);
    };
    if sentence.content.trim_end() != quote {
        return if sentences.iter().any(|s| s.content.trim_end() == quote) {
            Err(AnchorRejection::IndexTextMismatch)
        } else {
            Err(AnchorRejection::QuoteMismatch)
        };
    }
    if m.reasoning.is_empty() || m.location.is_empty() {
        return Err(AnchorRejection::MissingExplanation);
    }
    Ok(())
}

/// Verified anchor for a suggestion, or `None` (logged) if verification fails.
pub fn accept_anchor(
    suggestion_id: &str,
    revision_id: u64,
    m: &AnchorMatch,
    sentences: &[SentenceEntry],
) -> Option<SentenceAnchor> {
    match verify_anchor(m, sentences) {
        Ok(()) => {
            let index = m.sentence_index as usize;
            Some(SentenceAnchor {
                suggestion_id: suggestion_id.to_owned(),
                revision_id,
                sentence_index: index,
                quote: sentences[index].content.clone(),
                reasoning: m.reasoning.clone(),
                location: m.location.clone(),
            })
        }
        Err(reason) => {
            tracing::info!(suggestion = %suggestion_id, %reason, "anchor rejected");
            None
        }
    }
}
