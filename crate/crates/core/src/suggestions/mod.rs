//! From a deep-research answer to ranked, validated, unseen suggestions.

mod dedup;
mod parse;
mod rank;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use dedup::SeenSet;
pub use parse::{parse_generation_output, render_generation_output};
pub use rank::{parse_recommendation_ranking, rank_suggestions, ranking_request, render_recommendation, Ranking};

use crate::analysis::{ProjectStateAssessment, ResearchQuestion};
use crate::anchoring::SentenceAnchor;
use crate::citations::{canonical_label, scan_labels};
use crate::error::Result;
use crate::gateway::{DeepResearchAnswer, Gateway, PromptRequest, PromptTemplate};
use crate::hashing::{normalize_text, sha256_hex};

pub const DEFAULT_SUGGESTIONS_N: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperLabel {
    pub label: String,
    pub to_lookup: bool,
}

/// One parsed `<suggestion>` block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionDraft {
    pub title: String,
    pub text: String,
    pub papers: Vec<PaperLabel>,
    pub info: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub question_id: String,
    pub summary: String,
    pub suggestions: Vec<SuggestionDraft>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionKind {
    Generated,
    Diff,
}

/// A delivered suggestion as persisted in `suggestions.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub suggestion_id: String,
    pub project_id: String,
    pub run_id: String,
    pub question_id: String,
    pub answer_ref: String,
    pub kind: SuggestionKind,
    pub title: String,
    pub text: String,
    pub papers: Vec<PaperLabel>,
    pub info: String,
    pub rank: u32,
    pub content_hash: String,
    pub revision_id: Option<u64>,
    pub delivered_at: Option<DateTime<Utc>>,
    pub anchor: Option<SentenceAnchor>,
}

/// Hash of normalized title and text; the seen-set key.
pub fn content_hash(title: &str, text: &str) -> String {
    sha256_hex(format!("{}\n{}", normalize_text(title), normalize_text(text)))
}

pub fn generation_request(
    question: &ResearchQuestion,
    answer: &DeepResearchAnswer,
    annotated_text: &str,
    assessment: &ProjectStateAssessment,
) -> Result<PromptRequest> {
    PromptRequest::new(
        PromptTemplate::SuggestionGeneration,
        BTreeMap::from([
            ("question".to_owned(), question.text.clone()),
            (
                "question_explanation".to_owned(),
                if question.explanation.trim().is_empty() {
                    "Added by the researcher.".to_owned()
                } else {
                    question.explanation.clone()
                },
            ),
            ("answer".to_owned(), answer.answer_text.clone()),
            ("citation_labels".to_owned(), answer.render_labels()),
            ("doc".to_owned(), annotated_text.to_owned()),
            ("project_state".to_owned(), assessment.state_label.clone()),
            ("why_project_state".to_owned(), assessment.rationale.clone()),
        ]),
    )
}

/// Summary plus suggestions for one answered question, label-validated.
pub fn generate_suggestions(
    gateway: &Gateway,
    question: &ResearchQuestion,
    answer: &DeepResearchAnswer,
    annotated_text: &str,
    assessment: &ProjectStateAssessment,
) -> Result<GenerationResult> {
    let request = generation_request(question, answer, annotated_text, assessment)?;
    let parsed = gateway.complete_parsed(&request, |raw| parse_generation_output(raw, &question.question_id))?;
    Ok(validate_citation_labels(parsed, answer))
}

fn unknown_labels(text: &str, answer: &DeepResearchAnswer) -> Vec<String> {
    scan_labels(text)
        .into_iter()
        .map(|(_, l)| l)
        .filter(|l| !answer.has_label(l))
        .collect()
}

/// Enforce label closure. A suggestion with no paper labels, or with any
/// label (in its paper list or bracketed in its title/text/info) missing from
/// the answer's table, is dropped. Unknown labels in the summary are cut out
/// and the summary kept.
pub fn validate_citation_labels(mut result: GenerationResult, answer: &DeepResearchAnswer) -> GenerationResult {
    result.suggestions.retain(|s| {
        if s.papers.is_empty() {
            tracing::info!(title = %s.title, "dropping suggestion without paper labels");
            return false;
        }
        let bad: Vec<String> = s
            .papers
            .iter()
            .map(|p| canonical_label(&p.label))
            .filter(|l| !answer.has_label(l))
            .chain(unknown_labels(&s.title, answer))
            .chain(unknown_labels(&s.text, answer))
            .chain(unknown_labels(&s.info, answer))
            .collect();
        if bad.is_empty() {
            true
        } else {
            tracing::info!(title = %s.title, labels = ?bad, "dropping suggestion with unknown citation labels");
            false
        }
    });
    for s in &mut result.suggestions {
        for p in &mut s.papers {
            p.label = canonical_label(&p.label);
        }
    }
    result.summary = strip_unknown_labels(&result.summary, answer);
    result
}

pub fn strip_unknown_labels(text: &str, answer: &DeepResearchAnswer) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (range, label) in scan_labels(text) {
        if answer.has_label(&label) {
            continue;
        }
        tracing::info!(label = %label, "removing unknown label from summary");
        let mut start = range.start;
        // take one preceding space with the label so no double space remains
        if text[..start].ends_with(' ') && !text[range.end..].starts_with(char::is_alphanumeric) {
            start -= 1;
        }
        out.push_str(&text[last..start]);
        last = range.end;
    }
    out.push_str(&text[last..]);
    out
}
