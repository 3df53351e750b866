//! Prompt templates and request construction.
//!
//! Template bodies live in `prompts/*.txt` and are used verbatim. The only
//! addition is the date/staleness context appended to the document-analysis
//! template.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

pub const SYSTEM_PROMPT: &str = include_str!("../../prompts/system.txt");

const PAPER_EXTRACTION: &str = include_str!("../../prompts/paper_extraction.txt");
const PAPER_RELATION: &str = include_str!("../../prompts/paper_relation.txt");
const DOCUMENT_ANALYSIS: &str = include_str!("../../prompts/document_analysis.txt");
const QUESTION_RANKING: &str = include_str!("../../prompts/question_ranking.txt");
const SUGGESTION_GENERATION: &str = include_str!("../../prompts/suggestion_generation.txt");
const SUGGESTION_RANKING: &str = include_str!("../../prompts/suggestion_ranking.txt");
const DOCUMENT_ANCHORING: &str = include_str!("../../prompts/document_anchoring.txt");
const ANSWER_DIFF: &str = include_str!("../../prompts/answer_diff.txt");

const ANALYSIS_TIME_CONTEXT: &str = "\nToday's date is {today}. When the document carries dates, use them to judge what is current. Open loops in the document (plans, to-dos, open questions) that have had no follow-up activity for several weeks are stale: discard them instead of generating questions about them.{state_guidance}\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTemplate {
    PaperExtraction,
    PaperRelation,
    DocumentAnalysis,
    QuestionRanking,
    SuggestionGeneration,
    SuggestionRanking,
    DocumentAnchoring,
    AnswerDiff,
}

impl PromptTemplate {
    pub const ALL: [PromptTemplate; 8] = [
        PromptTemplate::PaperExtraction,
        PromptTemplate::PaperRelation,
        PromptTemplate::DocumentAnalysis,
        PromptTemplate::QuestionRanking,
        PromptTemplate::SuggestionGeneration,
        PromptTemplate::SuggestionRanking,
        PromptTemplate::DocumentAnchoring,
        PromptTemplate::AnswerDiff,
    ];

    pub fn id(self) -> &'static str {
        match self {
            PromptTemplate::PaperExtraction => "paper_extraction",
            PromptTemplate::PaperRelation => "paper_relation",
            PromptTemplate::DocumentAnalysis => "document_analysis",
            PromptTemplate::QuestionRanking => "question_ranking",
            PromptTemplate::SuggestionGeneration => "suggestion_generation",
            PromptTemplate::SuggestionRanking => "suggestion_ranking",
            PromptTemplate::DocumentAnchoring => "document_anchoring",
            PromptTemplate::AnswerDiff => "answer_diff",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.id() == id)
    }

    /// Template body with `{name}` placeholders.
    pub fn body(self) -> String {
        match self {
            PromptTemplate::PaperExtraction => PAPER_EXTRACTION.to_owned(),
            PromptTemplate::PaperRelation => PAPER_RELATION.to_owned(),
            PromptTemplate::DocumentAnalysis => format!("{DOCUMENT_ANALYSIS}{ANALYSIS_TIME_CONTEXT}"),
            PromptTemplate::QuestionRanking => QUESTION_RANKING.to_owned(),
            PromptTemplate::SuggestionGeneration => SUGGESTION_GENERATION.to_owned(),
            PromptTemplate::SuggestionRanking => SUGGESTION_RANKING.to_owned(),
            PromptTemplate::DocumentAnchoring => DOCUMENT_ANCHORING.to_owned(),
            PromptTemplate::AnswerDiff => ANSWER_DIFF.to_owned(),
        }
    }

    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            PromptTemplate::PaperExtraction => &["doc"],
            PromptTemplate::PaperRelation => &[
                "document_excerpt",
                "paper_abstract",
                "paper_title",
                "project_relation",
            ],
            PromptTemplate::DocumentAnalysis => &["doc", "state_guidance", "today"],
            PromptTemplate::QuestionRanking => {
                &["doc", "project_state", "questions", "why_project_state"]
            }
            PromptTemplate::SuggestionGeneration => &[
                "answer",
                "citation_labels",
                "doc",
                "project_state",
                "question",
                "question_explanation",
                "why_project_state",
            ],
            PromptTemplate::SuggestionRanking => &["doc", "project_state", "recommendations"],
            PromptTemplate::DocumentAnchoring => &["document_sentences", "items", "today"],
            PromptTemplate::AnswerDiff => &["new_answer", "old_answer", "project_state", "question"],
        }
    }

    /// JSON schema for templates whose output is a JSON object. Sent to
    /// providers that support constrained decoding.
    pub fn output_schema(self) -> Option<Value> {
        match self {
            PromptTemplate::PaperExtraction => Some(json!({
                "type": "object",
                "properties": {
                    "papers": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "properties": {
                                "title": {"type": ["string", "null"]},
                                "url": {"type": ["string", "null"]},
                                "text": {"type": ["string", "null"]},
                                "context": {"type": "string"},
                                "project_relation": {"type": ["string", "null"]}
                            },
                            "required": ["title", "url", "text", "context", "project_relation"]
                        }
                    }
                },
                "required": ["papers"]
            })),
            PromptTemplate::DocumentAnalysis => Some(json!({
                "type": "object",
                "properties": {
                    "project_state": {"type": "string"},
                    "why_project_state": {"type": "string"},
                    "questions": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "properties": {
                                "question": {"type": "string"},
                                "explanation": {"type": "string"}
                            },
                            "required": ["question", "explanation"]
                        }
                    }
                },
                "required": ["project_state", "why_project_state", "questions"]
            })),
            PromptTemplate::DocumentAnchoring => Some(json!({
                "type": "object",
                "additionalProperties": {
                    "type": "object",
                    "properties": {
                        "matches": {
                            "type": "array",
                            "maxItems": 1,
                            "items": {
                                "type": "object",
                                "properties": {
                                    "sentence_index": {"type": "integer"},
                                    "quote": {"type": "string"},
                                    "reasoning": {"type": "string"},
                                    "location": {"type": "string"}
                                },
                                "required": ["sentence_index", "quote", "reasoning", "location"]
                            }
                        }
                    },
                    "required": ["matches"]
                }
            })),
            PromptTemplate::AnswerDiff => Some(json!({
                "type": "object",
                "properties": {
                    "has_meaningful_diff": {"type": "boolean"},
                    "suggestions": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "properties": {
                                "title": {"type": "string"},
                                "text": {"type": "string"},
                                "info": {"type": "string"}
                            },
                            "required": ["title", "text", "info"]
                        }
                    }
                },
                "required": ["has_meaningful_diff", "suggestions"]
            })),
            _ => None,
        }
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// A fully bound prompt. Construction fails unless the variables are exactly
/// the template's placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub template: PromptTemplate,
    pub variables: BTreeMap<String, String>,
    pub request_hash: String,
}

impl PromptRequest {
    pub fn new<K, V>(template: PromptTemplate, variables: impl IntoIterator<Item = (K, V)>) -> Result<Self>
    where
        K: Into<String>,
        V: Into<String>,
    {
        let variables: BTreeMap<String, String> = variables
            .into_iter()
            .map(|(k, v)| (k.into(), v.into()))
            .collect();
        let expected = template.placeholders();
        if let Some(missing) = expected.iter().find(|p| !variables.contains_key(**p)) {
            return Err(Error::Validation(format!(
                "template {template} needs variable {missing:?}"
            )));
        }
        if let Some(extra) = variables.keys().find(|k| !expected.contains(&k.as_str())) {
            return Err(Error::Validation(format!(
                "template {template} has no placeholder {extra:?}"
            )));
        }
        let request_hash = Self::hash(template, &variables);
        Ok(Self {
            template,
            variables,
            request_hash,
        })
    }

    fn hash(template: PromptTemplate, variables: &BTreeMap<String, String>) -> String {
        let mut buf = Vec::new();
        buf.extend(template.id().as_bytes());
        buf.push(b'\n');
        for (k, v) in variables {
            buf.extend(k.as_bytes());
            buf.push(0);
            buf.extend(v.as_bytes());
            buf.push(0);
        }
        sha256_hex(buf)
    }

    pub fn system_prompt(&self) -> &'static str {
        SYSTEM_PROMPT.trim_end()
    }

    /// Substitute placeholders in a single pass, so variable values that
    /// happen to contain `{name}` are left alone.
    pub fn render(&self) -> String {
        let body = self.template.body();
        let mut out = String::with_capacity(body.len() + self.variables.values().map(String::len).sum::<usize>());
        let mut rest = body.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let substituted = after.find('}').and_then(|close| {
                let name = &after[..close];
                self.variables.get(name).map(|v| (v, close))
            });
            match substituted {
                Some((value, close)) => {
                    out.push_str(value);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}
