use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{ParseError, Result};
use crate::gateway::structured::{extract_json, str_field};
use crate::gateway::{DeepResearchAnswer, Gateway, PromptRequest, PromptTemplate};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffSuggestion {
    pub title: String,
    pub text: String,
    pub info: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffResult {
    pub question_id: String,
    pub old_answer_ref: String,
    pub new_answer_ref: String,
    pub has_meaningful_diff: bool,
    pub suggestions: Vec<DiffSuggestion>,
}

pub fn diff_prompt(
    question: &str,
    project_state: &str,
    old_answer: &DeepResearchAnswer,
    new_answer: &DeepResearchAnswer,
) -> Result<PromptRequest> {
    PromptRequest::new(
        PromptTemplate::AnswerDiff,
        BTreeMap::from([
            ("question".to_owned(), question.to_owned()),
            ("project_state".to_owned(), project_state.to_owned()),
            ("old_answer".to_owned(), old_answer.answer_text.clone()),
            ("new_answer".to_owned(), new_answer.answer_text.clone()),
        ]),
    )
}

/// Parse the diff verdict. The flag is authoritative: when it is false the
/// suggestion list is emptied whatever the model put there.
pub fn parse_diff_output(raw: &str) -> Result<(bool, Vec<DiffSuggestion>), ParseError> {
    let v = extract_json(raw)?;
    let flag = v
        .get("has_meaningful_diff")
        .and_then(|f| match f {
            Value::Bool(b) => Some(*b),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        })
        .ok_or_else(|| ParseError::Schema("missing has_meaningful_diff".into()))?;
    let items = v
        .get("suggestions")
        .and_then(Value::as_array)
        .ok_or_else(|| ParseError::Schema("missing suggestions array".into()))?;
    if !flag {
        return Ok((false, Vec::new()));
    }
    let suggestions = items
        .iter()
        .filter_map(|item| {
            Some(DiffSuggestion {
                title: str_field(item, "title")?.to_owned(),
                text: str_field(item, "text")?.to_owned(),
                info: str_field(item, "info").unwrap_or_default().to_owned(),
            })
        })
        .collect();
    Ok((true, suggestions))
}

/// Compare two answers to a tracked question. Unusable output after the
/// retry counts as no difference.
pub fn diff_answers(
    gateway: &Gateway,
    question: &str,
    project_state: &str,
    old_answer: &DeepResearchAnswer,
    new_answer: &DeepResearchAnswer,
) -> DiffResult {
    let no_diff = || DiffResult {
        question_id: new_answer.question_id.clone(),
        old_answer_ref: old_answer.answer_ref.clone(),
        new_answer_ref: new_answer.answer_ref.clone(),
        has_meaningful_diff: false,
        suggestions: Vec::new(),
    };
    let request = match diff_prompt(question, project_state, old_answer, new_answer) {
        Ok(r) => r,
        Err(e) => {
            tracing::warn!(error = %e, "could not build diff prompt");
            return no_diff();
        }
    };
    match gateway.complete_parsed(&request, parse_diff_output) {
        Ok((flag, suggestions)) => DiffResult {
            has_meaningful_diff: flag,
            suggestions,
            ..no_diff()
        },
        Err(e) => {
            tracing::warn!(question = %new_answer.question_id, error = %e, "answer diff failed; treating as unchanged");
            no_diff()
        }
    }
}
