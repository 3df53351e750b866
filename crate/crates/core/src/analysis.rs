//! Project state inference, candidate questions, and the diverse top-k
//! question selection.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, ParseError, Result};
use crate::gateway::structured::{extract_json, str_field, strip_scratchpad};
use crate::gateway::{Gateway, PromptRequest, PromptTemplate};
use crate::hashing::normalize_text;

pub const DEFAULT_QUESTIONS_K: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectStateAssessment {
    pub state_label: String,
    pub rationale: String,
    pub assessed_at: DateTime<Utc>,
    pub source_revision_id: Option<u64>,
    pub user_overridden: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateQuestion {
    pub question: String,
    pub explanation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionOrigin {
    Generated,
    UserAdded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionStatus {
    Pending,
    Answered,
    Retired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResearchQuestion {
    pub question_id: String,
    pub text: String,
    pub explanation: String,
    pub origin: QuestionOrigin,
    pub rank: Option<u32>,
    pub tracked: bool,
    pub status: QuestionStatus,
    pub created_at: DateTime<Utc>,
    pub source_revision_id: Option<u64>,
    /// Summary of the latest answer, written by suggestion generation.
    #[serde(default)]
    pub summary: Option<String>,
    #[serde(default)]
    pub answer_refs: Vec<String>,
}

impl ResearchQuestion {
    pub fn has_answer(&self) -> bool {
        !self.answer_refs.is_empty()
    }
}

fn override_guidance(current: Option<&ProjectStateAssessment>) -> String {
    match current {
        Some(a) if a.user_overridden => format!(
            " The researcher has stated that the project is in the \"{}\" stage; use exactly this as project_state and explain in why_project_state what in the document supports it.",
            a.state_label
        ),
        _ => String::new(),
    }
}

pub fn analysis_request(
    annotated_text: &str,
    today: &str,
    current: Option<&ProjectStateAssessment>,
) -> Result<PromptRequest> {
    PromptRequest::new(
        PromptTemplate::DocumentAnalysis,
        BTreeMap::from([
            ("doc".to_owned(), annotated_text.to_owned()),
            ("today".to_owned(), today.to_owned()),
            ("state_guidance".to_owned(), override_guidance(current)),
        ]),
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisOutput {
    pub project_state: String,
    pub why_project_state: String,
    pub questions: Vec<CandidateQuestion>,
}

pub fn parse_analysis(raw: &str) -> Result<AnalysisOutput, ParseError> {
    let v = extract_json(raw)?;
    let project_state = str_field(&v, "project_state")
        .ok_or_else(|| ParseError::Schema("missing project_state".into()))?;
    let why = str_field(&v, "why_project_state")
        .ok_or_else(|| ParseError::Schema("missing why_project_state".into()))?;
    let items = v
        .get("questions")
        .and_then(Value::as_array)
        .ok_or_else(|| ParseError::Schema("missing questions array".into()))?;
    let mut questions: Vec<CandidateQuestion> = Vec::new();
    for item in items {
        match (str_field(item, "question"), str_field(item, "explanation")) {
            (Some(q), Some(e)) => {
                if !questions.iter().any(|c| c.question == q) {
                    questions.push(CandidateQuestion {
                        question: q.to_owned(),
                        explanation: e.to_owned(),
                    });
                }
            }
            _ => tracing::warn!(entry = %item, "question entry missing text or explanation"),
        }
    }
    Ok(AnalysisOutput {
        project_state: project_state.to_owned(),
        why_project_state: why.to_owned(),
        questions,
    })
}

/// Infer project state and candidate questions. An overridden assessment
/// keeps its label; only the rationale is refreshed.
pub fn assess_project(
    gateway: &Gateway,
    annotated_text: &str,
    today: &str,
    now: DateTime<Utc>,
    revision_id: Option<u64>,
    current: Option<&ProjectStateAssessment>,
) -> Result<(ProjectStateAssessment, Vec<CandidateQuestion>)> {
    if annotated_text.trim().is_empty() {
        return Err(Error::Validation("document is empty".into()));
    }
    let request = analysis_request(annotated_text, today, current)?;
    let out = gateway.complete_parsed(&request, parse_analysis)?;
    let overridden = current.filter(|a| a.user_overridden);
    let assessment = ProjectStateAssessment {
        state_label: overridden
            .map(|a| a.state_label.clone())
            .unwrap_or(out.project_state),
        rationale: out.why_project_state,
        assessed_at: now,
        source_revision_id: revision_id,
        user_overridden: overridden.is_some(),
    };
    Ok((assessment, out.questions))
}

pub fn render_candidates(candidates: &[CandidateQuestion]) -> String {
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {}\n   Explanation: {}", i + 1, c.question, c.explanation))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn ranking_request(
    annotated_text: &str,
    assessment: &ProjectStateAssessment,
    candidates: &[CandidateQuestion],
) -> Result<PromptRequest> {
    PromptRequest::new(
        PromptTemplate::QuestionRanking,
        BTreeMap::from([
            ("doc".to_owned(), annotated_text.to_owned()),
            ("project_state".to_owned(), assessment.state_label.clone()),
            ("why_project_state".to_owned(), assessment.rationale.clone()),
            ("questions".to_owned(), render_candidates(candidates)),
        ]),
    )
}

/// Outcome of matching a ranking completion back to the candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    /// Candidate indices in ranked order.
    pub indices: Vec<usize>,
    /// Entries that matched no unused candidate.
    pub dropped: usize,
    pub fell_back: bool,
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn ordinal_start(line: &str) -> bool {
    let t = line
        .trim_start()
        .trim_start_matches(['#', '*', '_', ' '])
        .trim_start();
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    digits > 0 && matches!(t[digits..].chars().next(), Some('.' | ')' | ':'))
}

/// Split a ranked-list completion into one text block per list entry.
/// Without any ordinal markers each non-empty line is an entry.
pub(crate) fn ranked_entries(text: &str) -> Vec<String> {
    let lines: Vec<&str> = text.lines().collect();
    if !lines.iter().any(|l| ordinal_start(l)) {
        return lines
            .into_iter()
            .filter(|l| !l.trim().is_empty())
            .map(str::to_owned)
            .collect();
    }
    let mut entries: Vec<String> = Vec::new();
    let mut current: Option<String> = None;
    for line in lines {
        if ordinal_start(line) {
            if let Some(done) = current.take() {
                entries.push(done);
            }
            current = Some(line.to_owned());
        } else if let Some(cur) = current.as_mut() {
            cur.push('\n');
            cur.push_str(line);
        }
    }
    entries.extend(current);
    entries
}

/// Map a free-text ranking back to candidates. Each entry contributes the
/// unused candidate whose exact text appears earliest in it (longest on a
/// tie). Entries matching nothing are dropped. When nothing matches at all
/// the first `k` candidates are used in their original order.
pub fn parse_question_ranking(raw: &str, candidates: &[CandidateQuestion], k: usize) -> Selection {
    let body = strip_scratchpad(raw, None);
    let texts: Vec<String> = candidates.iter().map(|c| collapse(&c.question)).collect();
    let mut used = vec![false; candidates.len()];
    let mut indices = Vec::new();
    let mut dropped = 0;
    for entry in ranked_entries(&body) {
        let entry = collapse(&entry.replace("**", ""));
        let best = texts
            .iter()
            .enumerate()
            .filter(|(i, t)| !used[*i] && !t.is_empty())
            .filter_map(|(i, t)| entry.find(t.as_str()).map(|pos| (pos, std::cmp::Reverse(t.len()), i)))
            .min();
        match best {
            Some((_, _, i)) => {
                used[i] = true;
                indices.push(i);
            }
            None => {
                if texts.iter().any(|t| entry.contains(t.as_str())) {
                    tracing::debug!("ranking entry repeats an already selected question");
                } else {
                    tracing::warn!(entry = %entry, "ranking entry matches no candidate question");
                }
                dropped += 1;
            }
        }
    }
    indices.truncate(k);
    if indices.is_empty() {
        return Selection {
            indices: (0..candidates.len().min(k)).collect(),
            dropped,
            fell_back: true,
        };
    }
    Selection {
        indices,
        dropped,
        fell_back: false,
    }
}

/// Choose up to `k` diverse, useful questions from the candidates. Provider
/// failure falls back to candidate order.
pub fn select_questions(
    gateway: &Gateway,
    annotated_text: &str,
    assessment: &ProjectStateAssessment,
    candidates: &[CandidateQuestion],
    k: usize,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::Validation("no candidate questions to select from".into()));
    }
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    let request = ranking_request(annotated_text, assessment, candidates)?;
    match gateway.complete(&request) {
        Ok(raw) => Ok(parse_question_ranking(&raw, candidates, k)),
        Err(e) => {
            tracing::warn!(error = %e, "question ranking failed; using candidate order");
            Ok(Selection {
                indices: (0..candidates.len().min(k)).collect(),
                dropped: 0,
                fell_back: true,
            })
        }
    }
}

/// Whether `text` duplicates a live (non-retired) question.
pub fn is_duplicate_question(existing: &[ResearchQuestion], text: &str) -> bool {
    let wanted = normalize_text(text);
    existing
        .iter()
        .any(|q| q.status != QuestionStatus::Retired && normalize_text(&q.text) == wanted)
}
