//! Batch ranking of suggestions with verbatim matching of the model's
//! recommendation lines back to the inputs.

use std::collections::BTreeMap;

use super::SuggestionDraft;
use crate::analysis::ProjectStateAssessment;
use crate::error::Result;
use crate::gateway::structured::strip_scratchpad;
use crate::gateway::{Gateway, PromptRequest, PromptTemplate};

/// How a suggestion is shown to the ranking model (and must come back).
pub fn render_recommendation(s: &SuggestionDraft) -> String {
    format!("{}: {}", s.title, s.text)
}

pub fn ranking_request(
    annotated_text: &str,
    assessment: &ProjectStateAssessment,
    batch: &[SuggestionDraft],
) -> Result<PromptRequest> {
    let recommendations = batch
        .iter()
        .map(|s| format!("- {}", render_recommendation(s)))
        .collect::<Vec<_>>()
        .join("\n");
    PromptRequest::new(
        PromptTemplate::SuggestionRanking,
        BTreeMap::from([
            ("doc".to_owned(), annotated_text.to_owned()),
            ("project_state".to_owned(), assessment.state_label.clone()),
            ("recommendations".to_owned(), recommendations),
        ]),
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    /// Input indices in ranked order, before the top-N cut.
    pub order: Vec<usize>,
    pub unmatched: usize,
    pub fell_back: bool,
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_decoration(s: &str) -> String {
    let s = s.replace("**", "");
    let s = s.trim();
    let s = s
        .strip_prefix('[')
        .and_then(|x| x.strip_suffix(']'))
        .unwrap_or(s);
    let s = s.trim_matches(|c: char| c == '"' || c == '\u{201c}' || c == '\u{201d}' || c == '\'' || c == '`');
    collapse(s)
}

fn without_ordinal(s: &str) -> Option<&str> {
    let s = s.trim_start_matches('-').trim_start();
    let digits = s.chars().take_while(char::is_ascii_digit).count();
    (digits > 0)
        .then(|| s[digits..].strip_prefix(['.', ')']))
        .flatten()
        .map(str::trim_start)
}

/// Values of `Recommendation:` lines. A value may wrap onto following lines
/// until a blank line or the next `Reasoning:`/numbered header.
fn recommendation_values(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        let plain = line.replace("**", "");
        let plain = plain.trim().trim_start_matches(['-', '*']).trim_start();
        let lower = plain.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("recommendation:") {
            out.extend(current.take());
            let offset = plain.len() - rest.len();
            current = Some(plain[offset..].trim().to_owned());
            continue;
        }
        let ends_value = plain.is_empty()
            || lower.starts_with("reasoning:")
            || without_ordinal(plain).is_some();
        match current.as_mut() {
            Some(_) if ends_value => out.extend(current.take()),
            Some(cur) => {
                cur.push(' ');
                cur.push_str(plain);
            }
            None => {}
        }
    }
    out.extend(current);
    out
}

/// Map ranked recommendation lines back to the batch. A line matches when,
/// whitespace-collapsed, it equals an unused input's `title: text` or its
/// text alone. Unmatched lines and unmentioned inputs are dropped. If fewer
/// than half the inputs match, the input order is kept instead.
pub fn parse_recommendation_ranking(raw: &str, batch: &[SuggestionDraft]) -> Ranking {
    let body = strip_scratchpad(raw, None);
    let full: Vec<String> = batch.iter().map(|s| collapse(&render_recommendation(s))).collect();
    let text_only: Vec<String> = batch.iter().map(|s| collapse(&s.text)).collect();
    let mut used = vec![false; batch.len()];
    let mut order = Vec::new();
    let mut unmatched = 0;

    for value in recommendation_values(&body) {
        let value = strip_decoration(&value);
        let mut candidates = vec![value.clone()];
        if let Some(rest) = without_ordinal(&value) {
            candidates.push(rest.to_owned());
        }
        let hit = candidates.iter().find_map(|v| {
            (0..batch.len())
                .find(|&i| !used[i] && full[i] == *v)
                .or_else(|| (0..batch.len()).find(|&i| !used[i] && text_only[i] == *v))
        });
        match hit {
            Some(i) => {
                used[i] = true;
                order.push(i);
            }
            None => {
                tracing::debug!(value = %value, "recommendation line matches no input");
                unmatched += 1;
            }
        }
    }

    if order.len() * 2 < batch.len() {
        tracing::warn!(matched = order.len(), total = batch.len(), "ranking mostly unmatched; keeping input order");
        return Ranking {
            order: (0..batch.len()).collect(),
            unmatched,
            fell_back: true,
        };
    }
    Ranking {
        order,
        unmatched,
        fell_back: false,
    }
}

/// Rank a batch and keep the top `n`. A single item needs no ranking call;
/// a provider failure keeps the input order.
pub fn rank_suggestions(
    gateway: &Gateway,
    annotated_text: &str,
    assessment: &ProjectStateAssessment,
    batch: &[SuggestionDraft],
    n: usize,
) -> Result<Ranking> {
    let mut ranking = if batch.len() <= 1 {
        Ranking {
            order: (0..batch.len()).collect(),
            unmatched: 0,
            fell_back: false,
        }
    } else {
        let request = ranking_request(annotated_text, assessment, batch)?;
        match gateway.complete(&request) {
            Ok(raw) => parse_recommendation_ranking(&raw, batch),
            Err(e) => {
                tracing::warn!(error = %e, "suggestion ranking failed; keeping input order");
                Ranking {
                    order: (0..batch.len()).collect(),
                    unmatched: 0,
                    fell_back: true,
                }
            }
        }
    };
    ranking.order.truncate(n);
    Ok(ranking)
}
