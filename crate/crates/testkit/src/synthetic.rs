//! Deterministic stand-ins for the model and the deep-research service.
//!
//! The synthetic model reads the bound prompt variables and produces output
//! in each template's expected format, so any document or question yields a
//! plausible completion. Identical requests always yield identical text.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Mutex, OnceLock};

use litscout_core::citations::scan_labels;
use litscout_core::document::segment_sentences;
use litscout_core::error::ProviderError;
use litscout_core::gateway::{
    CitationRef, DeepResearchProvider, LlmProvider, PromptRequest, PromptTemplate, RawAnswer,
};
use litscout_core::hashing::sha256_hex;
use regex::Regex;
use serde_json::{json, Value};

use crate::corpus::{research_pool, PoolPaper};

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("valid regex"))
}

fn var<'a>(request: &'a PromptRequest, name: &str) -> &'a str {
    request.variables.get(name).map(String::as_str).unwrap_or_default()
}

/// Text with `<Paper …/>` tags removed.
fn strip_tags(text: &str) -> String {
    static TAG: OnceLock<Regex> = OnceLock::new();
    re(&TAG, r#"\s?<Paper [^>]*/>"#).replace_all(text, "").into_owned()
}

fn words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() > 3)
        .map(str::to_lowercase)
        .collect()
}

fn first_words(text: &str, n: usize) -> String {
    text.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

fn order_key(text: &str) -> String {
    sha256_hex(text)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SyntheticLlm;

impl SyntheticLlm {
    fn extract_papers(doc: &str) -> Value {
        static LINK: OnceLock<Regex> = OnceLock::new();
        static ITALIC: OnceLock<Regex> = OnceLock::new();
        let link = re(&LINK, r"\[([^\]\n]+)\]\((https?://[^)\s]+)\)");
        let italic = re(&ITALIC, r"(?:^|[^*])\*([^*\n]{8,}?)\*(?:[^*]|$)");
        let mut papers = Vec::new();
        for line in doc.lines() {
            let context = line.trim().trim_start_matches("- ").to_owned();
            for c in link.captures_iter(line) {
                papers.push(json!({
                    "title": Value::Null,
                    "url": &c[2],
                    "text": &c[1],
                    "context": context,
                    "project_relation": Value::Null,
                }));
            }
            for c in italic.captures_iter(line) {
                papers.push(json!({
                    "title": &c[1],
                    "url": Value::Null,
                    "text": Value::Null,
                    "context": context,
                    "project_relation": if context.contains("baseline") { json!("Candidate baseline.") } else { Value::Null },
                }));
            }
        }
        json!({ "papers": papers })
    }

    fn relation(request: &PromptRequest) -> String {
        let title = var(request, "paper_title");
        let abstract_text = var(request, "paper_abstract");
        format!(
            "{title} is relevant because it addresses {}. The project can use it when designing its retrieval pipeline.",
            first_words(&abstract_text.to_lowercase(), 8).trim_end_matches('.')
        )
    }

    fn analysis(request: &PromptRequest) -> String {
        let doc = strip_tags(var(request, "doc"));
        let mut questions = Vec::new();
        let mut heading = String::from("the document");
        for s in segment_sentences(&doc) {
            let content = s.content.trim();
            if let Some(h) = content.strip_prefix("## ") {
                heading = h.trim().to_owned();
                continue;
            }
            let text = content.trim_start_matches("- ").trim();
            if text.ends_with('?') {
                questions.push(json!({
                    "question": text,
                    "explanation": format!("Listed as open under \"{heading}\"; answering it unblocks the next step."),
                }));
            }
        }
        let mut headings: Vec<&str> = doc
            .lines()
            .filter_map(|l| l.strip_prefix("## "))
            .filter(|h| !h.contains("Open questions") && !h.contains("Next steps"))
            .collect();
        headings.dedup();
        for h in headings {
            questions.push(json!({
                "question": format!("Which recent papers are most relevant to the \"{}\" part of this project?", h.trim()),
                "explanation": "Surfaces literature the section does not cite yet.",
            }));
        }
        let (state, why) = if doc.contains("## Experiments") {
            ("Experimentation", "The document reports first results and plans follow-up runs.")
        } else {
            ("Ideation", "The document describes goals, related work and a method sketch but no results.")
        };
        json!({
            "project_state": state,
            "why_project_state": why,
            "questions": questions,
        })
        .to_string()
    }

    fn question_ranking(request: &PromptRequest) -> String {
        static ENTRY: OnceLock<Regex> = OnceLock::new();
        let entry = re(&ENTRY, r"(?m)^\d+\. (.+)$");
        let mut items: Vec<String> = entry
            .captures_iter(var(request, "questions"))
            .map(|c| c[1].trim().to_owned())
            .collect();
        items.sort_by_key(|q| order_key(q));
        let mut out = String::from("<scratchpad>\nPrefer questions that unblock the next step.\n</scratchpad>\n");
        for (i, q) in items.iter().enumerate() {
            out.push_str(&format!("{}. {q}\n   Reason: it is specific and actionable now.\n", i + 1));
        }
        out
    }

    fn labels(request: &PromptRequest) -> Vec<(String, String)> {
        static LINE: OnceLock<Regex> = OnceLock::new();
        let line = re(&LINE, r"(?m)^\[([^\]]+)\] ([^(\n]+)");
        line.captures_iter(var(request, "citation_labels"))
            .map(|c| (c[1].to_owned(), c[2].trim().to_owned()))
            .collect()
    }

    fn generation(request: &PromptRequest) -> String {
        let question = var(request, "question");
        let topic = first_words(question.trim_end_matches('?'), 7);
        let labels = Self::labels(request);
        let mut out = String::from("<scratchpad>\nPick the two most actionable findings.\n</scratchpad>\n<output>\n<summary>\n");
        let cited: Vec<String> = labels.iter().map(|(l, _)| format!("[{l}]")).collect();
        out.push_str(&format!("The answer draws on {} papers: {}.\n</summary>\n<suggestions>\n", labels.len(), cited.join(", ")));
        for (i, (label, title)) in labels.iter().take(2).enumerate() {
            let (title_text, text) = if i == 0 {
                (
                    format!("Compare against {title}"),
                    format!("For the question \"{topic}\", add the approach of [{label}] as a baseline and report it next to your retrieval results."),
                )
            } else {
                (
                    format!("Adopt the protocol from {title}"),
                    format!("When studying \"{topic}\", reuse the evaluation protocol of [{label}] so results are comparable."),
                )
            };
            out.push_str(&format!(
                "<suggestion>\n<title>{title_text}</title>\n<text>{text}</text>\n<papers>\n<paper to_lookup=false>[{label}]</paper>\n</papers>\n<info>[{label}] reports results that bear directly on this question.</info>\n</suggestion>\n"
            ));
        }
        // a label outside the table: validation must drop this one
        out.push_str(&format!(
            "<suggestion>\n<title>Consider an unpublished survey</title>\n<text>Read [Unlisted et al., 2099] before deciding on \"{topic}\".</text>\n<papers>\n<paper to_lookup=true>[Unlisted et al., 2099]</paper>\n</papers>\n<info>Mentioned in passing.</info>\n</suggestion>\n"
        ));
        out.push_str("</suggestions>\n</output>\n");
        out
    }

    fn suggestion_ranking(request: &PromptRequest) -> String {
        let mut items: Vec<&str> = var(request, "recommendations")
            .lines()
            .filter_map(|l| l.strip_prefix("- "))
            .collect();
        items.sort_by_key(|r| order_key(r));
        let mut out = String::new();
        for (i, r) in items.iter().enumerate() {
            out.push_str(&format!(
                "{}.\nRecommendation: {r}\nReasoning: concrete and timely for the current stage.\n\n",
                i + 1
            ));
        }
        out
    }

    fn anchoring(request: &PromptRequest) -> String {
        static MARK: OnceLock<Regex> = OnceLock::new();
        let mark = re(&MARK, r"(?m)^\[(\d+)\] ");
        let rendered = var(request, "document_sentences");
        let starts: Vec<(usize, usize, usize)> = mark
            .captures_iter(rendered)
            .map(|c| {
                let m = c.get(0).unwrap();
                (c[1].parse().unwrap(), m.start(), m.end())
            })
            .collect();
        let mut sentences: Vec<(usize, String)> = Vec::new();
        for (i, &(index, _, body_start)) in starts.iter().enumerate() {
            let end = starts.get(i + 1).map(|s| s.1 - 1).unwrap_or(rendered.len());
            sentences.push((index, rendered[body_start..end].to_owned()));
        }
        let items: Vec<Value> = serde_json::from_str(var(request, "items")).unwrap_or_default();
        let mut out = serde_json::Map::new();
        for item in items {
            let id = item["id"].as_str().unwrap_or_default().to_owned();
            let wanted = words(&format!(
                "{} {}",
                item["text"].as_str().unwrap_or_default(),
                item["explanation"].as_str().unwrap_or_default()
            ));
            let best = sentences
                .iter()
                .filter(|(_, s)| !s.starts_with('#'))
                .map(|(i, s)| (words(s).intersection(&wanted).count(), std::cmp::Reverse(*i), s))
                .max();
            let matches = match best {
                Some((overlap, std::cmp::Reverse(index), sentence)) if overlap > 0 => {
                    // some items get a paraphrased quote, as a model sometimes does
                    let quote = if order_key(&id).ends_with(['0', '5', 'a']) {
                        format!("In short, {}", sentence.to_lowercase())
                    } else {
                        sentence.clone()
                    };
                    json!([{
                        "sentence_index": index,
                        "quote": quote,
                        "reasoning": "The suggestion speaks to what this sentence plans or asks.",
                        "location": "Open questions",
                    }])
                }
                _ => json!([]),
            };
            out.insert(id, json!({ "matches": matches }));
        }
        Value::Object(out).to_string()
    }

    fn diff(request: &PromptRequest) -> String {
        let old: BTreeSet<&str> = var(request, "old_answer").split("\n\n").map(str::trim).collect();
        let fresh: Vec<&str> = var(request, "new_answer")
            .split("\n\n")
            .map(str::trim)
            .filter(|p| !p.is_empty() && !old.contains(p) && !p.starts_with('#'))
            .collect();
        if fresh.is_empty() {
            return json!({"has_meaningful_diff": false, "suggestions": []}).to_string();
        }
        let suggestions: Vec<Value> = fresh
            .iter()
            .map(|p| {
                json!({
                    "title": "Revisit the plan in light of a new result",
                    "text": format!("A new result changes the picture: {p}"),
                    "info": "This finding was not in the previous answer.",
                })
            })
            .collect();
        json!({"has_meaningful_diff": true, "suggestions": suggestions}).to_string()
    }
}

impl LlmProvider for SyntheticLlm {
    fn complete(&self, request: &PromptRequest) -> Result<String, ProviderError> {
        Ok(match request.template {
            PromptTemplate::PaperExtraction => Self::extract_papers(var(request, "doc")).to_string(),
            PromptTemplate::PaperRelation => Self::relation(request),
            PromptTemplate::DocumentAnalysis => Self::analysis(request),
            PromptTemplate::QuestionRanking => Self::question_ranking(request),
            PromptTemplate::SuggestionGeneration => Self::generation(request),
            PromptTemplate::SuggestionRanking => Self::suggestion_ranking(request),
            PromptTemplate::DocumentAnchoring => Self::anchoring(request),
            PromptTemplate::AnswerDiff => Self::diff(request),
        })
    }
}

/// Answer built from three pool papers chosen by the question's hash.
pub fn synthetic_answer(question: &str) -> RawAnswer {
    let pool = research_pool();
    let h = sha256_hex(question);
    let mut picked: Vec<&PoolPaper> = Vec::new();
    for chunk in h.as_bytes().chunks(2) {
        let n = usize::from_str_radix(std::str::from_utf8(chunk).unwrap(), 16).unwrap() % pool.len();
        if !picked.iter().any(|p| p.label == pool[n].label) {
            picked.push(&pool[n]);
        }
        if picked.len() == 3 {
            break;
        }
    }
    let mut text = format!("# Literature review\n\n{question}\n\n");
    for p in &picked {
        text.push_str(&format!("[{}] find that {}.\n\n", p.label, p.finding));
    }
    text.push_str("Taken together, the evidence is suggestive but not conclusive.");
    RawAnswer {
        answer_text: text,
        citation_labels: picked
            .iter()
            .map(|p| {
                (
                    p.label.clone(),
                    CitationRef {
                        paper_id: None,
                        title: Some(p.title.clone()),
                        url: Some(p.url.clone()),
                    },
                )
            })
            .collect(),
    }
}

/// `base` with one extra paragraph citing `paper`.
pub fn with_finding(base: &RawAnswer, paper: &PoolPaper) -> RawAnswer {
    let (body, closing) = base
        .answer_text
        .rsplit_once("\n\n")
        .unwrap_or((base.answer_text.as_str(), ""));
    let mut out = base.clone();
    out.answer_text = format!("{body}\n\n[{}] find that {}.\n\n{closing}", paper.label, paper.finding);
    out.citation_labels.insert(
        paper.label.clone(),
        CitationRef {
            paper_id: None,
            title: Some(paper.title.clone()),
            url: Some(paper.url.clone()),
        },
    );
    out
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SyntheticResearch;

impl DeepResearchProvider for SyntheticResearch {
    fn provider_id(&self) -> &str {
        "synthetic"
    }

    fn query(&self, question: &str) -> Result<RawAnswer, ProviderError> {
        Ok(synthetic_answer(question))
    }
}

/// Deep research with per-question overrides and failures on top of the
/// synthetic answers.
#[derive(Debug, Default)]
pub struct ScriptedResearch {
    answers: Mutex<BTreeMap<String, RawAnswer>>,
    failing: Mutex<BTreeSet<String>>,
    fail_everything: Mutex<bool>,
    calls: Mutex<Vec<String>>,
}

impl ScriptedResearch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_answer(&self, question: &str, answer: RawAnswer) {
        self.answers.lock().unwrap().insert(question.to_owned(), answer);
    }

    pub fn fail_question(&self, question: &str) {
        self.failing.lock().unwrap().insert(question.to_owned());
    }

    pub fn fail_all(&self, on: bool) {
        *self.fail_everything.lock().unwrap() = on;
    }

    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }
}

impl DeepResearchProvider for ScriptedResearch {
    fn provider_id(&self) -> &str {
        "scripted"
    }

    fn query(&self, question: &str) -> Result<RawAnswer, ProviderError> {
        self.calls.lock().unwrap().push(question.to_owned());
        if *self.fail_everything.lock().unwrap() || self.failing.lock().unwrap().contains(question) {
            return Err(ProviderError::Other("scripted failure".into()));
        }
        Ok(self
            .answers
            .lock()
            .unwrap()
            .get(question)
            .cloned()
            .unwrap_or_else(|| synthetic_answer(question)))
    }
}

/// Wraps a model, counting calls per template and optionally failing some
/// templates outright.
#[derive(Default)]
pub struct CountingLlm<L> {
    inner: L,
    counts: Mutex<BTreeMap<PromptTemplate, usize>>,
    failing: Mutex<BTreeSet<PromptTemplate>>,
}

impl<L: LlmProvider> CountingLlm<L> {
    pub fn new(inner: L) -> Self {
        Self {
            inner,
            counts: Mutex::default(),
            failing: Mutex::default(),
        }
    }

    pub fn fail_template(&self, template: PromptTemplate) {
        self.failing.lock().unwrap().insert(template);
    }

    pub fn count(&self, template: PromptTemplate) -> usize {
        self.counts.lock().unwrap().get(&template).copied().unwrap_or(0)
    }
}

impl<L: LlmProvider> LlmProvider for CountingLlm<L> {
    fn complete(&self, request: &PromptRequest) -> Result<String, ProviderError> {
        *self.counts.lock().unwrap().entry(request.template).or_default() += 1;
        if self.failing.lock().unwrap().contains(&request.template) {
            return Err(ProviderError::Other(format!("{} disabled", request.template)));
        }
        self.inner.complete(request)
    }
}

/// Labels cited anywhere in `text`.
pub fn cited_labels(text: &str) -> Vec<String> {
    scan_labels(text).into_iter().map(|(_, l)| l).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{injected_finding, DOC_REV1};
    use litscout_core::gateway::PromptRequest;

    #[test]
    fn answers_are_stable_and_closed() {
        let a = synthetic_answer("Why?");
        assert_eq!(a, synthetic_answer("Why?"));
        assert_eq!(a.citation_labels.len(), 3);
        for label in cited_labels(&a.answer_text) {
            assert!(a.citation_labels.contains_key(&label), "{label}");
        }
        let b = with_finding(&a, &injected_finding());
        assert_eq!(b.citation_labels.len(), 4);
        assert!(b.answer_text.ends_with("not conclusive."));
    }

    #[test]
    fn analysis_lifts_open_questions() {
        let req = PromptRequest::new(
            PromptTemplate::DocumentAnalysis,
            [("doc", DOC_REV1), ("today", "2025-03-03"), ("state_guidance", "")],
        )
        .unwrap();
        let out: Value = serde_json::from_str(&SyntheticLlm.complete(&req).unwrap()).unwrap();
        assert_eq!(out["project_state"], "Ideation");
        assert!(out["questions"].as_array().unwrap().len() >= 15);
    }
}
