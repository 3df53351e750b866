//! Paper catalog: mentions extracted from the document, resolved against
//! the metadata provider, tagged inline, and summarized against the project.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{ParseError, ProviderError, Result};
use crate::gateway::structured::{extract_json, str_field};
use crate::gateway::{normalize_title, Gateway, PaperMetadata, PromptRequest, PromptTemplate};
use crate::parallel::{bounded_map, Parallelism};

/// Hosts a link-only mention may point at.
pub const LINK_DOMAINS: [&str; 5] = [
    "semanticscholar.org",
    "arxiv.org",
    "aclweb.org",
    "acm.org",
    "biorxiv.org",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperMention {
    pub title: Option<String>,
    pub url: Option<String>,
    pub context: String,
    /// Anchor text of the link when the mention is a bare link.
    pub link_label: Option<String>,
    pub project_relation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRef {
    pub paper_id: String,
    pub title: String,
    pub url: Option<String>,
    #[serde(default, rename = "abstract")]
    pub abstract_text: Option<String>,
    pub mention_contexts: Vec<String>,
    /// Strings as they appear in the document (titles, URLs, link text);
    /// used to find mention sites when annotating.
    #[serde(default)]
    pub aliases: Vec<String>,
    /// Relation stated or implied by the document itself.
    #[serde(default)]
    pub stated_relation: Option<String>,
    pub project_relation: Option<String>,
    #[serde(default)]
    pub relation_user_edited: bool,
    #[serde(default)]
    pub removed_by_user: bool,
}

impl PaperRef {
    pub fn is_active(&self) -> bool {
        !self.removed_by_user
    }
}

fn host_allowed(url: &str) -> bool {
    let Ok(parsed) = url::Url::parse(url.trim()) else {
        return false;
    };
    let Some(host) = parsed.host_str() else {
        return false;
    };
    let host = host.to_ascii_lowercase();
    LINK_DOMAINS
        .iter()
        .any(|d| host == *d || host.ends_with(&format!(".{d}")))
}

pub fn extraction_request(text: &str) -> Result<PromptRequest> {
    PromptRequest::new(
        PromptTemplate::PaperExtraction,
        BTreeMap::from([("doc".to_owned(), text.to_owned())]),
    )
}

/// Parse the mention list. Entries with neither title nor URL are dropped,
/// as are link-only entries pointing outside [`LINK_DOMAINS`].
pub fn parse_mentions(raw: &str) -> Result<Vec<PaperMention>, ParseError> {
    let value = extract_json(raw)?;
    let items = match &value {
        Value::Object(map) => map
            .get("papers")
            .and_then(Value::as_array)
            .ok_or_else(|| ParseError::Schema("missing \"papers\" array".into()))?,
        Value::Array(items) => items,
        _ => return Err(ParseError::Schema("expected an object with \"papers\"".into())),
    };
    let mut out = Vec::new();
    for item in items {
        let title = str_field(item, "title").map(str::to_owned);
        let url = str_field(item, "url").map(str::to_owned);
        if title.is_none() {
            match &url {
                Some(u) if host_allowed(u) => {}
                _ => {
                    tracing::debug!(entry = %item, "dropping mention without title or usable link");
                    continue;
                }
            }
        }
        out.push(PaperMention {
            title,
            url,
            context: str_field(item, "context").unwrap_or_default().to_owned(),
            link_label: str_field(item, "text").map(str::to_owned),
            project_relation: str_field(item, "project_relation").map(str::to_owned),
        });
    }
    Ok(out)
}

pub fn extract_mentions(gateway: &Gateway, text: &str) -> Result<Vec<PaperMention>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let request = extraction_request(text)?;
    gateway.complete_parsed(&request, parse_mentions)
}

/// Resolve one mention. A recognizable URL wins; otherwise the title must
/// match a search hit exactly after normalization.
pub fn resolve_mention(
    gateway: &Gateway,
    mention: &PaperMention,
) -> Result<Option<PaperMetadata>, ProviderError> {
    if let Some(url) = &mention.url {
        if let Some(found) = gateway.lookup_paper(url)? {
            return Ok(Some(found));
        }
    }
    match &mention.title {
        Some(title) => gateway.lookup_paper(title),
        None => Ok(None),
    }
}

/// Resolve mentions with bounded fan-out. Unresolved mentions are logged
/// and dropped; provider failures are logged and leave the mention out of
/// this run.
pub fn resolve_all(
    gateway: &Gateway,
    mentions: Vec<PaperMention>,
    par: Parallelism,
) -> Vec<(PaperMention, PaperMetadata)> {
    bounded_map(par, mentions, |m| match resolve_mention(gateway, &m) {
        Ok(Some(meta)) => Some((m, meta)),
        Ok(None) => {
            tracing::info!(title = ?m.title, url = ?m.url, context = %m.context, "unresolved paper mention");
            None
        }
        Err(e) => {
            tracing::warn!(title = ?m.title, url = ?m.url, error = %e, "paper lookup failed");
            None
        }
    })
    .into_iter()
    .flatten()
    .collect()
}

fn push_unique(list: &mut Vec<String>, value: &str) {
    let value = value.trim();
    if !value.is_empty() && !list.iter().any(|v| v == value) {
        list.push(value.to_owned());
    }
}

/// Fold resolved mentions into the catalog. Existing entries keep their
/// user flags and edited relations; new contexts and aliases are added.
/// Returns the ids of papers that were not in the catalog before.
pub fn merge_catalog(
    catalog: &mut Vec<PaperRef>,
    resolved: Vec<(PaperMention, PaperMetadata)>,
) -> Vec<String> {
    let mut added = Vec::new();
    for (mention, meta) in resolved {
        let idx = match catalog.iter().position(|p| p.paper_id == meta.paper_id) {
            Some(i) => i,
            None => {
                catalog.push(PaperRef {
                    paper_id: meta.paper_id.clone(),
                    title: meta.title.clone(),
                    url: meta.url.clone().or_else(|| mention.url.clone()),
                    abstract_text: meta.abstract_text.clone(),
                    mention_contexts: Vec::new(),
                    aliases: Vec::new(),
                    stated_relation: None,
                    project_relation: None,
                    relation_user_edited: false,
                    removed_by_user: false,
                });
                added.push(meta.paper_id.clone());
                catalog.len() - 1
            }
        };
        let entry = &mut catalog[idx];
        push_unique(&mut entry.mention_contexts, &mention.context);
        for alias in [&mention.title, &mention.url, &mention.link_label]
            .into_iter()
            .flatten()
        {
            push_unique(&mut entry.aliases, alias);
        }
        if entry.stated_relation.is_none() {
            entry.stated_relation = mention.project_relation.clone();
        }
        if entry.abstract_text.is_none() {
            entry.abstract_text = meta.abstract_text.clone();
        }
    }
    added
}

fn escape_attr(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('"', "&quot;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn paper_tag(paper: &PaperRef) -> String {
    format!(
        "<Paper id=\"{}\" title=\"{}\"/>",
        escape_attr(&paper.paper_id),
        escape_attr(&paper.title)
    )
}

/// Byte ranges of existing `<Paper .../>` tags.
fn tag_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut from = 0;
    while let Some(rel) = text[from..].find("<Paper ") {
        let start = from + rel;
        match text[start..].find("/>") {
            Some(end) => {
                spans.push((start, start + end + 2));
                from = start + end + 2;
            }
            None => break,
        }
    }
    spans
}

/// Where the tag for a mention ending at `end` goes: after the whole
/// markdown link if the mention sits inside one.
fn insertion_point(text: &str, end: usize) -> usize {
    let rest = &text[end..];
    let link_close = |after: &str, base: usize| -> usize {
        match after.find(')') {
            Some(p) if !after[..p].contains('\n') => base + p + 1,
            _ => base,
        }
    };
    if let Some(after) = rest.strip_prefix("](") {
        return link_close(after, end + 2);
    }
    if rest.starts_with(')') && text[..end].rfind("](").is_some_and(|p| !text[p..end].contains(char::is_whitespace)) {
        return end + 1;
    }
    end
}

fn on_word_boundary(text: &str, start: usize, end: usize) -> bool {
    let word = |c: char| c.is_alphanumeric() || c == '_';
    let left_ok = !text[start..].starts_with(word)
        || !text[..start].chars().next_back().is_some_and(word);
    let right_ok = !text[..end].ends_with(word) || !text[end..].starts_with(word);
    left_ok && right_ok
}

fn line_of(text: &str, pos: usize) -> usize {
    text[..pos].bytes().filter(|&b| b == b'\n').count()
}

/// Insert a paper tag after each mention site of every active paper.
/// Removed papers get no tags. Sites already followed by the paper's tag are
/// left alone, so annotating twice changes nothing. One tag per paper per
/// line at most.
pub fn annotate_document(text: &str, catalog: &[PaperRef]) -> String {
    let existing = tag_spans(text);
    let inside_tag = |pos: usize| existing.iter().any(|&(s, e)| pos >= s && pos < e);
    let mut inserts: BTreeMap<usize, Vec<String>> = BTreeMap::new();

    for paper in catalog.iter().filter(|p| p.is_active()) {
        let tag = paper_tag(paper);
        let mut aliases: Vec<&str> = paper.aliases.iter().map(String::as_str).collect();
        if aliases.is_empty() {
            aliases.push(&paper.title);
        }
        let mut by_line: BTreeMap<usize, usize> = BTreeMap::new();
        for alias in aliases.into_iter().filter(|a| !a.trim().is_empty()) {
            let mut from = 0;
            while let Some(rel) = text[from..].find(alias) {
                let start = from + rel;
                let end = start + alias.len();
                from = end;
                if inside_tag(start) || !on_word_boundary(text, start, end) {
                    continue;
                }
                let at = insertion_point(text, end);
                let line = line_of(text, start);
                let slot = by_line.entry(line).or_insert(at);
                *slot = (*slot).max(at);
            }
        }
        for at in by_line.into_values() {
            let already = {
                let mut rest = text[at..].trim_start_matches(' ');
                let mut found = false;
                while rest.starts_with("<Paper ") {
                    if rest.starts_with(&tag) {
                        found = true;
                        break;
                    }
                    match rest.find("/>") {
                        Some(e) => rest = rest[e + 2..].trim_start_matches(' '),
                        None => break,
                    }
                }
                found
            };
            if !already {
                inserts.entry(at).or_default().push(tag.clone());
            }
        }
    }

    let mut out = String::with_capacity(text.len() + inserts.len() * 48);
    let mut last = 0;
    for (at, tags) in inserts {
        out.push_str(&text[last..at]);
        for t in tags {
            out.push(' ');
            out.push_str(&t);
        }
        last = at;
    }
    out.push_str(&text[last..]);
    out
}

pub fn relation_request(
    excerpt: &str,
    title: &str,
    abstract_text: Option<&str>,
    stated_relation: Option<&str>,
) -> Result<PromptRequest> {
    PromptRequest::new(
        PromptTemplate::PaperRelation,
        BTreeMap::from([
            ("document_excerpt".to_owned(), excerpt.to_owned()),
            ("paper_title".to_owned(), title.to_owned()),
            (
                "paper_abstract".to_owned(),
                abstract_text.unwrap_or("(no abstract available)").to_owned(),
            ),
            (
                "project_relation".to_owned(),
                stated_relation.unwrap_or("None").to_owned(),
            ),
        ]),
    )
}

/// Keep at most the first two sentences of a model summary.
pub fn trim_to_two_sentences(raw: &str) -> String {
    let text = raw.trim().trim_start_matches("Summary:").trim();
    let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let sentences = crate::document::segment_sentences(&text);
    match sentences.get(1) {
        Some(second) => crate::document::char_slice(&text, 0, second.end).trim().to_owned(),
        None => text,
    }
}

/// Relation summary for one paper. `None` when the paper's relation was
/// edited by the user, there is no excerpt, or the provider failed.
pub fn summarize_relation(gateway: &Gateway, paper: &PaperRef) -> Option<String> {
    if paper.relation_user_edited || paper.removed_by_user {
        return None;
    }
    let excerpt = paper.mention_contexts.join("\n...\n");
    if excerpt.trim().is_empty() {
        return None;
    }
    let request = relation_request(
        &excerpt,
        &paper.title,
        paper.abstract_text.as_deref(),
        paper.stated_relation.as_deref(),
    )
    .ok()?;
    match gateway.complete(&request) {
        Ok(text) => Some(trim_to_two_sentences(&text)).filter(|s| !s.is_empty()),
        Err(e) => {
            tracing::warn!(paper = %paper.paper_id, error = %e, "relation summary failed");
            None
        }
    }
}

/// Fill in missing relation summaries with bounded fan-out.
pub fn summarize_missing(gateway: &Gateway, catalog: &mut [PaperRef], par: Parallelism) {
    let todo: Vec<usize> = catalog
        .iter()
        .enumerate()
        .filter(|(_, p)| p.project_relation.is_none() && !p.relation_user_edited && p.is_active())
        .map(|(i, _)| i)
        .collect();
    let inputs: Vec<(usize, PaperRef)> = todo.iter().map(|&i| (i, catalog[i].clone())).collect();
    let results = bounded_map(par, inputs, |(i, p)| (i, summarize_relation(gateway, &p)));
    for (i, summary) in results {
        if summary.is_some() {
            catalog[i].project_relation = summary;
        }
    }
}

/// Titles as they may appear in downstream prompts, for removed papers.
pub fn removed_titles(catalog: &[PaperRef]) -> BTreeSet<String> {
    catalog
        .iter()
        .filter(|p| p.removed_by_user)
        .map(|p| normalize_title(&p.title))
        .collect()
}
