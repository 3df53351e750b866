//! Tolerant parser for the tagged summary/suggestions completion, and the
//! canonical renderer it round-trips with.

use std::sync::OnceLock;

use regex::Regex;

use super::{GenerationResult, PaperLabel, SuggestionDraft};
use crate::citations::canonical_label;
use crate::error::ParseError;
use crate::gateway::structured::strip_scratchpad;

/// Content of `<open>…</close>` inside `hay`. A missing closer ends the
/// section at the earliest of `stops` (or the end of `hay`).
fn section<'a>(hay: &'a str, open: &str, close: &str, stops: &[&str]) -> Option<&'a str> {
    let start = find_tag(hay, open)? + open.len();
    let body = &hay[start..];
    let end = body
        .find(close)
        .or_else(|| stops.iter().filter_map(|s| find_tag(body, s)).min())
        .unwrap_or(body.len());
    Some(&body[..end])
}

fn find_tag(hay: &str, tag: &str) -> Option<usize> {
    hay.find(tag)
}

fn clean(s: &str) -> String {
    s.trim().to_owned()
}

fn lookup_attr() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?i)to_lookup\s*=\s*["'\[]?\s*(true|false)"#).unwrap())
}

fn lookup_suffix() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\(\s*to[ _]lookup[^)]*\)\s*$").unwrap())
}

fn parse_papers(block: &str) -> Vec<PaperLabel> {
    let mut out = Vec::new();
    let mut rest = block;
    while let Some(at) = rest.find("<paper") {
        let after = &rest[at + "<paper".len()..];
        // `<papers>` is the container, not an entry
        if after.starts_with('s') {
            rest = after;
            continue;
        }
        let Some(gt) = after.find('>') else { break };
        let attrs = &after[..gt];
        let body = &after[gt + 1..];
        let end = [body.find("</paper>"), body.find("<paper"), body.find('\n')]
            .into_iter()
            .flatten()
            .min()
            .unwrap_or(body.len());
        let mut label = body[..end].trim().to_owned();
        let mut to_lookup = lookup_attr()
            .captures(attrs)
            .is_some_and(|c| c[1].eq_ignore_ascii_case("true"));
        if let Some(m) = lookup_suffix().find(&label) {
            to_lookup = true;
            label.truncate(m.start());
        }
        let label = canonical_label(&label);
        if !label.is_empty() {
            out.push(PaperLabel { label, to_lookup });
        }
        rest = &body[end..];
    }
    out
}

fn parse_suggestion(block: &str) -> Option<SuggestionDraft> {
    let field_stops = ["<title>", "<text>", "<papers>", "<info>", "</suggestion>"];
    let title = clean(section(block, "<title>", "</title>", &field_stops)?);
    let text = clean(section(block, "<text>", "</text>", &field_stops)?);
    let papers = section(block, "<papers>", "</papers>", &["<info>", "</suggestion>"])
        .map(parse_papers)
        .unwrap_or_default();
    let info = section(block, "<info>", "</info>", &field_stops)
        .map(clean)
        .unwrap_or_default();
    (!title.is_empty() && !text.is_empty()).then_some(SuggestionDraft {
        title,
        text,
        papers,
        info,
    })
}

/// Parse a generation completion. Scratchpad content is ignored and
/// missing closing tags are tolerated where the next tag makes the boundary
/// clear. A missing summary or no well-formed suggestion is an error.
pub fn parse_generation_output(raw: &str, question_id: &str) -> Result<GenerationResult, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Malformed("empty output".into()));
    }
    let text = strip_scratchpad(raw, Some("<output>"));
    let mut region = match text.find("<output>") {
        Some(p) => &text[p + "<output>".len()..],
        None => text.as_str(),
    };
    if let Some(end) = region.find("</output>") {
        region = &region[..end];
    }

    let summary = section(region, "<summary>", "</summary>", &["<suggestions>", "<suggestion>"])
        .map(clean)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ParseError::Schema("missing <summary>".into()))?;

    let mut suggestions = Vec::new();
    let mut rest = region;
    while let Some(at) = find_tag(rest, "<suggestion>") {
        let body = &rest[at + "<suggestion>".len()..];
        let end = [
            body.find("</suggestion>"),
            find_tag(body, "<suggestion>"),
            body.find("</suggestions>"),
        ]
        .into_iter()
        .flatten()
        .min()
        .unwrap_or(body.len());
        match parse_suggestion(&body[..end]) {
            Some(s) => suggestions.push(s),
            None => tracing::debug!("skipping suggestion block without title or text"),
        }
        rest = &body[end..];
    }
    if suggestions.is_empty() {
        return Err(ParseError::Schema("no well-formed <suggestion> blocks".into()));
    }
    Ok(GenerationResult {
        question_id: question_id.to_owned(),
        summary,
        suggestions,
    })
}

/// Canonical tagged form of a result.
pub fn render_generation_output(result: &GenerationResult) -> String {
    let mut out = String::from("<output>\n<summary>\n");
    out.push_str(&result.summary);
    out.push_str("\n</summary>\n<suggestions>\n");
    for s in &result.suggestions {
        out.push_str("<suggestion>\n");
        out.push_str(&format!("<title>{}</title>\n", s.title));
        out.push_str(&format!("<text>{}</text>\n", s.text));
        out.push_str("<papers>\n");
        for p in &s.papers {
            out.push_str(&format!("<paper to_lookup={}>[{}]</paper>\n", p.to_lookup, p.label));
        }
        out.push_str("</papers>\n");
        out.push_str(&format!("<info>{}</info>\n", s.info));
        out.push_str("</suggestion>\n");
    }
    out.push_str("</suggestions>\n</output>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CANONICAL: &str = "<scratchpad>\nplan: talk about <title> things\n</scratchpad>\n<output>\n    <summary>\n    Two groups [A 2020] studied it.\n    </summary>\n\n    <suggestions>\n    <suggestion>\n    <title>Adopt metric M</title>\n    <text>Consider metric M from [A 2020].</text>\n    <papers>\n    <paper to_lookup=false>[A 2020]</paper>\n    <paper to_lookup=[true]>[B 2021] (to lookup - if applicable)</paper>\n    </papers>\n    <info>M correlates with judgments.</info>\n    </suggestion>\n    </suggestions>\n</output>";

    #[test]
    fn canonical_structure() {
        let r = parse_generation_output(CANONICAL, "q1").unwrap();
        assert_eq!(r.summary, "Two groups [A 2020] studied it.");
        assert_eq!(r.suggestions.len(), 1);
        let s = &r.suggestions[0];
        assert_eq!(s.title, "Adopt metric M");
        assert_eq!(
            s.papers,
            vec![
                PaperLabel { label: "A 2020".into(), to_lookup: false },
                PaperLabel { label: "B 2021".into(), to_lookup: true },
            ]
        );
        assert_eq!(s.info, "M correlates with judgments.");
    }

    #[test]
    fn missing_closers_recovered() {
        let mutated = CANONICAL
            .replace("</output>", "")
            .replace("</suggestions>", "")
            .replace("</info>", "")
            .replace("</suggestion>", "");
        assert_eq!(
            parse_generation_output(&mutated, "q1").unwrap(),
            parse_generation_output(CANONICAL, "q1").unwrap()
        );
    }

    #[test]
    fn unclosed_scratchpad_stops_at_output() {
        let raw = CANONICAL.replace("</scratchpad>", "");
        assert!(parse_generation_output(&raw, "q1").is_ok());
    }

    #[test]
    fn rejects_without_summary_or_suggestions() {
        assert!(parse_generation_output("", "q").is_err());
        assert!(parse_generation_output("<output><suggestions><suggestion><title>T</title><text>x</text></suggestion></suggestions></output>", "q").is_err());
        assert!(parse_generation_output("<output><summary>S</summary><suggestions></suggestions></output>", "q").is_err());
    }

    fn field() -> impl Strategy<Value = String> {
        "[A-Za-z0-9][A-Za-z0-9 ,.;:'()\\-]{0,40}[A-Za-z0-9.]"
    }

    fn label() -> impl Strategy<Value = String> {
        "[A-Z][a-z]{1,8} (et al\\., )?(19|20)[0-9]{2}"
    }

    prop_compose! {
        fn draft()(
            title in field(),
            text in field(),
            info in field(),
            papers in proptest::collection::vec((label(), any::<bool>()), 0..4),
        ) -> SuggestionDraft {
            SuggestionDraft {
                title,
                text,
                info,
                papers: papers.into_iter().map(|(label, to_lookup)| PaperLabel { label, to_lookup }).collect(),
            }
        }
    }

    proptest! {
        #[test]
        fn parse_render_round_trip(
            summary in field(),
            suggestions in proptest::collection::vec(draft(), 1..6),
        ) {
            let result = GenerationResult { question_id: "q".into(), summary, suggestions };
            let rendered = render_generation_output(&result);
            prop_assert_eq!(parse_generation_output(&rendered, "q").unwrap(), result);
        }

        #[test]
        fn never_panics(raw in "(<|>|/|output|summary|suggestions?|title|text|papers?|info|scratchpad| |x|\n){0,80}") {
            let _ = parse_generation_output(&raw, "q");
        }
    }
}
