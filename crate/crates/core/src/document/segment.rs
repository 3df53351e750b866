//! Deterministic sentence segmentation over normalized markdown.
//!
//! Rules:
//! - headings, list items and table rows are single sentences;
//! - other lines form paragraphs (split at blank lines);
//! - inside a paragraph, `.`, `!` or `?` (plus any closing quotes or
//!   brackets) followed by whitespace or the paragraph end closes a sentence,
//!   unless the period ends one of [`ABBREVIATIONS`].
//!
//! Spans are character (Unicode scalar) offsets into the text and exclude
//! surrounding whitespace.

use serde::{Deserialize, Serialize};

pub const ABBREVIATIONS: &[&str] = &["e.g.", "i.e.", "et al.", "Fig.", "vs."];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceEntry {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub content: String,
}

pub fn segment_sentences(text: &str) -> Vec<SentenceEntry> {
    let mut byte_spans = Vec::new();
    let mut paragraph: Option<(usize, usize)> = None;
    let mut offset = 0;

    for line in text.split_inclusive('\n') {
        let line_start = offset;
        let line_end = offset + line.len();
        offset = line_end;

        let trimmed = line.trim_start();
        if trimmed.trim().is_empty() {
            flush_paragraph(text, &mut paragraph, &mut byte_spans);
        } else if is_standalone_line(trimmed) {
            flush_paragraph(text, &mut paragraph, &mut byte_spans);
            push_trimmed(text, line_start, line_end, &mut byte_spans);
        } else {
            paragraph = Some(match paragraph {
                Some((s, _)) => (s, line_end),
                None => (line_start, line_end),
            });
        }
    }
    flush_paragraph(text, &mut paragraph, &mut byte_spans);

    to_entries(text, byte_spans)
}

fn is_standalone_line(line: &str) -> bool {
    is_heading(line) || is_list_item(line) || line.starts_with('|')
}

fn is_heading(line: &str) -> bool {
    let hashes = line.bytes().take_while(|&b| b == b'#').count();
    (1..=6).contains(&hashes)
        && line[hashes..]
            .chars()
            .next()
            .is_none_or(char::is_whitespace)
}

fn is_list_item(line: &str) -> bool {
    let mut chars = line.chars();
    match chars.next() {
        Some('-' | '*' | '+') => chars.next().is_some_and(char::is_whitespace),
        Some(c) if c.is_ascii_digit() => {
            let digits = line.bytes().take_while(u8::is_ascii_digit).count();
            let rest = &line[digits..];
            digits <= 9
                && (rest.starts_with(". ") || rest.starts_with(") ") || rest.starts_with(".\t"))
        }
        _ => false,
    }
}

fn flush_paragraph(text: &str, paragraph: &mut Option<(usize, usize)>, out: &mut Vec<(usize, usize)>) {
    let Some((start, end)) = paragraph.take() else {
        return;
    };
    let body = &text[start..end];
    let mut sentence_start = 0;
    let mut iter = body.char_indices().peekable();

    while let Some((i, c)) = iter.next() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        // absorb repeated terminators and closing quotes/brackets
        let mut close = i + c.len_utf8();
        while let Some(&(j, next)) = iter.peek() {
            if matches!(next, '.' | '!' | '?' | '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}') {
                close = j + next.len_utf8();
                iter.next();
            } else {
                break;
            }
        }
        let at_boundary = match body[close..].chars().next() {
            None => true,
            Some(n) => n.is_whitespace(),
        };
        if !at_boundary {
            continue;
        }
        if c == '.' && ends_with_abbreviation(&body[sentence_start..i + 1]) {
            continue;
        }
        push_trimmed(text, start + sentence_start, start + close, out);
        sentence_start = close;
    }
    push_trimmed(text, start + sentence_start, end, out);
}

fn ends_with_abbreviation(candidate: &str) -> bool {
    ABBREVIATIONS.iter().any(|abbr| {
        candidate.ends_with(abbr)
            && candidate[..candidate.len() - abbr.len()]
                .chars()
                .next_back()
                .is_none_or(|c| !c.is_alphanumeric())
    })
}

fn push_trimmed(text: &str, start: usize, end: usize, out: &mut Vec<(usize, usize)>) {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if !trimmed.is_empty() {
        out.push((start + lead, start + lead + trimmed.len()));
    }
}

fn to_entries(text: &str, byte_spans: Vec<(usize, usize)>) -> Vec<SentenceEntry> {
    // spans are increasing; walk the text once to translate byte offsets
    let mut chars_before = 0;
    let mut cursor = 0;
    let mut to_char = |byte: usize| {
        chars_before += text[cursor..byte].chars().count();
        cursor = byte;
        chars_before
    };
    byte_spans
        .into_iter()
        .enumerate()
        .map(|(index, (s, e))| SentenceEntry {
            index,
            start: to_char(s),
            end: to_char(e),
            content: text[s..e].to_owned(),
        })
        .collect()
}

/// Slice `text` by character offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let s = indices.nth(start).unwrap_or(text.len());
    let e = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        s
    };
    &text[s..e]
}
