//! Inline citation labels: `[Park et al., 2023]`-style markers in
//! deep-research reports and in text derived from them.

use std::ops::Range;

/// Bracketed labels in `text`, in order, as (byte range incl. brackets,
/// trimmed inner label). Markdown links `[x](..)`, reference links `[x][y]`
/// and images `![x]` are not labels.
pub fn scan_labels(text: &str) -> Vec<(Range<usize>, String)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'[' {
            i += 1;
            continue;
        }
        let Some(rel_close) = text[i + 1..].find([']', '[', '\n']) else {
            break;
        };
        let close = i + 1 + rel_close;
        if bytes[close] != b']' {
            i = close;
            continue;
        }
        let is_image = i > 0 && bytes[i - 1] == b'!';
        let followed_by_link = matches!(bytes.get(close + 1), Some(b'(' | b'['));
        let inner = text[i + 1..close].trim();
        if !is_image && !followed_by_link && !inner.is_empty() {
            out.push((i..close + 1, inner.to_owned()));
        }
        i = close + 1;
    }
    out
}

/// Canonical form of a label as a model may echo it: surrounding
/// whitespace and one pair of brackets removed.
pub fn canonical_label(label: &str) -> String {
    let t = label.trim();
    t.strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .unwrap_or(t)
        .trim()
        .to_owned()
}
