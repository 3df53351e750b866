//! Helpers for pulling structured data out of free-form model output.

use serde_json::Value;

use crate::error::ParseError;

/// Find the JSON value in a completion: the whole text, a fenced block, or
/// the outermost `{...}` / `[...]` span.
pub fn extract_json(raw: &str) -> Result<Value, ParseError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(ParseError::Malformed("empty output".into()));
    }
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Ok(v);
    }
    if let Some(fenced) = fenced_block(trimmed) {
        if let Ok(v) = serde_json::from_str(fenced.trim()) {
            return Ok(v);
        }
    }
    for (open, close) in [('{', '}'), ('[', ']')] {
        if let (Some(s), Some(e)) = (trimmed.find(open), trimmed.rfind(close)) {
            if s < e {
                if let Ok(v) = serde_json::from_str(&trimmed[s..=e]) {
                    return Ok(v);
                }
            }
        }
    }
    Err(ParseError::Malformed("no JSON value found".into()))
}

fn fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

/// Remove `<scratchpad>...</scratchpad>` sections. An unclosed scratchpad
/// runs until `stop_at` (if it appears later) or the end of the text.
pub fn strip_scratchpad(raw: &str, stop_at: Option<&str>) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(open) = rest.find("<scratchpad>") {
        out.push_str(&rest[..open]);
        let inside = &rest[open + "<scratchpad>".len()..];
        if let Some(close) = inside.find("</scratchpad>") {
            rest = &inside[close + "</scratchpad>".len()..];
        } else if let Some(stop) = stop_at.and_then(|s| inside.find(s)) {
            rest = &inside[stop..];
        } else {
            rest = "";
        }
    }
    out.push_str(rest);
    out
}

pub(crate) fn str_field<'a>(v: &'a Value, key: &str) -> Option<&'a str> {
    v.get(key)
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn bare_fenced_and_embedded_json() {
        assert_eq!(extract_json(r#"{"a":1}"#).unwrap(), json!({"a": 1}));
        assert_eq!(
            extract_json("Here you go:\n```json\n{\"a\": 2}\n```\n").unwrap(),
            json!({"a": 2})
        );
        assert_eq!(
            extract_json("Result follows {\"a\": [1, 2]} done").unwrap(),
            json!({"a": [1, 2]})
        );
        assert!(extract_json("no json here").is_err());
        assert!(extract_json("   ").is_err());
    }

    #[test]
    fn scratchpad_removed() {
        assert_eq!(
            strip_scratchpad("<scratchpad>think</scratchpad>\nanswer", None),
            "\nanswer"
        );
        assert_eq!(
            strip_scratchpad("a<scratchpad>never closed <output>x</output>", Some("<output>")),
            "a<output>x</output>"
        );
        assert_eq!(strip_scratchpad("a<scratchpad>never closed", None), "a");
    }
}
