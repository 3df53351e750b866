use htmd::options::{BulletListMarker, Options};
use htmd::HtmlToMarkdown;

use super::ContentKind;
use crate::error::DocumentError;

/// Convert fetched bytes into the markdown the rest of the pipeline reads.
///
/// Markdown and plain text pass through unchanged. HTML is converted with
/// ATX headings, inline links and `-` bullets; text content (including any
/// dates) is carried over as written.
pub fn normalize(raw: &[u8], kind: ContentKind) -> Result<String, DocumentError> {
    let text = std::str::from_utf8(raw).map_err(|_| DocumentError::Undecodable)?;
    match kind {
        ContentKind::Markdown | ContentKind::PlainText => Ok(text.to_owned()),
        ContentKind::Html => {
            if text.trim().is_empty() {
                return Ok(String::new());
            }
            let converter = HtmlToMarkdown::builder()
                .options(Options {
                    bullet_list_marker: BulletListMarker::Dash,
                    ul_bullet_spacing: 1,
                    ol_number_spacing: 1,
                    ..Options::default()
                })
                .skip_tags(vec!["script", "style", "head"])
                .build();
            let mut md = converter
                .convert(text)
                .map_err(|e| DocumentError::UnsupportedContent(format!("html conversion: {e}")))?;
            if !md.ends_with('\n') {
                md.push('\n');
            }
            Ok(md)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input() {
        assert_eq!(normalize(b"", ContentKind::Markdown).unwrap(), "");
        assert_eq!(normalize(b"", ContentKind::Html).unwrap(), "");
    }

    #[test]
    fn markdown_is_identity() {
        let src = "# Title\n\n- item one\n- [link](https://arxiv.org/abs/1234.5678)\n\n12 Aug 2025: notes.\n";
        assert_eq!(normalize(src.as_bytes(), ContentKind::Markdown).unwrap(), src);
    }

    #[test]
    fn invalid_utf8_rejected() {
        assert!(matches!(
            normalize(&[0xff, 0xfe, 0x00], ContentKind::PlainText),
            Err(DocumentError::Undecodable)
        ));
    }

    #[test]
    fn html_dates_survive() {
        let html = "<p>Meeting on 22 Aug 2025: decided on metrics.</p>";
        let md = normalize(html.as_bytes(), ContentKind::Html).unwrap();
        assert!(md.contains("22 Aug 2025"), "{md}");
    }
}
