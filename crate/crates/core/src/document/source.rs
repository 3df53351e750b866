use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::DocumentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    LocalFile,
    HttpUrl,
    Connector,
}

impl SourceKind {
    fn as_str(self) -> &'static str {
        match self {
            SourceKind::LocalFile => "local_file",
            SourceKind::HttpUrl => "http_url",
            SourceKind::Connector => "connector",
        }
    }
}

/// What a caller supplies when attaching a document to a project.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub address: String,
    #[serde(default)]
    pub display_name: Option<String>,
    /// Caller-chosen id; assigned `src-N` when absent.
    #[serde(default)]
    pub source_id: Option<String>,
}

impl SourceSpec {
    pub fn new(kind: SourceKind, address: impl Into<String>) -> Self {
        Self {
            kind,
            address: address.into(),
            display_name: None,
            source_id: None,
        }
    }

    pub fn validate(&self) -> Result<(), DocumentError> {
        let malformed = || DocumentError::MalformedAddress {
            kind: self.kind.as_str(),
            address: self.address.clone(),
        };
        let addr = self.address.trim();
        if addr.is_empty() {
            return Err(malformed());
        }
        match self.kind {
            SourceKind::LocalFile => Ok(()),
            SourceKind::HttpUrl => {
                let url = url::Url::parse(addr).map_err(|_| malformed())?;
                if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
                    return Err(malformed());
                }
                Ok(())
            }
            SourceKind::Connector => match addr.split_once(':') {
                Some((name, rest)) if !name.is_empty() && !rest.is_empty() => Ok(()),
                _ => Err(malformed()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceLocator {
    pub source_id: String,
    pub kind: SourceKind,
    pub address: String,
    pub display_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentKind {
    Markdown,
    PlainText,
    Html,
}

impl ContentKind {
    pub fn from_extension(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "md" | "markdown" => Some(ContentKind::Markdown),
            "txt" | "text" => Some(ContentKind::PlainText),
            "html" | "htm" => Some(ContentKind::Html),
            _ => None,
        }
    }

    pub fn from_mime(content_type: &str) -> Option<Self> {
        let mime = content_type
            .split(';')
            .next()
            .unwrap_or("")
            .trim()
            .to_ascii_lowercase();
        match mime.as_str() {
            "text/markdown" | "text/x-markdown" => Some(ContentKind::Markdown),
            "text/plain" => Some(ContentKind::PlainText),
            "text/html" | "application/xhtml+xml" => Some(ContentKind::Html),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedDocument {
    pub bytes: Vec<u8>,
    pub last_modified: Option<DateTime<Utc>>,
    pub content_kind: ContentKind,
}

/// Extension point for document sources that are neither files nor plain
/// HTTP (shared-drive APIs and the like). Registered by name; a connector
/// address has the form `name:reference`.
pub trait Connector: Send + Sync {
    fn fetch(&self, reference: &str) -> Result<FetchedDocument, DocumentError>;
}

#[derive(Clone, Default)]
pub struct Fetcher {
    connectors: BTreeMap<String, Arc<dyn Connector>>,
    timeout: Option<Duration>,
}

impl fmt::Debug for Fetcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fetcher")
            .field("connectors", &self.connectors.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Fetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    pub fn with_connector(mut self, name: impl Into<String>, connector: Arc<dyn Connector>) -> Self {
        self.connectors.insert(name.into(), connector);
        self
    }

    pub fn fetch(&self, locator: &SourceLocator) -> Result<FetchedDocument, DocumentError> {
        match locator.kind {
            SourceKind::LocalFile => fetch_local(Path::new(&locator.address)),
            SourceKind::HttpUrl => {
                fetch_http(&locator.address, self.timeout.unwrap_or(Duration::from_secs(30)))
            }
            SourceKind::Connector => {
                let (name, reference) = locator.address.split_once(':').ok_or_else(|| {
                    DocumentError::MalformedAddress {
                        kind: "connector",
                        address: locator.address.clone(),
                    }
                })?;
                let connector =
                    self.connectors
                        .get(name)
                        .ok_or_else(|| DocumentError::Unreachable {
                            address: locator.address.clone(),
                            reason: format!("no connector registered as {name:?}"),
                        })?;
                connector.fetch(reference)
            }
        }
    }
}

fn fetch_local(path: &Path) -> Result<FetchedDocument, DocumentError> {
    let content_kind = ContentKind::from_extension(path).ok_or_else(|| {
        DocumentError::UnsupportedContent(format!("unknown file extension: {}", path.display()))
    })?;
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::PermissionDenied => {
            DocumentError::PermissionDenied(path.display().to_string())
        }
        _ => DocumentError::Unreachable {
            address: path.display().to_string(),
            reason: e.to_string(),
        },
    })?;
    let last_modified = std::fs::metadata(path)
        .and_then(|m| m.modified())
        .ok()
        .map(DateTime::<Utc>::from);
    Ok(FetchedDocument {
        bytes,
        last_modified,
        content_kind,
    })
}

fn fetch_http(address: &str, timeout: Duration) -> Result<FetchedDocument, DocumentError> {
    let unreachable = |reason: String| DocumentError::Unreachable {
        address: address.to_owned(),
        reason,
    };
    let mut resp = crate::http::agent(timeout)
        .get(address)
        .call()
        .map_err(|e| unreachable(e.to_string()))?;
    let status = resp.status().as_u16();
    match status {
        200..=299 => {}
        401 | 403 => return Err(DocumentError::PermissionDenied(address.to_owned())),
        _ => return Err(unreachable(format!("HTTP {status}"))),
    }
    let header = |name: &str| {
        resp.headers()
            .get(name)
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned)
    };
    let content_type = header("content-type");
    let last_modified = header("last-modified")
        .and_then(|v| httpdate::parse_http_date(&v).ok())
        .map(DateTime::<Utc>::from);
    let content_kind = match content_type {
        Some(ct) => ContentKind::from_mime(&ct).ok_or(DocumentError::UnsupportedContent(ct))?,
        None => ContentKind::from_extension(Path::new(address)).unwrap_or(ContentKind::PlainText),
    };
    let bytes = resp
        .body_mut()
        .read_to_vec()
        .map_err(|e| unreachable(e.to_string()))?;
    Ok(FetchedDocument {
        bytes,
        last_modified,
        content_kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_address_is_malformed() {
        let spec = SourceSpec::new(SourceKind::LocalFile, "");
        assert!(matches!(
            spec.validate(),
            Err(DocumentError::MalformedAddress { .. })
        ));
    }

    #[test]
    fn http_address_must_be_http() {
        assert!(SourceSpec::new(SourceKind::HttpUrl, "https://example.org/doc")
            .validate()
            .is_ok());
        assert!(SourceSpec::new(SourceKind::HttpUrl, "ftp://example.org/doc")
            .validate()
            .is_err());
        assert!(SourceSpec::new(SourceKind::HttpUrl, "not a url")
            .validate()
            .is_err());
    }

    #[test]
    fn connector_address_needs_name() {
        assert!(SourceSpec::new(SourceKind::Connector, "gdocs:abc").validate().is_ok());
        assert!(SourceSpec::new(SourceKind::Connector, ":abc").validate().is_err());
        assert!(SourceSpec::new(SourceKind::Connector, "abc").validate().is_err());
    }

    #[test]
    fn missing_file_is_unreachable() {
        let locator = SourceLocator {
            source_id: "src-1".into(),
            kind: SourceKind::LocalFile,
            address: "/definitely/not/here.md".into(),
            display_name: "x".into(),
        };
        assert!(matches!(
            Fetcher::new().fetch(&locator),
            Err(DocumentError::Unreachable { .. })
        ));
    }

    #[test]
    fn local_file_reports_mtime() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("proj.md");
        std::fs::write(&path, "# Notes\n").unwrap();
        let locator = SourceLocator {
            source_id: "src-1".into(),
            kind: SourceKind::LocalFile,
            address: path.display().to_string(),
            display_name: "proj".into(),
        };
        let doc = Fetcher::new().fetch(&locator).unwrap();
        assert_eq!(doc.bytes, b"# Notes\n");
        assert_eq!(doc.content_kind, ContentKind::Markdown);
        let mtime: DateTime<Utc> = std::fs::metadata(&path).unwrap().modified().unwrap().into();
        assert_eq!(doc.last_modified, Some(mtime));
    }

    #[test]
    fn mime_mapping() {
        assert_eq!(
            ContentKind::from_mime("text/html; charset=utf-8"),
            Some(ContentKind::Html)
        );
        assert_eq!(ContentKind::from_mime("application/pdf"), None);
    }
}
