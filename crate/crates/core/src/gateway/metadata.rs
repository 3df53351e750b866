use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::MetadataProvider;
use crate::error::ProviderError;
use crate::http::{agent, classify_status, transport_error};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperMetadata {
    pub paper_id: String,
    pub title: String,
    #[serde(default, rename = "abstract")]
    pub abstract_text: Option<String>,
    #[serde(default)]
    pub url: Option<String>,
    /// Other identifiers keyed by scheme (`ArXiv`, `DOI`, `ACL`, `CorpusId`).
    #[serde(default)]
    pub external_ids: BTreeMap<String, String>,
}

/// Lowercase, punctuation to spaces, collapsed whitespace.
pub fn normalize_title(title: &str) -> String {
    title
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

pub(crate) fn looks_like_id(query: &str) -> bool {
    static ID: OnceLock<Regex> = OnceLock::new();
    ID.get_or_init(|| {
        Regex::new(r"(?i)^(?:(?:arxiv|corpusid|doi|acl|pmid|mag|url):\S+|[0-9a-f]{40})$").unwrap()
    })
    .is_match(query)
}

/// Identifier understood by the metadata provider for a paper URL on one of
/// the recognized scholarly hosts.
pub fn paper_id_from_url(raw: &str) -> Option<String> {
    static ARXIV: OnceLock<Regex> = OnceLock::new();
    static DOI: OnceLock<Regex> = OnceLock::new();
    static HEX40: OnceLock<Regex> = OnceLock::new();
    let arxiv = ARXIV.get_or_init(|| {
        Regex::new(r"^/(?:abs|pdf|html)/([0-9]{4}\.[0-9]{4,5}|[a-z\-]+(?:\.[A-Z]{2})?/[0-9]{7})(?:v[0-9]+)?(?:\.pdf)?/?$").unwrap()
    });
    let doi = DOI.get_or_init(|| Regex::new(r"(10\.[0-9]{4,9}/[^\s?#]+)").unwrap());
    let hex40 = HEX40.get_or_init(|| Regex::new(r"(?:^|/)([0-9a-f]{40})(?:/|$)").unwrap());

    let url = url::Url::parse(raw.trim()).ok()?;
    let host = url.host_str()?.to_ascii_lowercase();
    let path = url.path();
    let on = |domain: &str| host == domain || host.ends_with(&format!(".{domain}"));

    if on("arxiv.org") {
        let id = arxiv.captures(path)?.get(1)?.as_str();
        return Some(format!("ARXIV:{id}"));
    }
    if on("semanticscholar.org") {
        if let Some(c) = hex40.captures(path) {
            return Some(c[1].to_owned());
        }
        let tail = path.trim_end_matches('/').rsplit('/').next()?;
        if let Some(n) = tail.strip_prefix("CorpusID:").or_else(|| tail.strip_prefix("CorpusId:")) {
            return Some(format!("CorpusId:{n}"));
        }
        if path.starts_with("/p/") && tail.chars().all(|c| c.is_ascii_digit()) {
            return Some(format!("CorpusId:{tail}"));
        }
        return None;
    }
    if on("aclweb.org") || on("aclanthology.org") {
        let tail = path
            .trim_end_matches('/')
            .rsplit('/')
            .next()?
            .trim_end_matches(".pdf");
        return (!tail.is_empty() && tail != "anthology").then(|| format!("ACL:{tail}"));
    }
    if on("acm.org") || on("biorxiv.org") || on("doi.org") {
        let found = doi.captures(path)?.get(1)?.as_str();
        let cleaned = if on("biorxiv.org") {
            static VERSION: OnceLock<Regex> = OnceLock::new();
            VERSION
                .get_or_init(|| Regex::new(r"(v[0-9]+)?(\.full(\.pdf)?|\.abstract)?$").unwrap())
                .replace(found, "")
                .into_owned()
        } else {
            found.trim_end_matches('/').to_owned()
        };
        return Some(format!("DOI:{cleaned}"));
    }
    None
}

/// Semantic Scholar graph API client.
#[derive(Debug, Clone)]
pub struct HttpMetadata {
    base: String,
    api_key: Option<String>,
    timeout: Duration,
}

const FIELDS: &str = "paperId,corpusId,title,abstract,url,externalIds";

impl HttpMetadata {
    pub fn new(base: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            base: base.into(),
            api_key,
            timeout: Duration::from_secs(30),
        }
    }

    fn get(&self, path: &str, query: &[(&str, &str)]) -> Result<Option<Value>, ProviderError> {
        let url = format!("{}{}", self.base.trim_end_matches('/'), path);
        let mut req = agent(self.timeout).get(&url);
        for (k, v) in query {
            req = req.query(*k, *v);
        }
        if let Some(key) = &self.api_key {
            req = req.header("x-api-key", key);
        }
        let mut resp = req.call().map_err(transport_error)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(transport_error)?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| ProviderError::Other(format!("bad metadata payload: {e}"))),
            404 => Ok(None),
            _ => Err(classify_status(status, &text)),
        }
    }

    fn to_metadata(v: &Value) -> Option<PaperMetadata> {
        let title = v.get("title")?.as_str()?.to_owned();
        let corpus = v.get("corpusId").and_then(Value::as_u64);
        let paper_id = match corpus {
            Some(c) => c.to_string(),
            None => v.get("paperId")?.as_str()?.to_owned(),
        };
        let external_ids = v
            .get("externalIds")
            .and_then(Value::as_object)
            .map(|m| {
                m.iter()
                    .filter_map(|(k, v)| {
                        let s = match v {
                            Value::String(s) => s.clone(),
                            Value::Number(n) => n.to_string(),
                            _ => return None,
                        };
                        Some((k.clone(), s))
                    })
                    .collect()
            })
            .unwrap_or_default();
        Some(PaperMetadata {
            paper_id,
            title,
            abstract_text: v.get("abstract").and_then(Value::as_str).map(str::to_owned),
            url: v.get("url").and_then(Value::as_str).map(str::to_owned),
            external_ids,
        })
    }
}

impl MetadataProvider for HttpMetadata {
    fn by_id(&self, id: &str) -> Result<Option<PaperMetadata>, ProviderError> {
        let path = format!("/paper/{id}");
        Ok(self
            .get(&path, &[("fields", FIELDS)])?
            .as_ref()
            .and_then(Self::to_metadata))
    }

    fn search_title(&self, title: &str) -> Result<Vec<PaperMetadata>, ProviderError> {
        let found = self.get(
            "/paper/search",
            &[("query", title), ("fields", FIELDS), ("limit", "5")],
        )?;
        Ok(found
            .as_ref()
            .and_then(|v| v.get("data"))
            .and_then(Value::as_array)
            .map(|items| items.iter().filter_map(Self::to_metadata).collect())
            .unwrap_or_default())
    }
}
