//! Fixture replay and recording.
//!
//! Layout under a fixtures root:
//! - `transcripts/{request_hash}.txt`: raw LLM completion for a request;
//! - `deep_research/{question_hash}.json`: a [`RawAnswer`];
//! - `metadata.json`: list of [`PaperMetadata`] served by [`FixtureMetadata`].

use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{
    normalize_title, DeepResearchProvider, LlmProvider, MetadataProvider, PaperMetadata,
    PromptRequest, RawAnswer,
};
use crate::error::ProviderError;
use crate::hashing::question_hash;
use crate::store;

fn read_fixture(path: &Path) -> Result<Option<String>, ProviderError> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(ProviderError::Other(format!("{}: {e}", path.display()))),
    }
}

fn write_fixture(path: &Path, bytes: &[u8]) -> Result<(), ProviderError> {
    store::write_atomic(path, bytes).map_err(|e| ProviderError::Other(e.to_string()))
}

/// Strict replay: a request without a transcript is an error.
#[derive(Debug, Clone)]
pub struct ReplayLlm {
    dir: PathBuf,
}

impl ReplayLlm {
    pub fn new(fixtures_root: impl AsRef<Path>) -> Self {
        Self {
            dir: fixtures_root.as_ref().join("transcripts"),
        }
    }

    pub fn transcript_path(&self, request: &PromptRequest) -> PathBuf {
        self.dir.join(format!("{}.txt", request.request_hash))
    }
}

impl LlmProvider for ReplayLlm {
    fn complete(&self, request: &PromptRequest) -> Result<String, ProviderError> {
        read_fixture(&self.transcript_path(request))?.ok_or_else(|| ProviderError::MissingFixture {
            kind: "transcript",
            key: format!("{}:{}", request.template, request.request_hash),
        })
    }
}

/// Replays when a transcript exists, otherwise calls `live` and saves the
/// result as a new transcript.
pub struct RecordingLlm {
    replay: ReplayLlm,
    live: Arc<dyn LlmProvider>,
}

impl RecordingLlm {
    pub fn new(fixtures_root: impl AsRef<Path>, live: Arc<dyn LlmProvider>) -> Self {
        Self {
            replay: ReplayLlm::new(fixtures_root),
            live,
        }
    }
}

impl LlmProvider for RecordingLlm {
    fn complete(&self, request: &PromptRequest) -> Result<String, ProviderError> {
        match self.replay.complete(request) {
            Err(ProviderError::MissingFixture { .. }) => {
                let text = self.live.complete(request)?;
                write_fixture(&self.replay.transcript_path(request), text.as_bytes())?;
                Ok(text)
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayDeepResearch {
    dir: PathBuf,
}

impl ReplayDeepResearch {
    pub fn new(fixtures_root: impl AsRef<Path>) -> Self {
        Self {
            dir: fixtures_root.as_ref().join("deep_research"),
        }
    }

    pub fn answer_path(&self, question: &str) -> PathBuf {
        self.dir.join(format!("{}.json", question_hash(question)))
    }
}

impl DeepResearchProvider for ReplayDeepResearch {
    fn provider_id(&self) -> &str {
        "replay"
    }

    fn query(&self, question: &str) -> Result<RawAnswer, ProviderError> {
        let path = self.answer_path(question);
        let text = read_fixture(&path)?.ok_or_else(|| ProviderError::MissingFixture {
            kind: "deep_research",
            key: question_hash(question),
        })?;
        serde_json::from_str(&text).map_err(|e| ProviderError::Other(format!("{}: {e}", path.display())))
    }
}

pub struct RecordingDeepResearch {
    replay: ReplayDeepResearch,
    live: Arc<dyn DeepResearchProvider>,
}

impl RecordingDeepResearch {
    pub fn new(fixtures_root: impl AsRef<Path>, live: Arc<dyn DeepResearchProvider>) -> Self {
        Self {
            replay: ReplayDeepResearch::new(fixtures_root),
            live,
        }
    }
}

impl DeepResearchProvider for RecordingDeepResearch {
    fn provider_id(&self) -> &str {
        "replay"
    }

    fn query(&self, question: &str) -> Result<RawAnswer, ProviderError> {
        match self.replay.query(question) {
            Err(ProviderError::MissingFixture { .. }) => {
                let answer = self.live.query(question)?;
                write_fixture(
                    &self.replay.answer_path(question),
                    &store::to_json_bytes(&answer),
                )?;
                Ok(answer)
            }
            other => other,
        }
    }
}

/// In-memory metadata table.
#[derive(Debug, Clone, Default)]
pub struct FixtureMetadata {
    papers: Vec<PaperMetadata>,
}

impl FixtureMetadata {
    pub fn new(papers: Vec<PaperMetadata>) -> Self {
        Self { papers }
    }

    pub fn load(fixtures_root: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = fixtures_root.as_ref().join("metadata.json");
        let papers = store::read_json(&path)
            .map_err(|e| ProviderError::Other(e.to_string()))?
            .unwrap_or_default();
        Ok(Self { papers })
    }

    pub fn papers(&self) -> &[PaperMetadata] {
        &self.papers
    }
}

impl MetadataProvider for FixtureMetadata {
    fn by_id(&self, id: &str) -> Result<Option<PaperMetadata>, ProviderError> {
        let (scheme, value) = match id.split_once(':') {
            Some((s, v)) => (Some(s.to_ascii_lowercase()), v),
            None => (None, id),
        };
        Ok(self
            .papers
            .iter()
            .find(|p| {
                p.paper_id == id
                    || p.paper_id == value
                    || p.external_ids.iter().any(|(k, v)| {
                        v == value && scheme.as_deref().is_none_or(|s| s == k.to_ascii_lowercase())
                    })
            })
            .cloned())
    }

    fn search_title(&self, title: &str) -> Result<Vec<PaperMetadata>, ProviderError> {
        let wanted = normalize_title(title);
        if wanted.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self
            .papers
            .iter()
            .filter(|p| normalize_title(&p.title).contains(&wanted))
            .cloned()
            .collect())
    }
}
