//! Project documents: sources, fetching, normalization, sentence index,
//! revision snapshots and change detection.

mod normalize;
mod segment;
mod source;

use std::fs;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use normalize::normalize;
pub use segment::{char_slice, segment_sentences, SentenceEntry, ABBREVIATIONS};
pub use source::{
    Connector, ContentKind, FetchedDocument, Fetcher, SourceKind, SourceLocator, SourceSpec,
};

use crate::error::{DocumentError, Error, Result, StoreError};
use crate::hashing::sha256_hex;
use crate::project::ProjectRecord;
use crate::store::{self, DataLayout};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSnapshot {
    pub project_id: String,
    pub source_id: String,
    pub revision_id: u64,
    pub fetched_at: DateTime<Utc>,
    pub last_modified: Option<DateTime<Utc>>,
    pub content_hash: String,
    #[serde(skip)]
    pub text: String,
    pub sentences: Vec<SentenceEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeReason {
    LastModifiedAdvanced,
    ContentHashDiffers,
    StateShifted,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeReport {
    pub project_id: String,
    pub changed: bool,
    pub reason: ChangeReason,
    pub old_revision_id: Option<u64>,
    pub new_last_modified: Option<DateTime<Utc>>,
}

impl ChangeReport {
    fn new(project_id: &str, reason: ChangeReason) -> Self {
        Self {
            project_id: project_id.to_owned(),
            changed: reason != ChangeReason::None,
            reason,
            old_revision_id: None,
            new_last_modified: None,
        }
    }
}

/// What the last recorded run saw. Change detection compares against it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunBaseline {
    pub revision_id: u64,
    pub last_modified: Option<DateTime<Utc>>,
    pub content_hash: String,
    pub state_label: Option<String>,
}

pub fn content_hash(text: &str) -> String {
    sha256_hex(text)
}

#[derive(Debug, Clone)]
pub struct DocumentStore {
    layout: DataLayout,
    fetcher: Fetcher,
}

impl DocumentStore {
    pub fn new(layout: DataLayout, fetcher: Fetcher) -> Self {
        Self { layout, fetcher }
    }

    pub fn fetcher(&self) -> &Fetcher {
        &self.fetcher
    }

    /// Attach a source to a project. Does not fetch.
    pub fn register_source(&self, project: &mut ProjectRecord, spec: SourceSpec) -> Result<String> {
        spec.validate()?;
        let source_id = match spec.source_id.as_deref().map(str::trim) {
            Some(id) if !id.is_empty() => id.to_owned(),
            _ => {
                let mut n = project.sources.len() + 1;
                while project.sources.iter().any(|s| s.source_id == format!("src-{n}")) {
                    n += 1;
                }
                format!("src-{n}")
            }
        };
        if project.sources.iter().any(|s| s.source_id == source_id) {
            return Err(Error::Duplicate {
                kind: "source",
                id: source_id,
            });
        }
        let display_name = spec
            .display_name
            .filter(|d| !d.trim().is_empty())
            .unwrap_or_else(|| spec.address.clone());
        project.sources.push(SourceLocator {
            source_id: source_id.clone(),
            kind: spec.kind,
            address: spec.address.trim().to_owned(),
            display_name,
        });
        Ok(source_id)
    }

    pub fn fetch(&self, locator: &SourceLocator) -> Result<FetchedDocument, DocumentError> {
        self.fetcher.fetch(locator)
    }

    /// Fetch + normalize, without persisting anything.
    pub fn read_current(&self, locator: &SourceLocator) -> Result<(String, Option<DateTime<Utc>>), DocumentError> {
        let fetched = self.fetch(locator)?;
        let text = normalize(&fetched.bytes, fetched.content_kind)?;
        Ok((text, fetched.last_modified))
    }

    fn source_dir<'a>(project: &ProjectRecord, source_id: &'a str) -> Option<&'a str> {
        match project.primary_source() {
            Some(primary) if primary.source_id == source_id => None,
            _ => Some(source_id),
        }
    }

    /// Fetch, normalize, segment and persist the next revision of a source.
    pub fn snapshot(
        &self,
        project: &ProjectRecord,
        source_id: &str,
        now: DateTime<Utc>,
    ) -> Result<DocumentSnapshot> {
        let locator = project
            .sources
            .iter()
            .find(|s| s.source_id == source_id)
            .ok_or_else(|| Error::not_found("source", source_id))?;
        let (text, last_modified) = self.read_current(locator)?;
        let dir = self
            .layout
            .snapshots_dir(&project.project_id, Self::source_dir(project, source_id));
        let revision_id = self.revision_ids(&dir)?.last().copied().unwrap_or(0) + 1;

        let snapshot = DocumentSnapshot {
            project_id: project.project_id.clone(),
            source_id: source_id.to_owned(),
            revision_id,
            fetched_at: now,
            last_modified,
            content_hash: content_hash(&text),
            sentences: segment_sentences(&text),
            text,
        };
        // text first; the index file marks the revision as complete
        store::write_atomic(&dir.join(format!("{revision_id}.md")), snapshot.text.as_bytes())?;
        store::write_json(&dir.join(format!("{revision_id}.index.json")), &snapshot)?;
        Ok(snapshot)
    }

    fn revision_ids(&self, dir: &std::path::Path) -> Result<Vec<u64>, StoreError> {
        let entries = match fs::read_dir(dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => {
                return Err(StoreError::Io {
                    path: dir.to_path_buf(),
                    source,
                })
            }
        };
        let mut ids: Vec<u64> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                e.file_name()
                    .to_str()?
                    .strip_suffix(".index.json")?
                    .parse()
                    .ok()
            })
            .collect();
        ids.sort_unstable();
        Ok(ids)
    }

    pub fn revisions(&self, project: &ProjectRecord, source_id: &str) -> Result<Vec<u64>> {
        let dir = self
            .layout
            .snapshots_dir(&project.project_id, Self::source_dir(project, source_id));
        Ok(self.revision_ids(&dir)?)
    }

    pub fn load_snapshot(
        &self,
        project: &ProjectRecord,
        source_id: &str,
        revision_id: u64,
    ) -> Result<DocumentSnapshot> {
        let dir = self
            .layout
            .snapshots_dir(&project.project_id, Self::source_dir(project, source_id));
        let index_path = dir.join(format!("{revision_id}.index.json"));
        let mut snapshot: DocumentSnapshot = store::read_json(&index_path)?
            .ok_or_else(|| Error::not_found("revision", revision_id.to_string()))?;
        let md_path = dir.join(format!("{revision_id}.md"));
        snapshot.text = fs::read_to_string(&md_path).map_err(|source| StoreError::Io {
            path: md_path,
            source,
        })?;
        Ok(snapshot)
    }

    pub fn latest_snapshot(&self, project: &ProjectRecord) -> Result<Option<DocumentSnapshot>> {
        let Some(primary) = project.primary_source() else {
            return Ok(None);
        };
        match self.revisions(project, &primary.source_id)?.last() {
            Some(&rev) => self.load_snapshot(project, &primary.source_id, rev).map(Some),
            None => Ok(None),
        }
    }

    /// Compare the project's primary source against the last recorded run.
    ///
    /// No baseline means the project has never run, which counts as changed.
    /// Fetch failures report `changed = false` so the caller simply tries
    /// again on its next check.
    pub fn detect_change(
        &self,
        project: &ProjectRecord,
        baseline: Option<&RunBaseline>,
        current_state: Option<&str>,
    ) -> ChangeReport {
        let id = &project.project_id;
        let Some(baseline) = baseline else {
            return ChangeReport::new(id, ChangeReason::LastModifiedAdvanced);
        };
        let Some(locator) = project.primary_source() else {
            tracing::warn!(project = %id, "no document source registered");
            return ChangeReport::new(id, ChangeReason::None);
        };
        let (text, last_modified) = match self.read_current(locator) {
            Ok(v) => v,
            Err(e) => {
                tracing::warn!(project = %id, error = %e, "change check could not fetch document");
                return ChangeReport::new(id, ChangeReason::None);
            }
        };
        let reason = if matches!((baseline.last_modified, last_modified), (Some(old), Some(new)) if new > old)
        {
            ChangeReason::LastModifiedAdvanced
        } else if content_hash(&text) != baseline.content_hash {
            ChangeReason::ContentHashDiffers
        } else if current_state.is_some() && current_state != baseline.state_label.as_deref() {
            ChangeReason::StateShifted
        } else {
            ChangeReason::None
        };
        ChangeReport {
            old_revision_id: Some(baseline.revision_id),
            new_last_modified: last_modified,
            ..ChangeReport::new(id, reason)
        }
    }
}
