use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::document::SourceLocator;
use crate::tracking::UpdateFrequency;

/// A monitored research project as persisted in `project.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectRecord {
    pub project_id: String,
    pub name: String,
    pub created_at: DateTime<Utc>,
    pub sources: Vec<SourceLocator>,
    pub frequency: UpdateFrequency,
    /// Per-project override of how many generated questions a run issues.
    #[serde(default)]
    pub questions_k: Option<usize>,
    #[serde(default = "one")]
    pub next_run_seq: u64,
    #[serde(default = "one")]
    pub next_question_seq: u64,
}

fn one() -> u64 {
    1
}

impl ProjectRecord {
    pub fn new(project_id: impl Into<String>, name: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        Self {
            project_id: project_id.into(),
            name: name.into(),
            created_at,
            sources: Vec::new(),
            frequency: UpdateFrequency::default(),
            questions_k: None,
            next_run_seq: 1,
            next_question_seq: 1,
        }
    }

    /// The document the pipeline reads: the first registered source.
    pub fn primary_source(&self) -> Option<&SourceLocator> {
        self.sources.first()
    }

    pub(crate) fn allocate_run_id(&mut self) -> String {
        let id = format!("run-{:04}", self.next_run_seq);
        self.next_run_seq += 1;
        id
    }

    pub(crate) fn allocate_question_id(&mut self) -> String {
        let id = format!("{}-q{:04}", self.project_id, self.next_question_seq);
        self.next_question_seq += 1;
        id
    }
}

pub fn validate_project_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}
