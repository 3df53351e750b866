//! An engine in a temporary data directory, wired to synthetic providers
//! and a manual clock.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use litscout_core::clock::{Clock, ManualClock};
use litscout_core::document::{SourceKind, SourceSpec};
use litscout_core::engine::{Engine, EngineSettings, NewProject};
use litscout_core::gateway::{FixtureMetadata, Gateway, RecordingSleeper, RetryPolicy};
use litscout_core::notify::{FileSink, NotificationSink};
use litscout_core::project::ProjectRecord;
use litscout_core::store::DataLayout;
use litscout_core::tracking::UpdateFrequency;
use tempfile::TempDir;

use crate::corpus::{catalog_metadata, frozen_now, DOC_REV1, FIXTURE_PROJECT_ID, FIXTURE_PROJECT_NAME};
use crate::synthetic::{CountingLlm, ScriptedResearch, SyntheticLlm};

/// Retry policy that records waits instead of sleeping.
pub fn fast_retry() -> RetryPolicy {
    RetryPolicy::default().with_sleeper(Arc::new(RecordingSleeper::default()))
}

pub struct Harness {
    pub dir: TempDir,
    pub clock: Arc<ManualClock>,
    pub llm: Arc<CountingLlm<SyntheticLlm>>,
    pub research: Arc<ScriptedResearch>,
    pub engine: Arc<Engine>,
}

pub struct HarnessBuilder {
    settings: EngineSettings,
    sink: Option<Arc<dyn NotificationSink>>,
    file_sink: bool,
    start: DateTime<Utc>,
}

impl Default for HarnessBuilder {
    fn default() -> Self {
        Self {
            settings: EngineSettings::default(),
            sink: None,
            file_sink: true,
            start: frozen_now(),
        }
    }
}

impl HarnessBuilder {
    pub fn settings(mut self, settings: EngineSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn sink(mut self, sink: Arc<dyn NotificationSink>) -> Self {
        self.sink = Some(sink);
        self.file_sink = false;
        self
    }

    pub fn no_sink(mut self) -> Self {
        self.sink = None;
        self.file_sink = false;
        self
    }

    pub fn start(mut self, at: DateTime<Utc>) -> Self {
        self.start = at;
        self
    }

    pub fn build(self) -> Harness {
        let dir = tempfile::tempdir().expect("tempdir");
        let clock = Arc::new(ManualClock::new(self.start));
        let llm = Arc::new(CountingLlm::new(SyntheticLlm));
        let research = Arc::new(ScriptedResearch::new());
        let gateway = Gateway::new(
            llm.clone(),
            research.clone(),
            Arc::new(FixtureMetadata::new(catalog_metadata())),
        )
        .with_retry(fast_retry());
        let data = dir.path().join("data");
        let sink: Option<Arc<dyn NotificationSink>> = if self.file_sink {
            Some(Arc::new(FileSink::new(data.join("notifications.log"))))
        } else {
            self.sink
        };
        let dyn_clock: Arc<dyn Clock> = clock.clone();
        let engine = Engine::new(DataLayout::new(&data), gateway, dyn_clock)
            .with_settings(self.settings)
            .with_sink(sink)
            .with_notify_retry(fast_retry());
        Harness {
            dir,
            clock,
            llm,
            research,
            engine: Arc::new(engine),
        }
    }
}

impl Harness {
    pub fn builder() -> HarnessBuilder {
        HarnessBuilder::default()
    }

    pub fn new() -> Self {
        Self::builder().build()
    }

    pub fn notifications_log(&self) -> PathBuf {
        self.engine.layout().root().join("notifications.log")
    }

    /// The fixture project over a private copy of the first revision.
    pub fn fixture_project(&self) -> ProjectRecord {
        self.project_with(FIXTURE_PROJECT_ID, DOC_REV1, UpdateFrequency::Weekly)
    }

    pub fn project_with(&self, id: &str, text: &str, frequency: UpdateFrequency) -> ProjectRecord {
        let path = self.dir.path().join(format!("{id}.md"));
        std::fs::write(&path, text).expect("write document");
        self.engine
            .create_project(NewProject {
                project_id: Some(id.to_owned()),
                name: FIXTURE_PROJECT_NAME.to_owned(),
                source: SourceSpec::new(SourceKind::LocalFile, path.to_string_lossy()),
                frequency,
            })
            .expect("create project")
    }

    pub fn project_doc(&self, id: &str) -> PathBuf {
        self.dir.path().join(format!("{id}.md"))
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }
}

impl Default for Harness {
    fn default() -> Self {
        Self::new()
    }
}
