//! The update workflow and every project-level operation the API exposes.
//!
//! Mutations of a project's files go through a short-held in-process mutex
//! per project. Update runs additionally hold the persisted run lock for
//! their whole duration, so a second run (here or in another process) is
//! refused while one is in flight.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, is_duplicate_question, ProjectStateAssessment, QuestionOrigin, QuestionStatus,
    ResearchQuestion,
};
use crate::anchoring::{self, AnchorItem, SentenceAnchor};
use crate::catalog::{self, PaperRef};
use crate::citations::scan_labels;
use crate::clock::{Clock, ManualClock, SystemClock};
use crate::config::{Config, SeedProject};
use crate::document::{
    ChangeReason, ChangeReport, DocumentSnapshot, DocumentStore, Fetcher, RunBaseline,
    SentenceEntry, SourceKind, SourceSpec,
};
use crate::error::{Error, Result};
use crate::gateway::{DeepResearchAnswer, Gateway, RetryPolicy};
use crate::notify::{notify, Notification, NotificationSink};
use crate::parallel::{bounded_map, Parallelism};
use crate::project::{validate_project_id, ProjectRecord};
use crate::store::{self, DataLayout};
use crate::suggestions::{
    self, content_hash, rank_suggestions, GenerationResult, PaperLabel, SeenSet, Suggestion,
    SuggestionDraft, SuggestionKind,
};
use crate::tracking::{
    diff_answers, DiffResult, RunLock, RunLockGuard, RunStatus, RunTrigger, SchedulerState,
    UpdateFrequency, UpdateRun,
};

/// Titles listed in a notification before "and N more".
const NOTIFICATION_TITLES: usize = 5;

#[derive(Debug, Clone)]
pub struct EngineSettings {
    pub questions_k: usize,
    pub suggestions_n: usize,
    pub parallelism: Parallelism,
    pub worker_pool: usize,
    pub lock_staleness: Duration,
    pub public_url: String,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            questions_k: analysis::DEFAULT_QUESTIONS_K,
            suggestions_n: suggestions::DEFAULT_SUGGESTIONS_N,
            parallelism: Parallelism::default(),
            worker_pool: 2,
            lock_staleness: Duration::minutes(crate::tracking::DEFAULT_LOCK_STALENESS_MINUTES),
            public_url: "http://127.0.0.1:8080".into(),
        }
    }
}

impl EngineSettings {
    pub fn from_config(config: &Config) -> Self {
        Self {
            questions_k: config.questions_k.max(1),
            suggestions_n: config.suggestions_n.max(1),
            parallelism: config.parallelism(),
            worker_pool: config.scheduler.worker_pool.max(1),
            lock_staleness: Duration::minutes(config.scheduler.lock_staleness_minutes.max(1)),
            public_url: config.public_url.clone(),
        }
    }
}

/// Input for creating a project.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewProject {
    #[serde(default)]
    pub project_id: Option<String>,
    pub name: String,
    pub source: SourceSpec,
    #[serde(default)]
    pub frequency: UpdateFrequency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectDetails {
    #[serde(flatten)]
    pub project: ProjectRecord,
    pub state: Option<ProjectStateAssessment>,
    pub paper_count: usize,
    pub question_count: usize,
    pub suggestion_count: usize,
    pub last_run: Option<UpdateRun>,
    pub next_due: Option<DateTime<Utc>>,
    pub run_in_flight: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchoredSuggestion {
    pub suggestion_id: String,
    pub title: String,
    pub anchor: SentenceAnchor,
}

/// A document revision with the anchors that point into it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentView {
    pub project_id: String,
    pub source_id: String,
    pub revision_id: u64,
    pub fetched_at: DateTime<Utc>,
    pub last_modified: Option<DateTime<Utc>>,
    pub content_hash: String,
    pub sentences: Vec<SentenceEntry>,
    pub anchors: Vec<AnchoredSuggestion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionDetails {
    pub project_id: String,
    #[serde(flatten)]
    pub question: ResearchQuestion,
    pub answers: Vec<DeepResearchAnswer>,
    pub suggestions: Vec<Suggestion>,
    pub diff_results: Vec<DiffResult>,
}

/// An accepted run request holding the project's run lock.
#[derive(Debug)]
pub struct RunTicket {
    pub project_id: String,
    pub run_id: String,
    pub trigger: RunTrigger,
    pub change_reason: Option<ChangeReason>,
    pub started_at: DateTime<Utc>,
    _guard: RunLockGuard,
}

pub struct Engine {
    layout: DataLayout,
    docs: DocumentStore,
    gateway: Arc<Gateway>,
    clock: Arc<dyn Clock>,
    settings: EngineSettings,
    sink: Option<Arc<dyn NotificationSink>>,
    notify_retry: RetryPolicy,
    project_locks: Mutex<BTreeMap<String, Arc<Mutex<()>>>>,
    scheduler_lock: Mutex<()>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("data", &self.layout.root())
            .field("settings", &self.settings)
            .finish()
    }
}

fn slugify(name: &str) -> String {
    let mut slug = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c.to_ascii_lowercase());
        } else if !slug.ends_with('-') && !slug.is_empty() {
            slug.push('-');
        }
    }
    let slug = slug.trim_end_matches('-');
    let slug: String = slug.chars().take(48).collect();
    if slug.is_empty() {
        "project".into()
    } else {
        slug
    }
}

fn run_seq(run_id: &str) -> u64 {
    run_id
        .rsplit('-')
        .next()
        .and_then(|n| n.parse().ok())
        .unwrap_or(0)
}

impl Engine {
    pub fn new(layout: DataLayout, gateway: Gateway, clock: Arc<dyn Clock>) -> Self {
        Self {
            docs: DocumentStore::new(layout.clone(), Fetcher::new()),
            layout,
            gateway: Arc::new(gateway),
            clock,
            settings: EngineSettings::default(),
            sink: None,
            notify_retry: RetryPolicy::default(),
            project_locks: Mutex::new(BTreeMap::new()),
            scheduler_lock: Mutex::new(()),
        }
    }

    pub fn from_config(config: &Config) -> Result<Self> {
        let clock: Arc<dyn Clock> = match config.frozen_clock {
            Some(t) => Arc::new(ManualClock::new(t)),
            None => Arc::new(SystemClock),
        };
        Ok(Self::new(DataLayout::new(&config.data_dir), config.gateway()?, clock)
            .with_settings(EngineSettings::from_config(config))
            .with_sink(config.notification_sink()?))
    }

    pub fn with_settings(mut self, settings: EngineSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_fetcher(mut self, fetcher: Fetcher) -> Self {
        self.docs = DocumentStore::new(self.layout.clone(), fetcher);
        self
    }

    pub fn with_sink(mut self, sink: Option<Arc<dyn NotificationSink>>) -> Self {
        self.sink = sink;
        self
    }

    pub fn with_notify_retry(mut self, retry: RetryPolicy) -> Self {
        self.notify_retry = retry;
        self
    }

    pub fn layout(&self) -> &DataLayout {
        &self.layout
    }

    pub fn documents(&self) -> &DocumentStore {
        &self.docs
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn settings(&self) -> &EngineSettings {
        &self.settings
    }

    pub fn dashboard_url(&self, project_id: &str) -> String {
        format!("{}/projects/{project_id}", self.settings.public_url.trim_end_matches('/'))
    }

    fn lock_for(&self, project_id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.project_locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(project_id.to_owned()).or_default().clone()
    }

    /// Run `f` with the project's mutation lock held.
    fn with_project<T>(&self, project_id: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let lock = self.lock_for(project_id);
        let _held = lock.lock().unwrap_or_else(|e| e.into_inner());
        f()
    }

    // ----- projects -------------------------------------------------------

    pub fn project(&self, project_id: &str) -> Result<ProjectRecord> {
        store::read_json(&self.layout.project_record(project_id))?
            .ok_or_else(|| Error::not_found("project", project_id))
    }

    fn save_project(&self, project: &ProjectRecord) -> Result<()> {
        Ok(store::write_json(&self.layout.project_record(&project.project_id), project)?)
    }

    pub fn project_exists(&self, project_id: &str) -> bool {
        self.layout.project_record(project_id).exists()
    }

    pub fn list_projects(&self) -> Result<Vec<ProjectRecord>> {
        let dir = self.layout.projects_dir();
        let entries = match std::fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(crate::error::StoreError::Io { path: dir, source }.into()),
        };
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().map(str::to_owned))
            .filter(|id| self.project_exists(id))
            .collect();
        ids.sort();
        ids.iter().map(|id| self.project(id)).collect()
    }

    pub fn create_project(&self, input: NewProject) -> Result<ProjectRecord> {
        let name = input.name.trim();
        if name.is_empty() {
            return Err(Error::Validation("project name must not be empty".into()));
        }
        let id = match input.project_id.as_deref().map(str::trim) {
            Some(id) => {
                if !validate_project_id(id) {
                    return Err(Error::Validation(format!(
                        "project id {id:?} must be 1-64 characters of letters, digits, '-' or '_'"
                    )));
                }
                if self.project_exists(id) {
                    return Err(Error::Duplicate {
                        kind: "project",
                        id: id.to_owned(),
                    });
                }
                id.to_owned()
            }
            None => {
                let base = slugify(name);
                let mut id = base.clone();
                let mut n = 2;
                while self.project_exists(&id) {
                    id = format!("{base}-{n}");
                    n += 1;
                }
                id
            }
        };
        self.with_project(&id, || {
            if self.project_exists(&id) {
                return Err(Error::Duplicate {
                    kind: "project",
                    id: id.clone(),
                });
            }
            let mut project = ProjectRecord::new(&id, name, self.clock.now());
            project.frequency = input.frequency;
            self.docs.register_source(&mut project, input.source)?;
            self.save_project(&project)?;
            Ok(project)
        })
    }

    /// Create a configured project unless it already exists.
    pub fn ensure_seed(&self, seed: &SeedProject) -> Result<ProjectRecord> {
        if self.project_exists(&seed.id) {
            return self.project(&seed.id);
        }
        let kind = if seed.source.starts_with("http://") || seed.source.starts_with("https://") {
            SourceKind::HttpUrl
        } else {
            SourceKind::LocalFile
        };
        self.create_project(NewProject {
            project_id: Some(seed.id.clone()),
            name: seed.name.clone(),
            source: SourceSpec::new(kind, &seed.source),
            frequency: seed.frequency,
        })
    }

    pub fn register_source(&self, project_id: &str, spec: SourceSpec) -> Result<String> {
        self.with_project(project_id, || {
            let mut project = self.project(project_id)?;
            let id = self.docs.register_source(&mut project, spec)?;
            self.save_project(&project)?;
            Ok(id)
        })
    }

    pub fn project_details(&self, project_id: &str) -> Result<ProjectDetails> {
        let project = self.project(project_id)?;
        let schedule = self.scheduler_state()?;
        Ok(ProjectDetails {
            state: self.state(project_id)?,
            paper_count: self.catalog(project_id)?.iter().filter(|p| p.is_active()).count(),
            question_count: self.questions(project_id)?.len(),
            suggestion_count: self.suggestions(project_id, None)?.len(),
            last_run: self.runs(project_id)?.pop(),
            next_due: schedule.projects.get(project_id).and_then(|s| s.next_due),
            run_in_flight: RunLockGuard::is_held(
                &self.layout.run_lock(project_id),
                self.clock.now(),
                self.settings.lock_staleness,
            ),
            project,
        })
    }

    pub fn set_update_frequency(&self, project_id: &str, frequency: UpdateFrequency) -> Result<ProjectRecord> {
        let project = self.with_project(project_id, || {
            let mut project = self.project(project_id)?;
            project.frequency = frequency;
            self.save_project(&project)?;
            Ok(project)
        })?;
        self.update_scheduler(|s| s.reschedule(project_id, frequency))?;
        Ok(project)
    }

    // ----- state ------------------------------------------------------------

    pub fn state(&self, project_id: &str) -> Result<Option<ProjectStateAssessment>> {
        self.project(project_id)?;
        Ok(store::read_json(&self.layout.state(project_id))?)
    }

    pub fn apply_state_override(&self, project_id: &str, label: &str) -> Result<ProjectStateAssessment> {
        let label = label.trim();
        if label.is_empty() {
            return Err(Error::Validation("state label must not be empty".into()));
        }
        self.with_project(project_id, || {
            let current = self.state(project_id)?;
            let assessment = ProjectStateAssessment {
                state_label: label.to_owned(),
                rationale: current
                    .as_ref()
                    .map(|a| a.rationale.clone())
                    .unwrap_or_else(|| "Set by the researcher.".into()),
                assessed_at: self.clock.now(),
                source_revision_id: current.and_then(|a| a.source_revision_id),
                user_overridden: true,
            };
            store::write_json(&self.layout.state(project_id), &assessment)?;
            Ok(assessment)
        })
    }

    /// Drop the override flag; the next run infers the state again.
    pub fn clear_state_override(&self, project_id: &str) -> Result<Option<ProjectStateAssessment>> {
        self.with_project(project_id, || {
            let Some(mut a) = self.state(project_id)? else {
                return Ok(None);
            };
            a.user_overridden = false;
            store::write_json(&self.layout.state(project_id), &a)?;
            Ok(Some(a))
        })
    }

    // ----- papers -----------------------------------------------------------

    pub fn catalog(&self, project_id: &str) -> Result<Vec<PaperRef>> {
        self.project(project_id)?;
        Ok(store::read_json(&self.layout.papers(project_id))?.unwrap_or_default())
    }

    /// Project holding `paper_id`. With no hint, the id must be unambiguous.
    pub fn find_paper_project(&self, paper_id: &str, hint: Option<&str>) -> Result<String> {
        if let Some(p) = hint {
            return if self.catalog(p)?.iter().any(|r| r.paper_id == paper_id) {
                Ok(p.to_owned())
            } else {
                Err(Error::not_found("paper", paper_id))
            };
        }
        let mut owners = Vec::new();
        for project in self.list_projects()? {
            if self.catalog(&project.project_id)?.iter().any(|r| r.paper_id == paper_id) {
                owners.push(project.project_id);
            }
        }
        match owners.len() {
            0 => Err(Error::not_found("paper", paper_id)),
            1 => Ok(owners.remove(0)),
            _ => Err(Error::Validation(format!(
                "paper {paper_id} is in several projects ({}); pass ?project=",
                owners.join(", ")
            ))),
        }
    }

    fn update_paper(&self, project_id: &str, paper_id: &str, f: impl FnOnce(&mut PaperRef)) -> Result<PaperRef> {
        self.with_project(project_id, || {
            let mut catalog = self.catalog(project_id)?;
            let paper = catalog
                .iter_mut()
                .find(|p| p.paper_id == paper_id)
                .ok_or_else(|| Error::not_found("paper", paper_id))?;
            f(paper);
            let out = paper.clone();
            store::write_json(&self.layout.papers(project_id), &catalog)?;
            Ok(out)
        })
    }

    /// User edit of a paper's relation; runs never overwrite it afterwards.
    pub fn set_paper_relation(&self, project_id: &str, paper_id: &str, relation: &str) -> Result<PaperRef> {
        let relation = relation.trim();
        if relation.is_empty() {
            return Err(Error::Validation("relation must not be empty".into()));
        }
        self.update_paper(project_id, paper_id, |p| {
            p.project_relation = Some(relation.to_owned());
            p.relation_user_edited = true;
        })
    }

    /// Soft removal: the paper stays in the catalog, flagged, and is left
    /// out of every prompt.
    pub fn remove_paper(&self, project_id: &str, paper_id: &str) -> Result<PaperRef> {
        self.update_paper(project_id, paper_id, |p| p.removed_by_user = true)
    }

    // ----- questions --------------------------------------------------------

    pub fn questions(&self, project_id: &str) -> Result<Vec<ResearchQuestion>> {
        self.project(project_id)?;
        Ok(store::read_json(&self.layout.questions(project_id))?.unwrap_or_default())
    }

    fn update_questions<T>(
        &self,
        project_id: &str,
        f: impl FnOnce(&mut ProjectRecord, &mut Vec<ResearchQuestion>) -> Result<T>,
    ) -> Result<T> {
        self.with_project(project_id, || {
            let mut project = self.project(project_id)?;
            let before = project.clone();
            let mut questions = self.questions(project_id)?;
            let out = f(&mut project, &mut questions)?;
            if project != before {
                self.save_project(&project)?;
            }
            store::write_json(&self.layout.questions(project_id), &questions)?;
            Ok(out)
        })
    }

    pub fn add_user_question(&self, project_id: &str, text: &str) -> Result<ResearchQuestion> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::Validation("question text must not be empty".into()));
        }
        let now = self.clock.now();
        self.update_questions(project_id, |project, questions| {
            if is_duplicate_question(questions, text) {
                return Err(Error::Duplicate {
                    kind: "question",
                    id: text.to_owned(),
                });
            }
            let q = ResearchQuestion {
                question_id: project.allocate_question_id(),
                text: text.to_owned(),
                explanation: String::new(),
                origin: QuestionOrigin::UserAdded,
                rank: None,
                tracked: false,
                status: QuestionStatus::Pending,
                created_at: now,
                source_revision_id: None,
                summary: None,
                answer_refs: Vec::new(),
            };
            questions.push(q.clone());
            Ok(q)
        })
    }

    /// Project owning a question id.
    pub fn question_project(&self, question_id: &str) -> Result<String> {
        if let Some((pid, _)) = question_id.rsplit_once("-q") {
            if self.project_exists(pid)
                && self.questions(pid)?.iter().any(|q| q.question_id == question_id)
            {
                return Ok(pid.to_owned());
            }
        }
        Err(Error::not_found("question", question_id))
    }

    pub fn question(&self, question_id: &str) -> Result<(String, ResearchQuestion)> {
        let pid = self.question_project(question_id)?;
        let q = self
            .questions(&pid)?
            .into_iter()
            .find(|q| q.question_id == question_id)
            .ok_or_else(|| Error::not_found("question", question_id))?;
        Ok((pid, q))
    }

    pub fn question_details(&self, question_id: &str) -> Result<QuestionDetails> {
        let (pid, question) = self.question(question_id)?;
        let suggestions = self
            .suggestions(&pid, None)?
            .into_iter()
            .filter(|s| s.question_id == question_id)
            .collect();
        let diff_results = self
            .runs(&pid)?
            .into_iter()
            .flat_map(|r| r.diff_results)
            .filter(|d| d.question_id == question_id)
            .collect();
        Ok(QuestionDetails {
            answers: self.answers(&pid, question_id)?,
            project_id: pid,
            question,
            suggestions,
            diff_results,
        })
    }

    pub fn answers(&self, project_id: &str, question_id: &str) -> Result<Vec<DeepResearchAnswer>> {
        Ok(store::read_jsonl(&self.layout.answers(project_id, question_id))?)
    }

    /// Track or untrack. Tracking needs at least one stored answer to diff
    /// against.
    pub fn set_tracked(&self, question_id: &str, tracked: bool) -> Result<ResearchQuestion> {
        let pid = self.question_project(question_id)?;
        self.update_questions(&pid, |_, questions| {
            let q = questions
                .iter_mut()
                .find(|q| q.question_id == question_id)
                .ok_or_else(|| Error::not_found("question", question_id))?;
            if tracked && !q.has_answer() {
                return Err(Error::NoBaseline(question_id.to_owned()));
            }
            q.tracked = tracked;
            Ok(q.clone())
        })
    }

    // ----- suggestions, runs, documents --------------------------------------

    /// Delivered suggestions in run order then rank. `since_run` keeps only
    /// runs after the given one.
    pub fn suggestions(&self, project_id: &str, since_run: Option<&str>) -> Result<Vec<Suggestion>> {
        self.project(project_id)?;
        let mut all: Vec<Suggestion> = store::read_jsonl(&self.layout.suggestions(project_id))?;
        if let Some(since) = since_run {
            let floor = run_seq(since);
            all.retain(|s| run_seq(&s.run_id) > floor);
        }
        all.sort_by_key(|s| (run_seq(&s.run_id), s.rank));
        Ok(all)
    }

    pub fn runs(&self, project_id: &str) -> Result<Vec<UpdateRun>> {
        self.project(project_id)?;
        let dir = self.layout.runs_dir(project_id);
        let entries = match std::fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(crate::error::StoreError::Io { path: dir, source }.into()),
        };
        let mut runs = Vec::new();
        for entry in entries.filter_map(|e| e.ok()) {
            let path = entry.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(run) = store::read_json::<UpdateRun>(&path)? {
                    runs.push(run);
                }
            }
        }
        runs.sort_by_key(|r| run_seq(&r.run_id));
        Ok(runs)
    }

    pub fn run(&self, project_id: &str, run_id: &str) -> Result<UpdateRun> {
        store::read_json(&self.layout.run(project_id, run_id))?
            .ok_or_else(|| Error::not_found("run", run_id))
    }

    /// What the most recent run that got past its first stages saw.
    pub fn baseline(&self, project_id: &str) -> Result<Option<RunBaseline>> {
        Ok(self
            .runs(project_id)?
            .into_iter()
            .rev()
            .find(|r| r.status != RunStatus::Failed && r.input_content_hash.is_some())
            .map(|r| RunBaseline {
                revision_id: r.input_revision_id.unwrap_or(0),
                last_modified: r.input_last_modified,
                content_hash: r.input_content_hash.unwrap_or_default(),
                state_label: r.input_state,
            }))
    }

    pub fn detect_change(&self, project_id: &str) -> Result<ChangeReport> {
        let project = self.project(project_id)?;
        let baseline = self.baseline(project_id)?;
        let state = self.state(project_id)?;
        Ok(self
            .docs
            .detect_change(&project, baseline.as_ref(), state.as_ref().map(|s| s.state_label.as_str())))
    }

    pub fn document_view(&self, project_id: &str, revision: Option<u64>) -> Result<DocumentView> {
        let project = self.project(project_id)?;
        let primary = project
            .primary_source()
            .ok_or_else(|| Error::not_found("source", format!("{project_id}/primary")))?;
        let snapshot = match revision {
            Some(rev) => self.docs.load_snapshot(&project, &primary.source_id, rev)?,
            None => self
                .docs
                .latest_snapshot(&project)?
                .ok_or_else(|| Error::not_found("revision", "latest"))?,
        };
        let anchors = self
            .suggestions(project_id, None)?
            .into_iter()
            .filter_map(|s| {
                let anchor = s.anchor?;
                (anchor.revision_id == snapshot.revision_id).then_some(AnchoredSuggestion {
                    suggestion_id: s.suggestion_id,
                    title: s.title,
                    anchor,
                })
            })
            .collect();
        Ok(DocumentView {
            project_id: project_id.to_owned(),
            source_id: snapshot.source_id,
            revision_id: snapshot.revision_id,
            fetched_at: snapshot.fetched_at,
            last_modified: snapshot.last_modified,
            content_hash: snapshot.content_hash,
            sentences: snapshot.sentences,
            anchors,
        })
    }

    // ----- scheduling ---------------------------------------------------------

    pub fn scheduler_state(&self) -> Result<SchedulerState> {
        Ok(store::read_json(&self.layout.scheduler())?.unwrap_or_default())
    }

    fn update_scheduler(&self, f: impl FnOnce(&mut SchedulerState)) -> Result<()> {
        let _held = self.scheduler_lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut state = self.scheduler_state()?;
        f(&mut state);
        Ok(store::write_json(&self.layout.scheduler(), &state)?)
    }

    /// One heartbeat: check every due project for change and return those
    /// that should run. Projects that were checked have their next due time
    /// advanced. A failing project never stops the others.
    pub fn heartbeat_tick(&self, now: DateTime<Utc>) -> Vec<(String, ChangeReason)> {
        let projects = match self.list_projects() {
            Ok(p) => p,
            Err(e) => {
                tracing::error!(error = %e, "heartbeat could not list projects");
                return Vec::new();
            }
        };
        let schedule = match self.scheduler_state() {
            Ok(s) => s,
            Err(e) => {
                tracing::error!(error = %e, "heartbeat could not read scheduler state");
                return Vec::new();
            }
        };
        let mut triggered = Vec::new();
        let mut checked = Vec::new();
        for project in projects {
            let id = &project.project_id;
            if !schedule.is_due(id, project.frequency, now) {
                continue;
            }
            if RunLockGuard::is_held(&self.layout.run_lock(id), now, self.settings.lock_staleness) {
                tracing::debug!(project = %id, "run in flight; checking next tick");
                continue;
            }
            match self.detect_change(id) {
                Ok(report) if report.changed => triggered.push((id.clone(), report.reason)),
                Ok(_) => {}
                Err(e) => tracing::warn!(project = %id, error = %e, "change check failed"),
            }
            checked.push((id.clone(), project.frequency));
        }
        if let Err(e) = self.update_scheduler(|s| {
            for (id, freq) in &checked {
                s.mark_checked(id, *freq, now);
            }
        }) {
            tracing::error!(error = %e, "could not persist scheduler state");
        }
        triggered
    }

    /// Execute triggered runs on the worker pool.
    pub fn run_triggered(&self, triggered: Vec<(String, ChangeReason)>) -> Vec<Result<UpdateRun>> {
        bounded_map(
            Parallelism::from_width(self.settings.worker_pool),
            triggered,
            |(id, reason)| self.run_update(&id, RunTrigger::Scheduled, Some(reason)),
        )
    }

    // ----- update runs ----------------------------------------------------------

    /// Take the run lock and allocate a run id. Fails with `Busy` while
    /// another run holds the lock.
    pub fn begin_run(
        &self,
        project_id: &str,
        trigger: RunTrigger,
        change_reason: Option<ChangeReason>,
    ) -> Result<RunTicket> {
        self.with_project(project_id, || {
            let mut project = self.project(project_id)?;
            let now = self.clock.now();
            let run_id = format!("run-{:04}", project.next_run_seq);
            let guard = RunLockGuard::acquire(
                &self.layout.run_lock(project_id),
                RunLock {
                    project_id: project_id.to_owned(),
                    run_id: run_id.clone(),
                    acquired_at: now,
                    pid: std::process::id(),
                },
                self.settings.lock_staleness,
            )?;
            let allocated = project.allocate_run_id();
            debug_assert_eq!(allocated, run_id);
            self.save_project(&project)?;
            Ok(RunTicket {
                project_id: project_id.to_owned(),
                run_id,
                trigger,
                change_reason,
                started_at: now,
                _guard: guard,
            })
        })
    }

    pub fn run_update(
        &self,
        project_id: &str,
        trigger: RunTrigger,
        change_reason: Option<ChangeReason>,
    ) -> Result<UpdateRun> {
        let ticket = self.begin_run(project_id, trigger, change_reason)?;
        self.execute(ticket)
    }

    /// Run the pipeline for an accepted ticket and persist the run record.
    /// Pipeline failures are recorded on the run, not returned.
    pub fn execute(&self, ticket: RunTicket) -> Result<UpdateRun> {
        let mut run = UpdateRun {
            run_id: ticket.run_id.clone(),
            project_id: ticket.project_id.clone(),
            trigger: ticket.trigger,
            change_reason: ticket.change_reason,
            input_revision_id: None,
            input_content_hash: None,
            input_last_modified: None,
            input_state: None,
            questions_issued: Vec::new(),
            questions_failed: Vec::new(),
            suggestions_delivered: Vec::new(),
            diff_results: Vec::new(),
            notification_sent: false,
            notification_error: None,
            started_at: ticket.started_at,
            finished_at: ticket.started_at,
            status: RunStatus::Failed,
            error: None,
        };
        tracing::info!(project = %run.project_id, run = %run.run_id, trigger = ?run.trigger, "update run started");
        match self.pipeline(&mut run) {
            Ok(status) => run.status = status,
            Err(e) => {
                tracing::error!(project = %run.project_id, run = %run.run_id, error = %e, "update run failed");
                run.status = RunStatus::Failed;
                run.error = Some(e.to_string());
            }
        }
        run.finished_at = self.clock.now();
        store::write_json(&self.layout.run(&run.project_id, &run.run_id), &run)?;
        if run.status != RunStatus::Failed {
            if let Ok(project) = self.project(&run.project_id) {
                self.update_scheduler(|s| s.mark_checked(&run.project_id, project.frequency, run.started_at))?;
            }
        }
        tracing::info!(
            project = %run.project_id,
            run = %run.run_id,
            status = ?run.status,
            delivered = run.suggestions_delivered.len(),
            "update run finished"
        );
        drop(ticket);
        Ok(run)
    }

    fn pipeline(&self, run: &mut UpdateRun) -> Result<RunStatus> {
        let pid = run.project_id.clone();
        let par = self.settings.parallelism;
        let now = self.clock.now();
        let today = self.clock.today();

        // 1. snapshot
        let project = self.project(&pid)?;
        let primary = project
            .primary_source()
            .ok_or_else(|| Error::Validation(format!("project {pid} has no document source")))?
            .clone();
        let snapshot = self.with_project(&pid, || self.docs.snapshot(&project, &primary.source_id, now))?;
        run.input_revision_id = Some(snapshot.revision_id);
        run.input_content_hash = Some(snapshot.content_hash.clone());
        run.input_last_modified = snapshot.last_modified;

        // 2. papers
        let annotated = self.refresh_catalog(&pid, &snapshot, par)?;

        // 3. state and candidate questions
        let current = self.state(&pid)?;
        let (assessment, candidates) = analysis::assess_project(
            &self.gateway,
            &annotated,
            &today,
            now,
            Some(snapshot.revision_id),
            current.as_ref(),
        )?;
        let assessment = self.with_project(&pid, || {
            // an override set while this run was working wins
            let mut a = assessment;
            if let Some(fresh) = self.state(&pid)?.filter(|f| f.user_overridden) {
                a.state_label = fresh.state_label;
                a.user_overridden = true;
            }
            store::write_json(&self.layout.state(&pid), &a)?;
            Ok(a)
        })?;
        run.input_state = Some(assessment.state_label.clone());

        // 4. selection
        let k = project.questions_k.unwrap_or(self.settings.questions_k).max(1);
        let selected: Vec<analysis::CandidateQuestion> = if candidates.is_empty() {
            Vec::new()
        } else {
            let selection = analysis::select_questions(&self.gateway, &annotated, &assessment, &candidates, k)?;
            selection.indices.iter().map(|&i| candidates[i].clone()).collect()
        };
        let issued = self.issue_questions(&pid, &selected, snapshot.revision_id)?;
        run.questions_issued = issued.iter().map(|q| q.question_id.clone()).collect();

        // 5. deep research, joined before anything downstream
        let previous: BTreeMap<String, Vec<DeepResearchAnswer>> = issued
            .iter()
            .map(|q| Ok((q.question_id.clone(), self.answers(&pid, &q.question_id)?)))
            .collect::<Result<_>>()?;
        let jobs: Vec<(ResearchQuestion, String)> = issued
            .iter()
            .map(|q| {
                let n = previous[&q.question_id].len() + 1;
                (q.clone(), format!("{}#{n}", q.question_id))
            })
            .collect();
        let answers = bounded_map(par, jobs, |(q, answer_ref)| {
            let result = self.gateway.query_deep_research(&q, answer_ref, now);
            (q, result)
        });
        let mut answered: Vec<(ResearchQuestion, DeepResearchAnswer)> = Vec::new();
        for (q, result) in answers {
            match result {
                Ok(answer) => {
                    store::append_jsonl(&self.layout.answers(&pid, &q.question_id), std::slice::from_ref(&answer))?;
                    answered.push((q, answer));
                }
                Err(e) => {
                    tracing::warn!(question = %q.question_id, error = %e, "deep research failed; question stays pending");
                    run.questions_failed.push(q.question_id.clone());
                }
            }
        }
        self.update_questions(&pid, |_, questions| {
            for (q, answer) in &answered {
                if let Some(stored) = questions.iter_mut().find(|s| s.question_id == q.question_id) {
                    stored.status = QuestionStatus::Answered;
                    stored.answer_refs.push(answer.answer_ref.clone());
                }
            }
            Ok(())
        })?;

        // 6. generation for fresh questions, diffs for tracked ones
        let (tracked, fresh): (Vec<_>, Vec<_>) = answered
            .into_iter()
            .partition(|(q, _)| q.tracked && !previous[&q.question_id].is_empty());
        let generated: Vec<(ResearchQuestion, DeepResearchAnswer, Option<GenerationResult>)> =
            bounded_map(par, fresh, |(q, answer)| {
                let result = suggestions::generate_suggestions(&self.gateway, &q, &answer, &annotated, &assessment);
                let result = match result {
                    Ok(r) => Some(r),
                    Err(e) => {
                        tracing::warn!(question = %q.question_id, error = %e, "no suggestions for this answer");
                        None
                    }
                };
                (q, answer, result)
            });
        self.update_questions(&pid, |_, questions| {
            for (q, _, result) in &generated {
                if let Some(stored) = questions.iter_mut().find(|s| s.question_id == q.question_id) {
                    stored.summary = result.as_ref().map(|r| r.summary.clone());
                }
            }
            Ok(())
        })?;
        let diffs: Vec<(DiffResult, DeepResearchAnswer, ResearchQuestion)> = bounded_map(par, tracked, |(q, answer)| {
            let old = previous[&q.question_id].last().expect("tracked questions have an answer");
            let diff = diff_answers(&self.gateway, &q.text, &assessment.state_label, old, &answer);
            (diff, answer, q)
        });

        // 7. rank, dedup, anchor, deliver
        let mut batch: Vec<(SuggestionDraft, &ResearchQuestion, &DeepResearchAnswer)> = Vec::new();
        for (q, answer, result) in &generated {
            if let Some(r) = result {
                batch.extend(r.suggestions.iter().cloned().map(|d| (d, q, answer)));
            }
        }
        let drafts: Vec<SuggestionDraft> = batch.iter().map(|(d, _, _)| d.clone()).collect();
        let ranked: Vec<usize> = if drafts.is_empty() {
            Vec::new()
        } else {
            rank_suggestions(&self.gateway, &annotated, &assessment, &drafts, self.settings.suggestions_n)?.order
        };

        let mut candidates: Vec<Suggestion> = Vec::new();
        let make = |d: &SuggestionDraft, q: &ResearchQuestion, answer: &DeepResearchAnswer, kind: SuggestionKind| Suggestion {
            suggestion_id: String::new(),
            project_id: pid.clone(),
            run_id: run.run_id.clone(),
            question_id: q.question_id.clone(),
            answer_ref: answer.answer_ref.clone(),
            kind,
            title: d.title.clone(),
            text: d.text.clone(),
            papers: d.papers.clone(),
            info: d.info.clone(),
            rank: 0,
            content_hash: content_hash(&d.title, &d.text),
            revision_id: Some(snapshot.revision_id),
            delivered_at: None,
            anchor: None,
        };
        for i in ranked {
            let (d, q, answer) = &batch[i];
            candidates.push(make(d, q, answer, SuggestionKind::Generated));
        }
        for (diff, answer, q) in &diffs {
            for s in &diff.suggestions {
                if let Some(draft) = diff_draft(s, answer) {
                    candidates.push(make(&draft, q, answer, SuggestionKind::Diff));
                }
            }
        }
        run.diff_results = diffs.iter().map(|(d, _, _)| d.clone()).collect();

        let seen_path = self.layout.seen_hashes(&pid);
        let mut seen = SeenSet::load(&seen_path)?;
        let mut delivered = seen.filter(candidates, |s| s.content_hash.as_str());
        for (i, s) in delivered.iter_mut().enumerate() {
            s.rank = i as u32 + 1;
            s.suggestion_id = format!("{pid}-{}-s{:02}", run.run_id, i + 1);
            s.delivered_at = Some(now);
        }
        self.anchor_batch(&mut delivered, &snapshot, &issued, &today);

        if !delivered.is_empty() {
            self.with_project(&pid, || {
                store::append_jsonl(&self.layout.suggestions(&pid), &delivered)?;
                let hashes: Vec<String> = delivered.iter().map(|s| s.content_hash.clone()).collect();
                seen.record_delivered(&seen_path, &hashes)?;
                Ok(())
            })?;
        }
        run.suggestions_delivered = delivered.iter().map(|s| s.suggestion_id.clone()).collect();

        // 8. notification
        if !delivered.is_empty() {
            if let Some(sink) = &self.sink {
                let note = Notification {
                    project_id: pid.clone(),
                    project_name: project.name.clone(),
                    run_id: run.run_id.clone(),
                    new_suggestion_count: delivered.len(),
                    top_titles: delivered.iter().take(NOTIFICATION_TITLES).map(|s| s.title.clone()).collect(),
                    dashboard_url: self.dashboard_url(&pid),
                    created_at: now,
                    sink_kind: sink.kind(),
                };
                match notify(sink.as_ref(), &note, &self.notify_retry, now) {
                    Ok(_) => run.notification_sent = true,
                    Err(e) => {
                        tracing::warn!(project = %pid, error = %e, "notification undelivered");
                        run.notification_error = Some(e);
                    }
                }
            }
        }

        Ok(match (run.questions_issued.len(), run.questions_failed.len()) {
            (_, 0) => RunStatus::Succeeded,
            (issued, failed) if failed == issued => RunStatus::Failed,
            _ => RunStatus::Partial,
        })
    }

    /// Extract, resolve and summarize papers; returns the annotated text.
    fn refresh_catalog(&self, pid: &str, snapshot: &DocumentSnapshot, par: Parallelism) -> Result<String> {
        let mut working = self.catalog(pid)?;
        match catalog::extract_mentions(&self.gateway, &snapshot.text) {
            Ok(mentions) => {
                let resolved = catalog::resolve_all(&self.gateway, mentions, par);
                catalog::merge_catalog(&mut working, resolved);
            }
            Err(e) => tracing::warn!(project = %pid, error = %e, "paper extraction failed; keeping catalog"),
        }
        catalog::summarize_missing(&self.gateway, &mut working, par);
        let merged = self.with_project(pid, || {
            // user edits made while this run was working take precedence
            let fresh = self.catalog(pid)?;
            let mut merged = working;
            for f in &fresh {
                match merged.iter_mut().find(|p| p.paper_id == f.paper_id) {
                    Some(p) => {
                        p.removed_by_user = f.removed_by_user;
                        if f.relation_user_edited {
                            p.relation_user_edited = true;
                            p.project_relation = f.project_relation.clone();
                        }
                    }
                    None => merged.push(f.clone()),
                }
            }
            store::write_json(&self.layout.papers(pid), &merged)?;
            Ok(merged)
        })?;
        Ok(catalog::annotate_document(&snapshot.text, &merged))
    }

    /// Record the selected questions and return everything this run issues:
    /// selected questions in rank order, then pending user questions, then
    /// tracked ones.
    fn issue_questions(
        &self,
        pid: &str,
        selected: &[analysis::CandidateQuestion],
        revision_id: u64,
    ) -> Result<Vec<ResearchQuestion>> {
        let now = self.clock.now();
        self.update_questions(pid, |project, questions| {
            let mut issued: Vec<String> = Vec::new();
            let selected_ids: BTreeSet<String> = BTreeSet::new();
            let mut selected_ids = selected_ids;
            for (rank, c) in selected.iter().enumerate() {
                let wanted = crate::hashing::normalize_text(&c.question);
                let existing = questions.iter_mut().find(|q| {
                    q.status != QuestionStatus::Retired && crate::hashing::normalize_text(&q.text) == wanted
                });
                let id = match existing {
                    Some(q) => {
                        q.rank = Some(rank as u32 + 1);
                        if q.origin == QuestionOrigin::Generated {
                            q.explanation = c.explanation.clone();
                        }
                        q.source_revision_id = Some(revision_id);
                        if !q.tracked {
                            q.status = QuestionStatus::Pending;
                        }
                        q.question_id.clone()
                    }
                    None => {
                        let q = ResearchQuestion {
                            question_id: project.allocate_question_id(),
                            text: c.question.clone(),
                            explanation: c.explanation.clone(),
                            origin: QuestionOrigin::Generated,
                            rank: Some(rank as u32 + 1),
                            tracked: false,
                            status: QuestionStatus::Pending,
                            created_at: now,
                            source_revision_id: Some(revision_id),
                            summary: None,
                            answer_refs: Vec::new(),
                        };
                        let id = q.question_id.clone();
                        questions.push(q);
                        id
                    }
                };
                selected_ids.insert(id.clone());
                issued.push(id);
            }
            for q in questions.iter_mut() {
                if q.origin == QuestionOrigin::Generated && !selected_ids.contains(&q.question_id) {
                    q.rank = None;
                }
            }
            for q in questions.iter() {
                let user_pending = q.origin == QuestionOrigin::UserAdded && q.status == QuestionStatus::Pending;
                if user_pending && !issued.contains(&q.question_id) {
                    issued.push(q.question_id.clone());
                }
            }
            for q in questions.iter() {
                if q.tracked && q.has_answer() && !issued.contains(&q.question_id) {
                    issued.push(q.question_id.clone());
                }
            }
            Ok(issued
                .iter()
                .filter_map(|id| questions.iter().find(|q| &q.question_id == id).cloned())
                .collect())
        })
    }

    /// Ask for anchors and keep only the verified ones.
    fn anchor_batch(&self, batch: &mut [Suggestion], snapshot: &DocumentSnapshot, issued: &[ResearchQuestion], today: &str) {
        if batch.is_empty() {
            return;
        }
        let items: Vec<AnchorItem> = batch
            .iter()
            .map(|s| AnchorItem {
                id: s.suggestion_id.clone(),
                text: format!("{}: {}", s.title, s.text),
                explanation: issued
                    .iter()
                    .find(|q| q.question_id == s.question_id)
                    .map(|q| q.explanation.clone())
                    .filter(|e| !e.trim().is_empty()),
            })
            .collect();
        let matches = anchoring::anchor_suggestions(&self.gateway, &snapshot.sentences, &items, today);
        let checks: Vec<(usize, Option<SentenceAnchor>)> = bounded_map(
            self.settings.parallelism,
            batch.iter().enumerate().map(|(i, s)| (i, s.suggestion_id.clone())).collect(),
            |(i, id)| {
                let anchor = matches
                    .get(&id)
                    .and_then(Option::as_ref)
                    .and_then(|m| anchoring::accept_anchor(&id, snapshot.revision_id, m, &snapshot.sentences));
                (i, anchor)
            },
        );
        for (i, anchor) in checks {
            batch[i].anchor = anchor;
        }
    }
}

/// A diff suggestion as a draft. Its papers are the labels it cites; any
/// label missing from the new answer's table disqualifies it.
fn diff_draft(s: &crate::tracking::DiffSuggestion, answer: &DeepResearchAnswer) -> Option<SuggestionDraft> {
    let mut papers: Vec<PaperLabel> = Vec::new();
    for text in [&s.title, &s.text, &s.info] {
        for (_, label) in scan_labels(text) {
            if !answer.has_label(&label) {
                tracing::info!(title = %s.title, label = %label, "dropping diff suggestion with unknown label");
                return None;
            }
            if !papers.iter().any(|p| p.label == label) {
                papers.push(PaperLabel { label, to_lookup: false });
            }
        }
    }
    Some(SuggestionDraft {
        title: s.title.clone(),
        text: s.text.clone(),
        papers,
        info: s.info.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slugify("Multi-Agent Ideation!"), "multi-agent-ideation");
        assert_eq!(slugify("  ***  "), "project");
    }

    #[test]
    fn run_ids_order_numerically() {
        assert!(run_seq("run-0010") > run_seq("run-0009"));
        assert_eq!(run_seq("garbage"), 0);
    }
}
