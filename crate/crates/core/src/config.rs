//! Process configuration (TOML file + environment secrets) and provider
//! wiring.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::Deserialize;

use crate::analysis::DEFAULT_QUESTIONS_K;
use crate::error::{Error, Result};
use crate::gateway::{
    DeepResearchProvider, FixtureMetadata, Gateway, HttpDeepResearch, HttpLlm, HttpMetadata,
    LlmProvider, MetadataProvider, RecordingDeepResearch, RecordingLlm, ReplayDeepResearch,
    ReplayLlm, DEFAULT_PROVIDER_CAP,
};
use crate::notify::{FileSink, NotificationSink, SmtpSettings, SmtpSink, WebhookSink};
use crate::parallel::Parallelism;
use crate::suggestions::DEFAULT_SUGGESTIONS_N;
use crate::tracking::{UpdateFrequency, DEFAULT_LOCK_STALENESS_MINUTES};

pub const ENV_LLM_KEY: &str = "LLM_API_KEY";
pub const ENV_RESEARCH_KEY: &str = "DEEP_RESEARCH_API_KEY";
pub const ENV_METADATA_KEY: &str = "METADATA_API_KEY";
pub const ENV_API_TOKEN: &str = "API_TOKEN";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default)]
    pub fixtures_dir: Option<PathBuf>,
    /// Built web client served at `/`.
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
    /// Base URL used for dashboard links in notifications.
    #[serde(default = "default_public_url")]
    pub public_url: String,
    #[serde(default = "default_k")]
    pub questions_k: usize,
    #[serde(default = "default_n")]
    pub suggestions_n: usize,
    /// Pin the clock (for fixture runs and demos).
    #[serde(default)]
    pub frozen_clock: Option<DateTime<Utc>>,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub providers: ProvidersConfig,
    #[serde(default)]
    pub notifications: NotificationConfig,
    #[serde(default)]
    pub seed_projects: Vec<SeedProject>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    #[serde(default = "default_tick")]
    pub tick_seconds: u64,
    #[serde(default = "default_workers")]
    pub worker_pool: usize,
    #[serde(default = "default_staleness")]
    pub lock_staleness_minutes: i64,
    #[serde(default = "default_true")]
    pub enabled: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            tick_seconds: default_tick(),
            worker_pool: default_workers(),
            lock_staleness_minutes: default_staleness(),
            enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    /// Fixture replay; a missing fixture is an error.
    #[default]
    Replay,
    /// Replay when possible, otherwise call the live provider and save.
    Record,
    Live,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvidersConfig {
    #[serde(default)]
    pub mode: ProviderMode,
    /// Items in flight per fan-out stage.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Concurrent requests per provider.
    #[serde(default = "default_cap")]
    pub provider_cap: usize,
    #[serde(default)]
    pub llm: Option<LlmConfig>,
    #[serde(default)]
    pub deep_research: Option<EndpointConfig>,
    #[serde(default)]
    pub metadata: Option<EndpointConfig>,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        Self {
            mode: ProviderMode::default(),
            parallelism: default_parallelism(),
            provider_cap: default_cap(),
            llm: None,
            deep_research: None,
            metadata: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub timeout_seconds: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub endpoint: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkChoice {
    #[default]
    File,
    Webhook,
    Smtp,
    None,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotificationConfig {
    #[serde(default)]
    pub sink: SinkChoice,
    #[serde(default)]
    pub webhook_url: Option<String>,
    #[serde(default)]
    pub smtp: Option<SmtpSettings>,
}

/// A project created at startup if it does not exist yet.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedProject {
    pub id: String,
    pub name: String,
    /// Local path or http(s) URL of the document.
    pub source: String,
    #[serde(default)]
    pub frequency: UpdateFrequency,
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}
fn default_bind() -> SocketAddr {
    "127.0.0.1:8080".parse().unwrap()
}
fn default_public_url() -> String {
    "http://127.0.0.1:8080".into()
}
fn default_k() -> usize {
    DEFAULT_QUESTIONS_K
}
fn default_n() -> usize {
    DEFAULT_SUGGESTIONS_N
}
fn default_tick() -> u64 {
    3600
}
fn default_workers() -> usize {
    2
}
fn default_staleness() -> i64 {
    DEFAULT_LOCK_STALENESS_MINUTES
}
fn default_true() -> bool {
    true
}
fn default_parallelism() -> usize {
    4
}
fn default_cap() -> usize {
    DEFAULT_PROVIDER_CAP
}

impl Default for Config {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

fn env_secret(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

impl Config {
    /// Read a config file. Relative paths inside it (data, fixtures, static
    /// assets, local seed sources) are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: Config = toml::from_str(&text)
            .map_err(|e| Error::Validation(format!("invalid config {}: {e}", path.display())))?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        config.resolve_relative_to(base);
        Ok(config)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        if let Some(p) = self.fixtures_dir.as_mut() {
            fix(p);
        }
        if let Some(p) = self.static_dir.as_mut() {
            fix(p);
        }
        for seed in &mut self.seed_projects {
            let is_url = seed.source.starts_with("http://") || seed.source.starts_with("https://");
            if !is_url && Path::new(&seed.source).is_relative() {
                seed.source = base.join(&seed.source).to_string_lossy().into_owned();
            }
        }
    }

    pub fn parallelism(&self) -> Parallelism {
        Parallelism::from_width(self.providers.parallelism)
    }

    pub fn tick_interval(&self) -> Duration {
        Duration::from_secs(self.scheduler.tick_seconds.max(1))
    }

    fn fixtures(&self) -> Result<&Path> {
        self.fixtures_dir
            .as_deref()
            .ok_or_else(|| Error::Validation("providers.mode needs fixtures_dir".into()))
    }

    fn live_llm(&self) -> Result<Arc<dyn LlmProvider>> {
        let c = self
            .providers
            .llm
            .as_ref()
            .ok_or_else(|| Error::Validation("[providers.llm] is required outside replay mode".into()))?;
        let mut llm = HttpLlm::new(&c.endpoint, &c.model, env_secret(ENV_LLM_KEY));
        if let Some(t) = c.timeout_seconds {
            llm = llm.with_timeout(Duration::from_secs(t));
        }
        Ok(Arc::new(llm))
    }

    fn live_research(&self) -> Result<Arc<dyn DeepResearchProvider>> {
        let c = self.providers.deep_research.as_ref().ok_or_else(|| {
            Error::Validation("[providers.deep_research] is required outside replay mode".into())
        })?;
        Ok(Arc::new(HttpDeepResearch::new(&c.endpoint, env_secret(ENV_RESEARCH_KEY))))
    }

    fn live_metadata(&self) -> Arc<dyn MetadataProvider> {
        let base = self
            .providers
            .metadata
            .as_ref()
            .map(|m| m.endpoint.clone())
            .unwrap_or_else(|| "https://api.semanticscholar.org/graph/v1".into());
        Arc::new(HttpMetadata::new(base, env_secret(ENV_METADATA_KEY)))
    }

    /// Build the provider gateway for the configured mode.
    pub fn gateway(&self) -> Result<Gateway> {
        let (llm, research, metadata): (
            Arc<dyn LlmProvider>,
            Arc<dyn DeepResearchProvider>,
            Arc<dyn MetadataProvider>,
        ) = match self.providers.mode {
            ProviderMode::Replay => {
                let root = self.fixtures()?;
                let metadata = FixtureMetadata::load(root)?;
                (
                    Arc::new(ReplayLlm::new(root)),
                    Arc::new(ReplayDeepResearch::new(root)),
                    Arc::new(metadata),
                )
            }
            ProviderMode::Record => {
                let root = self.fixtures()?;
                (
                    Arc::new(RecordingLlm::new(root, self.live_llm()?)),
                    Arc::new(RecordingDeepResearch::new(root, self.live_research()?)),
                    self.live_metadata(),
                )
            }
            ProviderMode::Live => (self.live_llm()?, self.live_research()?, self.live_metadata()),
        };
        Ok(Gateway::new(llm, research, metadata).with_provider_cap(self.providers.provider_cap.max(1)))
    }

    pub fn notification_sink(&self) -> Result<Option<Arc<dyn NotificationSink>>> {
        let n = &self.notifications;
        Ok(match n.sink {
            SinkChoice::None => None,
            SinkChoice::File => Some(Arc::new(FileSink::new(self.data_dir.join("notifications.log")))),
            SinkChoice::Webhook => {
                let url = n
                    .webhook_url
                    .clone()
                    .ok_or_else(|| Error::Validation("webhook sink needs notifications.webhook_url".into()))?;
                Some(Arc::new(WebhookSink::new(url)))
            }
            SinkChoice::Smtp => {
                let s = n
                    .smtp
                    .clone()
                    .ok_or_else(|| Error::Validation("smtp sink needs [notifications.smtp]".into()))?;
                Some(Arc::new(SmtpSink::new(s)))
            }
        })
    }

    pub fn api_token() -> Option<String> {
        env_secret(ENV_API_TOKEN)
    }
}
