//! Provider abstraction: LLM completion, deep-research Q&A and scholarly
//! metadata, plus retry, concurrency caps and fixture replay.

mod llm;
mod metadata;
pub mod prompts;
mod replay;
mod research;
mod retry;
pub mod structured;

use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, Utc};

pub use llm::HttpLlm;
pub use metadata::{normalize_title, paper_id_from_url, HttpMetadata, PaperMetadata};
pub use prompts::{PromptRequest, PromptTemplate, SYSTEM_PROMPT};
pub use replay::{
    FixtureMetadata, RecordingDeepResearch, RecordingLlm, ReplayDeepResearch, ReplayLlm,
};
pub use research::{ensure_label_closure, CitationRef, DeepResearchAnswer, HttpDeepResearch, RawAnswer};
pub use retry::{RecordingSleeper, RetryPolicy, Semaphore, Sleeper, ThreadSleeper};

use crate::analysis::{QuestionStatus, ResearchQuestion};
use crate::error::{Error, ParseError, ProviderError, Result};

pub trait LlmProvider: Send + Sync {
    fn complete(&self, request: &PromptRequest) -> Result<String, ProviderError>;
}

pub trait DeepResearchProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn query(&self, question: &str) -> Result<RawAnswer, ProviderError>;
}

pub trait MetadataProvider: Send + Sync {
    /// Look up by a provider-understood identifier (`ARXIV:…`, `DOI:…`,
    /// `CorpusId:…`, a paper hash, …).
    fn by_id(&self, id: &str) -> Result<Option<PaperMetadata>, ProviderError>;
    fn search_title(&self, title: &str) -> Result<Vec<PaperMetadata>, ProviderError>;
}

pub const DEFAULT_PROVIDER_CAP: usize = 4;

pub struct Gateway {
    llm: Arc<dyn LlmProvider>,
    research: Arc<dyn DeepResearchProvider>,
    metadata: Arc<dyn MetadataProvider>,
    retry: RetryPolicy,
    llm_slots: Semaphore,
    research_slots: Semaphore,
    metadata_slots: Semaphore,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("research", &self.research.provider_id())
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    pub fn new(
        llm: Arc<dyn LlmProvider>,
        research: Arc<dyn DeepResearchProvider>,
        metadata: Arc<dyn MetadataProvider>,
    ) -> Self {
        Self {
            llm,
            research,
            metadata,
            retry: RetryPolicy::default(),
            llm_slots: Semaphore::new(DEFAULT_PROVIDER_CAP),
            research_slots: Semaphore::new(DEFAULT_PROVIDER_CAP),
            metadata_slots: Semaphore::new(DEFAULT_PROVIDER_CAP),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_provider_cap(mut self, cap: usize) -> Self {
        self.llm_slots = Semaphore::new(cap);
        self.research_slots = Semaphore::new(cap);
        self.metadata_slots = Semaphore::new(cap);
        self
    }

    pub fn complete(&self, request: &PromptRequest) -> Result<String, ProviderError> {
        self.retry.run(|_| {
            let _permit = self.llm_slots.acquire();
            self.llm.complete(request)
        })
    }

    /// Complete and parse; a parse failure gets exactly one more call.
    pub fn complete_parsed<T>(
        &self,
        request: &PromptRequest,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T> {
        let first = self.complete(request)?;
        match parse(&first) {
            Ok(v) => Ok(v),
            Err(e) => {
                tracing::warn!(template = %request.template, error = %e, "unparseable output, retrying once");
                let second = self.complete(request)?;
                parse(&second).map_err(Error::Parse)
            }
        }
    }

    /// Ask the deep-research provider one question. The returned answer has
    /// a closed label table; persisting it is the caller's job.
    pub fn query_deep_research(
        &self,
        question: &ResearchQuestion,
        answer_ref: String,
        retrieved_at: DateTime<Utc>,
    ) -> Result<DeepResearchAnswer> {
        if !(question.status == QuestionStatus::Pending || question.tracked) {
            return Err(Error::Validation(format!(
                "question {} is neither pending nor tracked",
                question.question_id
            )));
        }
        let raw = self.retry.run(|_| {
            let _permit = self.research_slots.acquire();
            self.research.query(&question.text)
        })?;
        let raw = ensure_label_closure(raw);
        Ok(DeepResearchAnswer {
            question_id: question.question_id.clone(),
            answer_ref,
            answer_text: raw.answer_text,
            citation_labels: raw.citation_labels,
            retrieved_at,
            provider_id: self.research.provider_id().to_owned(),
        })
    }

    /// Resolve a title, URL or identifier to canonical metadata.
    ///
    /// URLs and identifiers go to the id endpoint. Titles go to search and
    /// only an exact match after title normalization is accepted.
    pub fn lookup_paper(&self, query: &str) -> Result<Option<PaperMetadata>, ProviderError> {
        let query = query.trim();
        if query.is_empty() {
            return Ok(None);
        }
        let id = if query.starts_with("http://") || query.starts_with("https://") {
            match paper_id_from_url(query) {
                Some(id) => Some(id),
                None => return Ok(None),
            }
        } else if metadata::looks_like_id(query) {
            Some(query.to_owned())
        } else {
            None
        };
        if let Some(id) = id {
            return self.retry.run(|_| {
                let _permit = self.metadata_slots.acquire();
                self.metadata.by_id(&id)
            });
        }
        let wanted = normalize_title(query);
        let hits = self.retry.run(|_| {
            let _permit = self.metadata_slots.acquire();
            self.metadata.search_title(query)
        })?;
        Ok(hits.into_iter().find(|m| normalize_title(&m.title) == wanted))
    }
}
