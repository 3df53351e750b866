//! Update workflow bookkeeping: frequencies, the heartbeat schedule, run
//! records, per-project run locks and tracked-question diffs.

mod diff;
mod lock;
mod schedule;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

pub use diff::{diff_answers, diff_prompt, parse_diff_output, DiffResult, DiffSuggestion};
pub use lock::{RunLock, RunLockGuard, DEFAULT_LOCK_STALENESS_MINUTES};
pub use schedule::{ProjectSchedule, SchedulerState};

use crate::document::ChangeReason;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateFrequency {
    Daily,
    #[serde(rename = "every_2_days")]
    Every2Days,
    #[default]
    Weekly,
    Biweekly,
    Never,
}

impl UpdateFrequency {
    /// Time between scheduled checks; `None` for `Never`.
    pub fn interval(self) -> Option<Duration> {
        match self {
            UpdateFrequency::Daily => Some(Duration::days(1)),
            UpdateFrequency::Every2Days => Some(Duration::days(2)),
            UpdateFrequency::Weekly => Some(Duration::days(7)),
            UpdateFrequency::Biweekly => Some(Duration::days(14)),
            UpdateFrequency::Never => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(s.trim().to_ascii_lowercase())).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunTrigger {
    Scheduled,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Succeeded,
    Partial,
    Failed,
}

/// One end-to-end pipeline execution, persisted at `runs/{run_id}.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateRun {
    pub run_id: String,
    pub project_id: String,
    pub trigger: RunTrigger,
    pub change_reason: Option<ChangeReason>,
    pub input_revision_id: Option<u64>,
    pub input_content_hash: Option<String>,
    pub input_last_modified: Option<DateTime<Utc>>,
    pub input_state: Option<String>,
    pub questions_issued: Vec<String>,
    pub questions_failed: Vec<String>,
    pub suggestions_delivered: Vec<String>,
    pub diff_results: Vec<DiffResult>,
    pub notification_sent: bool,
    pub notification_error: Option<String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub status: RunStatus,
    pub error: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_wire_names() {
        assert_eq!(
            serde_json::to_string(&UpdateFrequency::Every2Days).unwrap(),
            "\"every_2_days\""
        );
        assert_eq!(UpdateFrequency::parse("Biweekly"), Some(UpdateFrequency::Biweekly));
        assert_eq!(UpdateFrequency::parse("hourly"), None);
        assert_eq!(UpdateFrequency::Never.interval(), None);
        assert_eq!(UpdateFrequency::Weekly.interval(), Some(Duration::days(7)));
    }
}
