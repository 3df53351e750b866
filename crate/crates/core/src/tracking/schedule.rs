use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::UpdateFrequency;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectSchedule {
    pub last_checked: Option<DateTime<Utc>>,
    pub next_due: Option<DateTime<Utc>>,
}

/// Persisted at `data/scheduler.json`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub projects: BTreeMap<String, ProjectSchedule>,
}

impl SchedulerState {
    /// Due when never checked, or once `next_due` has passed. `Never`
    /// projects are never due.
    pub fn is_due(&self, project_id: &str, frequency: UpdateFrequency, now: DateTime<Utc>) -> bool {
        if frequency.interval().is_none() {
            return false;
        }
        self.projects
            .get(project_id)
            .and_then(|s| s.next_due)
            .is_none_or(|due| now >= due)
    }

    /// Record a check (or a completed run) at `at`; the next check falls one
    /// interval later.
    pub fn mark_checked(&mut self, project_id: &str, frequency: UpdateFrequency, at: DateTime<Utc>) {
        let entry = self.projects.entry(project_id.to_owned()).or_default();
        entry.last_checked = Some(at);
        entry.next_due = frequency.interval().map(|i| at + i);
    }

    /// Recompute the due date after a frequency change.
    pub fn reschedule(&mut self, project_id: &str, frequency: UpdateFrequency) {
        if let Some(entry) = self.projects.get_mut(project_id) {
            entry.next_due = match (entry.last_checked, frequency.interval()) {
                (Some(last), Some(i)) => Some(last + i),
                _ => None,
            };
        }
    }

    pub fn remove(&mut self, project_id: &str) {
        self.projects.remove(project_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};

    #[test]
    fn due_date_arithmetic() {
        let t0 = Utc.with_ymd_and_hms(2025, 3, 3, 9, 0, 0).unwrap();
        let mut s = SchedulerState::default();
        assert!(s.is_due("p", UpdateFrequency::Weekly, t0), "first check is immediate");
        assert!(!s.is_due("p", UpdateFrequency::Never, t0));
        s.mark_checked("p", UpdateFrequency::Weekly, t0);
        assert!(!s.is_due("p", UpdateFrequency::Weekly, t0 + Duration::days(3)));
        assert!(s.is_due("p", UpdateFrequency::Weekly, t0 + Duration::days(7)));

        s.mark_checked("q", UpdateFrequency::Biweekly, t0);
        assert_eq!(s.projects["q"].next_due, Some(t0 + Duration::days(14)));
        s.reschedule("q", UpdateFrequency::Weekly);
        assert_eq!(s.projects["q"].next_due, Some(t0 + Duration::days(7)));
        s.reschedule("q", UpdateFrequency::Never);
        assert_eq!(s.projects["q"].next_due, None);
        assert!(!s.is_due("q", UpdateFrequency::Never, t0 + Duration::days(100)));
    }
}
