//! Run notifications: a short message linking to the dashboard, delivered
//! to a file, a webhook, or an SMTP relay.

use std::path::PathBuf;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::ProviderError;
use crate::gateway::RetryPolicy;
use crate::http::agent;
use crate::store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkKind {
    File,
    Webhook,
    Smtp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub project_id: String,
    pub project_name: String,
    pub run_id: String,
    pub new_suggestion_count: usize,
    pub top_titles: Vec<String>,
    pub dashboard_url: String,
    pub created_at: DateTime<Utc>,
    pub sink_kind: SinkKind,
}

impl Notification {
    pub fn subject(&self) -> String {
        let plural = if self.new_suggestion_count == 1 { "" } else { "s" };
        format!(
            "{}: {} new suggestion{plural}",
            self.project_name, self.new_suggestion_count
        )
    }

    /// Plain-text body: one line per suggestion title, then the link.
    pub fn body(&self) -> String {
        let mut out = format!("{}\n\n", self.subject());
        for t in &self.top_titles {
            out.push_str(&format!("- {t}\n"));
        }
        let more = self.new_suggestion_count.saturating_sub(self.top_titles.len());
        if more > 0 {
            out.push_str(&format!("- and {more} more\n"));
        }
        out.push_str(&format!("\nOpen the dashboard: {}\n", self.dashboard_url));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReceipt {
    pub sink_kind: SinkKind,
    pub attempts: u32,
    pub delivered_at: DateTime<Utc>,
}

pub trait NotificationSink: Send + Sync {
    fn kind(&self) -> SinkKind;
    fn deliver(&self, notification: &Notification) -> Result<(), String>;
}

/// Appends one JSON record per line.
#[derive(Debug, Clone)]
pub struct FileSink {
    path: PathBuf,
}

impl FileSink {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

impl NotificationSink for FileSink {
    fn kind(&self) -> SinkKind {
        SinkKind::File
    }

    fn deliver(&self, n: &Notification) -> Result<(), String> {
        store::append_jsonl(&self.path, std::slice::from_ref(n)).map_err(|e| e.to_string())
    }
}

/// POSTs the notification as JSON; any non-2xx status is a failure.
#[derive(Debug, Clone)]
pub struct WebhookSink {
    url: String,
    timeout: Duration,
}

impl WebhookSink {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout: Duration::from_secs(10),
        }
    }
}

impl NotificationSink for WebhookSink {
    fn kind(&self) -> SinkKind {
        SinkKind::Webhook
    }

    fn deliver(&self, n: &Notification) -> Result<(), String> {
        let resp = agent(self.timeout)
            .post(&self.url)
            .send_json(n)
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        if (200..300).contains(&status) {
            Ok(())
        } else {
            Err(format!("webhook answered HTTP {status}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmtpSettings {
    pub host: String,
    #[serde(default = "default_smtp_port")]
    pub port: u16,
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub username: Option<String>,
    /// Name of the environment variable holding the password.
    #[serde(default)]
    pub password_env: Option<String>,
}

fn default_smtp_port() -> u16 {
    25
}

#[derive(Debug, Clone)]
pub struct SmtpSink {
    settings: SmtpSettings,
}

impl SmtpSink {
    pub fn new(settings: SmtpSettings) -> Self {
        Self { settings }
    }
}

impl NotificationSink for SmtpSink {
    fn kind(&self) -> SinkKind {
        SinkKind::Smtp
    }

    fn deliver(&self, n: &Notification) -> Result<(), String> {
        use lettre::message::header::ContentType;
        use lettre::transport::smtp::authentication::Credentials;
        use lettre::{Message, SmtpTransport, Transport};

        let s = &self.settings;
        let message = Message::builder()
            .from(s.from.parse().map_err(|e| format!("bad from address: {e}"))?)
            .to(s.to.parse().map_err(|e| format!("bad to address: {e}"))?)
            .subject(n.subject())
            .header(ContentType::TEXT_PLAIN)
            .body(n.body())
            .map_err(|e| e.to_string())?;
        let mut transport = SmtpTransport::builder_dangerous(&s.host).port(s.port);
        if let (Some(user), Some(var)) = (&s.username, &s.password_env) {
            let password = std::env::var(var).map_err(|_| format!("{var} is not set"))?;
            transport = transport.credentials(Credentials::new(user.clone(), password));
        }
        transport
            .build()
            .send(&message)
            .map(|_| ())
            .map_err(|e| e.to_string())
    }
}

/// Deliver with up to `retry.max_attempts` tries.
pub fn notify(
    sink: &dyn NotificationSink,
    notification: &Notification,
    retry: &RetryPolicy,
    now: DateTime<Utc>,
) -> Result<DeliveryReceipt, String> {
    let mut attempts = 0;
    retry
        .run(|attempt| {
            attempts = attempt;
            sink.deliver(notification).map_err(ProviderError::Transient)
        })
        .map(|()| DeliveryReceipt {
            sink_kind: sink.kind(),
            attempts,
            delivered_at: now,
        })
        .map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::RecordingSleeper;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    fn note(count: usize) -> Notification {
        Notification {
            project_id: "p".into(),
            project_name: "Project".into(),
            run_id: "run-0001".into(),
            new_suggestion_count: count,
            top_titles: vec!["A".into(), "B".into()],
            dashboard_url: "http://localhost/projects/p".into(),
            created_at: Utc::now(),
            sink_kind: SinkKind::File,
        }
    }

    struct Failing(AtomicU32);

    impl NotificationSink for Failing {
        fn kind(&self) -> SinkKind {
            SinkKind::Webhook
        }
        fn deliver(&self, _: &Notification) -> Result<(), String> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Err("HTTP 500".into())
        }
    }

    #[test]
    fn body_lists_titles_and_link() {
        let body = note(5).body();
        assert!(body.starts_with("Project: 5 new suggestions"));
        assert!(body.contains("- A\n- B\n- and 3 more\n"));
        assert!(body.contains("http://localhost/projects/p"));
    }

    #[test]
    fn file_sink_appends_lines() {
        let dir = tempfile::tempdir().unwrap();
        let sink = FileSink::new(dir.path().join("notifications.log"));
        let retry = RetryPolicy::default().with_sleeper(Arc::new(RecordingSleeper::default()));
        notify(&sink, &note(1), &retry, Utc::now()).unwrap();
        notify(&sink, &note(2), &retry, Utc::now()).unwrap();
        let lines: Vec<Notification> = store::read_jsonl(&dir.path().join("notifications.log")).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].new_suggestion_count, 2);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let sink = Failing(AtomicU32::new(0));
        let sleeper = Arc::new(RecordingSleeper::default());
        let retry = RetryPolicy::default().with_sleeper(sleeper.clone());
        assert!(notify(&sink, &note(1), &retry, Utc::now()).is_err());
        assert_eq!(sink.0.load(Ordering::SeqCst), 3);
        assert_eq!(sleeper.waits().len(), 2);
    }
}
