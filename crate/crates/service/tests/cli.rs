use std::path::Path;
use std::process::{Command, Output};

use chrono::Duration;
use litscout::scheduler;
use litscout_core::tracking::UpdateFrequency;
use litscout_testkit::corpus::FIXTURE_PROJECT_ID;
use litscout_testkit::fixtures::fixtures_dir;
use litscout_testkit::Harness;
use serde_json::Value;

fn litscout(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_litscout"))
        .arg("--config")
        .arg(fixtures_dir().join("config.toml"))
        .arg("--data-dir")
        .arg(data)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

#[test]
fn run_then_inspect_in_overridden_data_dir() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("elsewhere");

    let out = litscout(&data, &["run", "--project", FIXTURE_PROJECT_ID]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(run["status"], "succeeded");
    assert_eq!(run["run_id"], "run-0001");
    // the notification sink follows the data-dir override
    assert!(data.join("notifications.log").is_file());

    let out = litscout(&data, &["inspect", "--project", FIXTURE_PROJECT_ID]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dump: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(dump["runs"].as_array().unwrap().len(), 1);
    assert_eq!(dump["suggestions"].as_array().unwrap().len(), run["suggestions_delivered"].as_array().unwrap().len());
    assert!(!dump["papers"].as_array().unwrap().is_empty());
    assert!(dump["schedule"]["next_due"].is_string());
}

#[test]
fn unknown_project_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = litscout(dir.path(), &["inspect", "--project", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn scheduler_tick_runs_only_due_projects() {
    let h = Harness::new();
    h.project_with("weekly", "Our method improves recall on small corpora. We plan more ablations.", UpdateFrequency::Weekly);
    h.project_with("never", "A draft that is never refreshed automatically.", UpdateFrequency::Never);

    let first = scheduler::tick(&h.engine);
    let ran: Vec<String> = first.iter().map(|r| r.as_ref().unwrap().project_id.clone()).collect();
    assert_eq!(ran, vec!["weekly".to_owned()]);

    h.clock.advance(Duration::days(1));
    assert!(scheduler::tick(&h.engine).is_empty());

    // a week later the document is unchanged, so the check runs nothing
    h.clock.advance(Duration::days(7));
    assert!(scheduler::tick(&h.engine).is_empty());
}
