use std::net::SocketAddr;
use std::path::Path;

use litscout::{router, AppState, BackgroundServer};
use litscout_core::tracking::RunTrigger;
use litscout_testkit::corpus::FIXTURE_PROJECT_ID;
use litscout_testkit::Harness;
use serde_json::{json, Value};

const ID: &str = FIXTURE_PROJECT_ID;

fn local() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

struct Api {
    server: BackgroundServer,
    agent: ureq::Agent,
    token: Option<String>,
}

impl Api {
    fn start(state: AppState) -> Self {
        let token = state.token.clone();
        let server = BackgroundServer::start(local(), router(state)).expect("server starts");
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Self { server, agent, token }
    }

    fn for_harness(h: &Harness) -> Self {
        Self::start(AppState::new(h.engine.clone()))
    }

    fn url(&self, path: &str) -> String {
        self.server.url(path)
    }

    fn finish(&self, resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> (u16, Value) {
        let mut resp = resp.expect("transport");
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().expect("body");
        let body = serde_json::from_str(&text).unwrap_or(Value::String(text));
        (status, body)
    }

    fn get(&self, path: &str) -> (u16, Value) {
        let mut req = self.agent.get(self.url(path));
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        self.finish(req.call())
    }

    fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let mut req = self.agent.post(self.url(path));
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        self.finish(req.send_json(body))
    }

    fn patch(&self, path: &str, body: Value) -> (u16, Value) {
        let mut req = self.agent.patch(self.url(path));
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        self.finish(req.send_json(body))
    }

    fn delete(&self, path: &str) -> (u16, Value) {
        let mut req = self.agent.delete(self.url(path));
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        self.finish(req.call())
    }
}

fn code(body: &Value) -> &str {
    body["machine_code"].as_str().unwrap_or("")
}

/// Harness with the fixture project after one completed run.
fn ran() -> Harness {
    let h = Harness::new();
    h.fixture_project();
    h.engine.run_update(ID, RunTrigger::Manual, None).unwrap();
    h
}

#[test]
fn health_and_unknown_endpoint() {
    let h = Harness::new();
    let api = Api::for_harness(&h);
    assert_eq!(api.get("/api/v1/health"), (200, json!({"status": "ok"})));
    let (status, body) = api.get("/api/v1/nothing/here");
    assert_eq!(status, 404);
    assert_eq!(code(&body), "not_found");
    assert_eq!(body["status_code"], 404);
}

#[test]
fn project_creation_and_errors() {
    let h = Harness::new();
    let api = Api::for_harness(&h);
    let doc = h.root().join("mine.md");
    std::fs::write(&doc, "# Notes\n\nWhat should we read next?\n").unwrap();
    let source = json!({"kind": "local_file", "address": doc.to_string_lossy()});

    let (status, body) = api.post(
        "/api/v1/projects",
        json!({"name": "Speech corpora", "source": source, "frequency": "daily"}),
    );
    assert_eq!(status, 201, "{body}");
    assert_eq!(body["project_id"], "speech-corpora");
    assert_eq!(body["frequency"], "daily");
    assert_eq!(body["suggestion_count"], 0);

    let (status, body) = api.get("/api/v1/projects");
    assert_eq!(status, 200);
    assert_eq!(body["projects"].as_array().unwrap().len(), 1);

    let (status, body) = api.post(
        "/api/v1/projects",
        json!({"project_id": "speech-corpora", "name": "Again", "source": source}),
    );
    assert_eq!((status, code(&body)), (409, "duplicate"));

    let (status, body) = api.post("/api/v1/projects", json!({"name": "  ", "source": source}));
    assert_eq!((status, code(&body)), (422, "validation_failed"));

    let (status, body) = api.post("/api/v1/projects", json!({"name": "No source"}));
    assert_eq!((status, code(&body)), (422, "invalid_body"));

    let (status, body) = api.get("/api/v1/projects/absent");
    assert_eq!((status, code(&body)), (404, "not_found"));
}

#[test]
fn suggestions_are_ranked_and_filterable() {
    let h = ran();
    let api = Api::for_harness(&h);
    let (status, body) = api.get("/api/v1/projects/fixture/suggestions");
    assert_eq!(status, 200);
    let list = body["suggestions"].as_array().unwrap();
    assert_eq!(list.len(), 12);
    let ranks: Vec<u64> = list.iter().map(|s| s["rank"].as_u64().unwrap()).collect();
    assert_eq!(ranks, (1..=12).collect::<Vec<_>>());

    let (_, later) = api.get("/api/v1/projects/fixture/suggestions?since_run=run-0001");
    assert!(later["suggestions"].as_array().unwrap().is_empty());
    let (_, all) = api.get("/api/v1/projects/fixture/suggestions?since_run=run-0000");
    assert_eq!(all["suggestions"].as_array().unwrap().len(), 12);

    let (status, details) = api.get("/api/v1/projects/fixture");
    assert_eq!(status, 200);
    assert_eq!(details["suggestion_count"], 12);
    assert_eq!(details["last_run"]["run_id"], "run-0001");
    assert!(!details["state"]["rationale"].as_str().unwrap().is_empty());
}

/// Character offsets of the sentence table checked against the snapshot file on
/// disk, and every anchor's quote against the sentence it names.
#[test]
fn document_anchors_match_snapshot_text() {
    let h = ran();
    let api = Api::for_harness(&h);
    let (status, view) = api.get("/api/v1/projects/fixture/document");
    assert_eq!(status, 200);
    let rev = view["revision_id"].as_u64().unwrap();
    let snapshot_path = h
        .engine
        .layout()
        .snapshots_dir(ID, None)
        .join(format!("{rev}.md"));
    let text = std::fs::read_to_string(&snapshot_path).unwrap();
    let sentences = view["sentences"].as_array().unwrap();
    for (i, s) in sentences.iter().enumerate() {
        assert_eq!(s["index"].as_u64().unwrap() as usize, i);
        let (start, end) = (s["start"].as_u64().unwrap() as usize, s["end"].as_u64().unwrap() as usize);
        let slice: String = text.chars().skip(start).take(end - start).collect();
        assert_eq!(slice, s["content"].as_str().unwrap(), "sentence {i}");
    }
    let anchors = view["anchors"].as_array().unwrap();
    assert!(!anchors.is_empty());
    for a in anchors {
        let idx = a["anchor"]["sentence_index"].as_u64().unwrap() as usize;
        assert_eq!(a["anchor"]["quote"], sentences[idx]["content"]);
        assert_eq!(a["anchor"]["revision_id"].as_u64(), Some(rev));
    }

    let (status, body) = api.get(&format!("/api/v1/projects/fixture/document?revision={}", rev + 5));
    assert_eq!((status, code(&body)), (404, "not_found"));
    let (status, body) = api.get("/api/v1/projects/fixture/document?revision=latest");
    assert_eq!((status, code(&body)), (422, "invalid_query"));
}

#[test]
fn questions_and_tracking() {
    let h = ran();
    let api = Api::for_harness(&h);

    let (status, body) = api.post("/api/v1/projects/fixture/questions", json!({"text": "   "}));
    assert_eq!((status, code(&body)), (422, "validation_failed"));

    let (status, added) = api.post(
        "/api/v1/projects/fixture/questions",
        json!({"text": "Which tokenizers suit agglutinative languages?"}),
    );
    assert_eq!(status, 201, "{added}");
    assert_eq!(added["origin"], "user_added");
    assert_eq!(added["status"], "pending");
    let (status, body) = api.post(
        "/api/v1/projects/fixture/questions",
        json!({"text": "  which tokenizers  suit AGGLUTINATIVE languages?"}),
    );
    assert_eq!((status, code(&body)), (409, "duplicate"));

    let (_, list) = api.get("/api/v1/projects/fixture/questions");
    let questions = list["questions"].as_array().unwrap();
    let answered = questions.iter().find(|q| q["rank"] == 1).expect("top question");
    let qid = answered["question_id"].as_str().unwrap();

    let (status, details) = api.get(&format!("/api/v1/questions/{qid}"));
    assert_eq!(status, 200);
    assert_eq!(details["project_id"], ID);
    assert!(!details["answers"].as_array().unwrap().is_empty());
    assert!(details["summary"].is_string());
    assert!(details["suggestions"]
        .as_array()
        .unwrap()
        .iter()
        .all(|s| s["question_id"] == qid));

    let (status, tracked) = api.post(&format!("/api/v1/questions/{qid}/track"), json!({"tracked": true}));
    assert_eq!(status, 200);
    assert_eq!(tracked["tracked"], true);
    let (_, again) = api.get(&format!("/api/v1/questions/{qid}"));
    assert_eq!(again["tracked"], true);

    let user_qid = added["question_id"].as_str().unwrap();
    let (status, body) = api.post(&format!("/api/v1/questions/{user_qid}/track"), json!({"tracked": true}));
    assert_eq!((status, code(&body)), (409, "no_baseline"));

    let (status, body) = api.get("/api/v1/questions/fixture-q9999");
    assert_eq!((status, code(&body)), (404, "not_found"));
}

#[test]
fn state_override_round_trip() {
    let h = ran();
    let api = Api::for_harness(&h);
    let (status, body) = api.patch("/api/v1/projects/fixture/state", json!({"label": "Data collection"}));
    assert_eq!(status, 200);
    assert_eq!(body["state"]["state_label"], "Data collection");
    assert_eq!(body["state"]["user_overridden"], true);

    let (_, details) = api.get("/api/v1/projects/fixture");
    assert_eq!(details["state"]["state_label"], "Data collection");

    let (status, body) = api.patch("/api/v1/projects/fixture/state", json!({"clear_override": true}));
    assert_eq!(status, 200);
    assert_eq!(body["state"]["user_overridden"], false);

    let (status, body) = api.patch("/api/v1/projects/fixture/state", json!({}));
    assert_eq!((status, code(&body)), (422, "validation_failed"));
    let (status, body) = api.patch(
        "/api/v1/projects/fixture/state",
        json!({"label": "Ideation", "clear_override": true}),
    );
    assert_eq!((status, code(&body)), (422, "validation_failed"));
    let (status, body) = api.patch("/api/v1/projects/fixture/state", json!({"label": ""}));
    assert_eq!((status, code(&body)), (422, "validation_failed"));
}

#[test]
fn paper_edits_and_soft_removal() {
    let h = ran();
    let api = Api::for_harness(&h);
    let (_, body) = api.get("/api/v1/projects/fixture/papers");
    let papers = body["papers"].as_array().unwrap();
    assert_eq!(papers.len(), 17);
    let pid = papers[0]["paper_id"].as_str().unwrap().to_owned();
    let encoded = pid.replace(':', "%3A");

    let (status, edited) = api.patch(
        &format!("/api/v1/papers/{encoded}"),
        json!({"relation": "Baseline we compare against."}),
    );
    assert_eq!(status, 200, "{edited}");
    assert_eq!(edited["relation_user_edited"], true);
    assert_eq!(edited["project_relation"], "Baseline we compare against.");

    let (status, removed) = api.delete(&format!("/api/v1/papers/{encoded}?project=fixture"));
    assert_eq!(status, 200);
    assert_eq!(removed["removed_by_user"], true);

    let (_, after) = api.get("/api/v1/projects/fixture/papers");
    let still = after["papers"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["paper_id"] == pid.as_str())
        .expect("soft-removed paper stays listed");
    assert_eq!(still["removed_by_user"], true);

    let (status, body) = api.delete("/api/v1/papers/ARXIV%3A0000.00000");
    assert_eq!((status, code(&body)), (404, "not_found"));
    let (status, body) = api.patch(&format!("/api/v1/papers/{encoded}"), json!({"relation": " "}));
    assert_eq!((status, code(&body)), (422, "validation_failed"));
}

#[test]
fn frequency_setting() {
    let h = Harness::new();
    h.fixture_project();
    let api = Api::for_harness(&h);
    let (status, body) = api.patch("/api/v1/projects/fixture/settings", json!({"frequency": "never"}));
    assert_eq!(status, 200);
    assert_eq!(body["frequency"], "never");
    assert_eq!(serde_json::to_value(h.engine.project(ID).unwrap().frequency).unwrap(), "never");
    let (status, body) = api.patch("/api/v1/projects/fixture/settings", json!({"frequency": "hourly"}));
    assert_eq!((status, code(&body)), (422, "invalid_body"));
}

#[test]
fn refresh_accepts_then_reports_busy() {
    let h = Harness::new();
    h.fixture_project();
    let api = Api::for_harness(&h);

    let (status, body) = api.post("/api/v1/projects/fixture/refresh", json!({}));
    assert_eq!(status, 202, "{body}");
    assert_eq!(body["run_id"], "run-0001");
    let run = wait_for_run(&api, "run-0001");
    assert_eq!(run["status"], "succeeded");
    assert_eq!(run["trigger"], "manual");

    // Hold the run lock the way an in-flight run does.
    let ticket = h.engine.begin_run(ID, RunTrigger::Manual, None).unwrap();
    let (status, body) = api.post("/api/v1/projects/fixture/refresh", json!({}));
    assert_eq!((status, code(&body)), (409, "busy"));
    let (_, details) = api.get("/api/v1/projects/fixture");
    assert_eq!(details["run_in_flight"], true);
    drop(ticket);

    let (status, body) = api.post("/api/v1/projects/absent/refresh", json!({}));
    assert_eq!((status, code(&body)), (404, "not_found"));
}

fn wait_for_run(api: &Api, run_id: &str) -> Value {
    for _ in 0..200 {
        let (status, body) = api.get(&format!("/api/v1/projects/fixture/runs/{run_id}"));
        if status == 200 {
            return body;
        }
        std::thread::sleep(std::time::Duration::from_millis(25));
    }
    panic!("run {run_id} never finished");
}

#[test]
fn runs_listing() {
    let h = ran();
    let api = Api::for_harness(&h);
    let (status, body) = api.get("/api/v1/projects/fixture/runs");
    assert_eq!(status, 200);
    let runs = body["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0]["suggestions_delivered"].as_array().unwrap().len(), 12);
    let (status, body) = api.get("/api/v1/projects/fixture/runs/run-0042");
    assert_eq!((status, code(&body)), (404, "not_found"));
}

#[test]
fn bearer_token_guards_the_api() {
    let h = Harness::new();
    h.fixture_project();
    let state = AppState::new(h.engine.clone()).with_token(Some("s3cret".into()));
    let mut api = Api::start(state);

    let (status, _) = api.get("/api/v1/projects/fixture");
    assert_eq!(status, 200);

    api.token = None;
    let (status, body) = api.get("/api/v1/projects/fixture");
    assert_eq!((status, code(&body)), (401, "unauthorized"));
    api.token = Some("wrong".into());
    let (status, _) = api.post("/api/v1/projects/fixture/refresh", json!({}));
    assert_eq!(status, 401);
    api.token = None;
    assert_eq!(api.get("/api/v1/health").0, 200);
}

fn write_client(dir: &Path) {
    std::fs::create_dir_all(dir.join("assets")).unwrap();
    std::fs::write(dir.join("index.html"), "<!doctype html><div id=app></div>").unwrap();
    std::fs::write(dir.join("assets/app.js"), "console.log('app')").unwrap();
}

/// The dashboard link from a real notification resolves to the client.
#[test]
fn static_client_with_spa_fallback() {
    let h = ran();
    let client = h.root().join("client");
    write_client(&client);
    let api = Api::start(AppState::new(h.engine.clone()).with_static_dir(Some(client)));

    let (status, body) = api.get("/");
    assert_eq!(status, 200);
    assert!(body.as_str().unwrap().contains("id=app"));
    let (status, body) = api.get("/assets/app.js");
    assert_eq!(status, 200);
    assert!(body.as_str().unwrap().contains("console.log"));

    let log = std::fs::read_to_string(h.notifications_log()).unwrap();
    let line: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    let url = line["dashboard_url"].as_str().unwrap();
    let path = &url[url.find("/projects/").expect("dashboard path")..];
    assert_eq!(path, "/projects/fixture");
    let (status, body) = api.get(path);
    assert_eq!(status, 200);
    assert!(body.as_str().unwrap().contains("id=app"));

    let (status, body) = api.get("/api/v1/unknown");
    assert_eq!((status, code(&body)), (404, "not_found"));
}

#[test]
fn without_client_only_the_api_answers() {
    let h = Harness::new();
    let api = Api::for_harness(&h);
    let (status, body) = api.get("/projects/fixture");
    assert_eq!(status, 404);
    assert!(body.as_str().unwrap().contains("web client not installed"));
}
