//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use chrono::Duration as Span;
use litscout_core::analysis::{analysis_request, parse_question_ranking, CandidateQuestion};
use litscout_core::anchoring::{verify_anchor, AnchorMatch};
use litscout_core::document::SentenceEntry;
use litscout_core::engine::Engine;
use litscout_core::hashing::normalize_text;
use litscout_core::suggestions::parse_generation_output;
use litscout_core::suggestions::parse_recommendation_ranking;
use litscout_core::suggestions::SuggestionDraft;
use litscout_core::tracking::diff_answers;
use litscout_core::tracking::{RunTrigger, UpdateFrequency};
use litscout_testkit::corpus::{frozen_now, DOC_REV1, DOC_REV2, FIXTURE_PROJECT_ID};
use litscout_testkit::fixtures::{
    fixture_engine, fixtures_dir, load_json, replay_gateway, revision_questions, top_question, CorruptedAnchor,
    DiffCase, GenerationCase, ParseOutcome, RankingCase, RankingKind, TRACKING_DIR,
};
use litscout_testkit::Harness;
use regex::Regex;
use serde_json::Value;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn json_lines(path: &Path) -> Result<Vec<Value>, String> {
    read(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(err))
        .collect()
}

type CheckFn<'a> = Box<dyn Fn() -> Check + 'a>;

fn project_dir(data: &Path) -> PathBuf {
    data.join("projects").join(FIXTURE_PROJECT_ID)
}

/// Run the built binary against the fixture config with its own data dir.
fn cli_run(data: &Path) -> Result<(Value, Duration), String> {
    let config = fixtures_dir().join("config.toml");
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_litscout"))
        .arg("--config")
        .arg(&config)
        .arg("--data-dir")
        .arg(data)
        .args(["run", "--project", FIXTURE_PROJECT_ID])
        .env("RUST_LOG", "warn")
        .output()
        .map_err(err)?;
    let elapsed = started.elapsed();
    if !out.status.success() {
        return Err(format!(
            "litscout run exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    let run = serde_json::from_slice(&out.stdout).map_err(err)?;
    Ok((run, elapsed))
}

fn persisted_files(data: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let dir = project_dir(data);
    let mut files = BTreeMap::new();
    for name in ["suggestions.jsonl", "state.json"] {
        files.insert(name.to_owned(), std::fs::read(dir.join(name)).map_err(err)?);
    }
    for entry in std::fs::read_dir(dir.join("runs")).map_err(err)? {
        let path = entry.map_err(err)?.path();
        let name = format!("runs/{}", path.file_name().unwrap().to_string_lossy());
        files.insert(name, std::fs::read(&path).map_err(err)?);
    }
    Ok(files)
}

struct Ctx {
    /// Data dir after one CLI run on the fixture.
    first: tempfile::TempDir,
    /// Data dir of the tracking scenario (run, track, re-run with new answers).
    tracking: tempfile::TempDir,
}

fn criterion_1(ctx: &Ctx) -> Check {
    let (a, ta) = cli_run(ctx.first.path())?;
    let other = tempfile::tempdir().map_err(err)?;
    let (b, tb) = cli_run(other.path())?;
    ensure(a == b, || "run records printed by the two runs differ".into())?;
    let fa = persisted_files(ctx.first.path())?;
    let fb = persisted_files(other.path())?;
    ensure(fa.keys().eq(fb.keys()), || format!("file sets differ: {:?} vs {:?}", fa.keys(), fb.keys()))?;
    for (name, bytes) in &fa {
        ensure(fb[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    let questions = a["questions_issued"].as_array().map_or(0, Vec::len);
    let delivered = a["suggestions_delivered"].as_array().map_or(0, Vec::len);
    ensure(questions == 12, || format!("{questions} questions issued, want 12"))?;
    ensure(delivered == 12, || format!("{delivered} suggestions delivered, want 12"))?;
    let slowest = ta.max(tb);
    ensure(slowest < Duration::from_secs(10), || format!("run took {slowest:?}"))?;
    Ok(format!(
        "{} files byte-identical, 12 questions, 12 delivered, slowest run {:.2}s",
        fa.len(),
        slowest.as_secs_f64()
    ))
}

/// Checks anchors straight from the persisted files: each quote must equal
/// the sentence content in the snapshot index it names.
fn persisted_anchor_check(data: &Path) -> Result<(usize, usize), String> {
    let dir = project_dir(data);
    let mut indexes: BTreeMap<u64, Vec<Value>> = BTreeMap::new();
    let (mut total, mut ok) = (0, 0);
    for s in json_lines(&dir.join("suggestions.jsonl"))? {
        let Some(anchor) = s.get("anchor").filter(|a| !a.is_null()) else {
            continue;
        };
        total += 1;
        let rev = anchor["revision_id"].as_u64().ok_or("anchor without revision")?;
        if let std::collections::btree_map::Entry::Vacant(slot) = indexes.entry(rev) {
            let index: Value =
                serde_json::from_str(&read(&dir.join("snapshots").join(format!("{rev}.index.json")))?).map_err(err)?;
            slot.insert(index["sentences"].as_array().cloned().unwrap_or_default());
        }
        let sentences = &indexes[&rev];
        let idx = anchor["sentence_index"].as_u64().ok_or("anchor without index")? as usize;
        if sentences.get(idx).map(|e| &e["content"]) == Some(&anchor["quote"]) {
            ok += 1;
        }
    }
    Ok((ok, total))
}

fn criterion_2(ctx: &Ctx) -> Check {
    let mut ok = 0;
    let mut total = 0;
    for data in [ctx.first.path(), ctx.tracking.path()] {
        let (o, t) = persisted_anchor_check(data)?;
        ok += o;
        total += t;
    }
    ensure(total > 0, || "no persisted anchors to check".into())?;
    ensure(ok == total, || format!("{ok}/{total} persisted anchors match their sentence"))?;

    let root = fixtures_dir();
    let corrupted: Vec<CorruptedAnchor> = load_json(&root.join("anchors/corrupted.json")).map_err(err)?;
    let index: Value = serde_json::from_str(&read(&project_dir(ctx.first.path()).join("snapshots/1.index.json"))?)
        .map_err(err)?;
    let sentences: Vec<SentenceEntry> = serde_json::from_value(index["sentences"].clone()).map_err(err)?;
    let mut rejected = 0;
    for c in &corrupted {
        let m = AnchorMatch {
            sentence_index: c.sentence_index,
            quote: c.quote.clone(),
            reasoning: c.reasoning.clone(),
            location: c.location.clone(),
        };
        match verify_anchor(&m, &sentences) {
            Err(reason) if reason == c.expect => rejected += 1,
            Err(reason) => return Err(format!("{}: rejected as {reason}, want {}", c.name, c.expect)),
            Ok(()) => return Err(format!("{}: corrupted anchor accepted", c.name)),
        }
    }
    ensure(corrupted.len() == 10, || format!("corpus has {} corrupted anchors", corrupted.len()))?;
    Ok(format!("{ok}/{total} persisted anchors verified; {rejected}/10 corrupted anchors rejected"))
}

fn criterion_3(ctx: &Ctx) -> Check {
    let data = ctx.first.path();
    let dir = project_dir(data);
    let seen_before = read(&dir.join("seen_hashes.txt"))?;
    let notes_before = read(&data.join("notifications.log"))?.lines().count();
    let delivered_first = json_lines(&dir.join("suggestions.jsonl"))?.len();
    ensure(seen_before.lines().count() == delivered_first, || {
        format!("seen set has {} entries after {delivered_first} deliveries", seen_before.lines().count())
    })?;
    ensure(notes_before == 1, || format!("{notes_before} notifications after the first run"))?;

    let scratch = tempfile::tempdir().map_err(err)?;
    let copy = scratch.path().join("data");
    copy_dir(data, &copy)?;
    let (run, _) = cli_run(&copy)?;
    let delivered = run["suggestions_delivered"].as_array().map_or(0, Vec::len);
    let copy_dir_p = project_dir(&copy);
    let seen_after = read(&copy_dir_p.join("seen_hashes.txt"))?;
    let notes_after = read(&copy.join("notifications.log"))?.lines().count();
    ensure(delivered == 0, || format!("refresh delivered {delivered}"))?;
    ensure(notes_after == notes_before, || format!("notifications grew to {notes_after}"))?;
    ensure(seen_after == seen_before, || "seen set changed without a delivery".into())?;
    ensure(run["notification_sent"] == false, || "run reports a notification".into())?;
    Ok(format!(
        "refresh delivered 0, notifications stayed at {notes_after}, seen set stayed at {} hashes",
        seen_after.lines().count()
    ))
}

fn copy_dir(from: &Path, to: &Path) -> Result<(), String> {
    std::fs::create_dir_all(to).map_err(err)?;
    for entry in std::fs::read_dir(from).map_err(err)? {
        let entry = entry.map_err(err)?;
        let target = to.join(entry.file_name());
        if entry.file_type().map_err(err)?.is_dir() {
            copy_dir(&entry.path(), &target)?;
        } else {
            std::fs::copy(entry.path(), &target).map_err(err)?;
        }
    }
    Ok(())
}

/// Scans every delivered suggestion for bracketed author-year labels and
/// checks each against the label table of the answer it came from.
fn label_closure(data: &Path) -> Result<(usize, usize, Vec<String>), String> {
    let label = Regex::new(r"\[([^\[\]]+?,\s*\d{4}[a-z]?)\]").unwrap();
    let dir = project_dir(data);
    let (mut suggestions, mut labels) = (0, 0);
    let mut violations = Vec::new();
    for s in json_lines(&dir.join("suggestions.jsonl"))? {
        suggestions += 1;
        let qid = s["question_id"].as_str().ok_or("suggestion without question")?;
        let answer_ref = s["answer_ref"].as_str().ok_or("suggestion without answer_ref")?;
        let answers = json_lines(&dir.join("answers").join(format!("{qid}.jsonl")))?;
        let answer = answers
            .iter()
            .find(|a| a["answer_ref"] == answer_ref)
            .ok_or_else(|| format!("{answer_ref} not in the answer log"))?;
        let table = answer["citation_labels"].as_object().ok_or("answer without label table")?;
        let mut cited: Vec<String> = ["title", "text", "info"]
            .iter()
            .filter_map(|f| s[*f].as_str())
            .flat_map(|t| label.captures_iter(t).map(|c| c[1].to_owned()).collect::<Vec<_>>())
            .collect();
        cited.extend(
            s["papers"]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(|p| p["label"].as_str().map(str::to_owned)),
        );
        for l in cited {
            labels += 1;
            if !table.contains_key(&l) {
                violations.push(format!("{}: {l}", s["suggestion_id"]));
            }
        }
    }
    Ok((suggestions, labels, violations))
}

fn criterion_4(ctx: &Ctx) -> Check {
    let mut suggestions = 0;
    let mut labels = 0;
    let mut violations = Vec::new();
    for data in [ctx.first.path(), ctx.tracking.path()] {
        let (s, l, v) = label_closure(data)?;
        suggestions += s;
        labels += l;
        violations.extend(v);
    }
    ensure(labels > 0, || "no citation labels found to check".into())?;
    ensure(violations.is_empty(), || format!("labels outside their answer table: {violations:?}"))?;
    Ok(format!("{labels} labels across {suggestions} suggestions, 0 outside their answer table"))
}

fn scheduled_runs(engine: &Engine, id: &str) -> Result<usize, String> {
    Ok(engine
        .runs(id)
        .map_err(err)?
        .iter()
        .filter(|r| r.trigger == RunTrigger::Scheduled)
        .count())
}

fn criterion_5() -> Check {
    let h = Harness::new();
    let t0 = frozen_now();
    h.project_with("edited", DOC_REV1, UpdateFrequency::Weekly);
    h.project_with("never", DOC_REV1, UpdateFrequency::Never);
    h.project_with("unchanged", DOC_REV1, UpdateFrequency::Weekly);
    for id in ["edited", "never", "unchanged"] {
        h.engine.run_update(id, RunTrigger::Manual, None).map_err(err)?;
    }
    let edit_days = [3, 10, 17, 24];
    let doc = h.project_doc("edited");
    for hour in 1..=28 * 24 {
        let now = t0 + Span::hours(hour);
        h.clock.set(now);
        if hour % 24 == 0 && edit_days.contains(&(hour / 24)) {
            let mut text = read(&doc)?;
            text.push_str(&format!(
                "\n## Week {} notes\n\nDoes the day {} ablation change the picture?\n",
                hour / 24 / 7 + 1,
                hour / 24
            ));
            std::fs::write(&doc, text).map_err(err)?;
        }
        for r in litscout::scheduler::tick(&h.engine) {
            r.map_err(err)?;
        }
    }
    let edited = scheduled_runs(&h.engine, "edited")?;
    let never = scheduled_runs(&h.engine, "never")?;
    let unchanged = scheduled_runs(&h.engine, "unchanged")?;
    ensure((edited, never, unchanged) == (4, 0, 0), || {
        format!("scheduled runs: weekly+edits {edited}, never {never}, unchanged {unchanged}; want 4, 0, 0")
    })?;
    Ok("28 simulated days: weekly with edits 4 runs, never 0, unchanged 0".into())
}

fn criterion_6(ctx: &Ctx) -> Check {
    let root = fixtures_dir();
    let gateway = replay_gateway(&root, None).map_err(err)?;
    let identical: DiffCase = load_json(&root.join("diff/identical.json")).map_err(err)?;
    let injected: DiffCase = load_json(&root.join("diff/injected.json")).map_err(err)?;
    let same = diff_answers(&gateway, &identical.question, &identical.project_state, &identical.old, &identical.new);
    ensure(!same.has_meaningful_diff && same.suggestions.is_empty(), || {
        format!("identical answers: meaningful={} with {} suggestions", same.has_meaningful_diff, same.suggestions.len())
    })?;
    let new = diff_answers(&gateway, &injected.question, &injected.project_state, &injected.old, &injected.new);
    ensure(new.has_meaningful_diff && !new.suggestions.is_empty(), || {
        format!("injected finding: meaningful={} with {} suggestions", new.has_meaningful_diff, new.suggestions.len())
    })?;

    let dir = project_dir(ctx.tracking.path());
    let runs = std::fs::read_dir(dir.join("runs")).map_err(err)?.count();
    let last: Value = serde_json::from_str(&read(&dir.join(format!("runs/run-{runs:04}.json")))?).map_err(err)?;
    let meaningful = last["diff_results"]
        .as_array()
        .into_iter()
        .flatten()
        .any(|d| d["has_meaningful_diff"] == true);
    ensure(meaningful, || "tracking run recorded no meaningful diff".into())?;
    let run_id = last["run_id"].as_str().unwrap_or_default();
    let diffs: Vec<Value> = json_lines(&dir.join("suggestions.jsonl"))?
        .into_iter()
        .filter(|s| s["run_id"] == run_id && s["kind"] == "diff")
        .collect();
    ensure(!diffs.is_empty(), || "no diff suggestion delivered past dedup".into())?;
    let anchored = diffs.iter().filter(|s| !s["anchor"].is_null()).count();
    ensure(anchored > 0, || "no delivered diff suggestion carries a verified anchor".into())?;
    Ok(format!(
        "identical: no diff; injected: {} suggestion(s); tracking run delivered {} diff suggestion(s), {anchored} anchored",
        new.suggestions.len(),
        diffs.len()
    ))
}

fn criterion_7() -> Check {
    let cases: Vec<RankingCase> = load_json(&fixtures_dir().join("ranking/cases.json")).map_err(err)?;
    let adversarial = cases.iter().filter(|c| c.adversarial).count();
    ensure(cases.len() == 50 && adversarial == 10, || {
        format!("{} cases, {adversarial} adversarial; want 50 and 10", cases.len())
    })?;
    let mut fallbacks = 0;
    for c in &cases {
        let outcome = catch_unwind(AssertUnwindSafe(|| match c.kind {
            RankingKind::Questions => {
                let candidates: Vec<CandidateQuestion> = c
                    .inputs
                    .iter()
                    .map(|i| CandidateQuestion {
                        question: i.title.clone(),
                        explanation: i.text.clone(),
                    })
                    .collect();
                let s = parse_question_ranking(&c.raw, &candidates, c.k);
                (s.indices, s.fell_back)
            }
            RankingKind::Recommendations => {
                let batch: Vec<SuggestionDraft> = c
                    .inputs
                    .iter()
                    .map(|i| SuggestionDraft {
                        title: i.title.clone(),
                        text: i.text.clone(),
                        papers: Vec::new(),
                        info: String::new(),
                    })
                    .collect();
                let r = parse_recommendation_ranking(&c.raw, &batch);
                (r.order, r.fell_back)
            }
        }));
        let (order, fell_back) = outcome.map_err(|_| format!("{}: parser panicked", c.name))?;
        let distinct: BTreeSet<usize> = order.iter().copied().collect();
        ensure(distinct.len() == order.len() && order.iter().all(|&i| i < c.inputs.len()), || {
            format!("{}: output {order:?} is not a subset of the inputs", c.name)
        })?;
        ensure(order == c.expected, || format!("{}: got {order:?}, want {:?}", c.name, c.expected))?;
        ensure(fell_back == c.expect_fallback, || {
            format!("{}: fallback {fell_back}, want {}", c.name, c.expect_fallback)
        })?;
        fallbacks += usize::from(fell_back);
    }
    Ok(format!("50/50 outputs match their expected subset order; {fallbacks} fallbacks engaged as scripted"))
}

fn criterion_8() -> Check {
    let dir = fixtures_dir().join("generation");
    let manifest: Vec<GenerationCase> = load_json(&dir.join("manifest.json")).map_err(err)?;
    ensure(manifest.len() == 20, || format!("{} generation fixtures", manifest.len()))?;
    let (mut accepted, mut rejected) = (0, 0);
    for case in &manifest {
        let raw = read(&dir.join(&case.file))?;
        let parsed = catch_unwind(AssertUnwindSafe(|| parse_generation_output(&raw, "q")))
            .map_err(|_| format!("{}: parser panicked", case.file))?;
        match (case.outcome, parsed) {
            (ParseOutcome::Accept, Ok(result)) => {
                let n = result.suggestions.len();
                let bare = result.suggestions.iter().filter(|s| s.papers.is_empty()).count();
                ensure(n == case.suggestions, || format!("{}: {n} suggestions, want {}", case.file, case.suggestions))?;
                ensure(bare == case.without_papers, || {
                    format!("{}: {bare} without papers, want {}", case.file, case.without_papers)
                })?;
                if !case.lookup_flags.is_empty() {
                    let flags: Vec<Vec<bool>> = result
                        .suggestions
                        .iter()
                        .map(|s| s.papers.iter().map(|p| p.to_lookup).collect())
                        .collect();
                    ensure(flags == case.lookup_flags, || format!("{}: lookup flags {flags:?}", case.file))?;
                }
                accepted += 1;
            }
            (ParseOutcome::Reject, Err(_)) => rejected += 1,
            (want, got) => return Err(format!("{}: want {want:?}, got {got:?}", case.file)),
        }
    }
    Ok(format!("{accepted} accepted and {rejected} rejected as documented, no panics"))
}

fn jaccard(a: &[String], b: &[String]) -> f64 {
    let a: BTreeSet<String> = a.iter().map(|q| normalize_text(q)).collect();
    let b: BTreeSet<String> = b.iter().map(|q| normalize_text(q)).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

fn criterion_9() -> Check {
    let today = frozen_now().format("%Y-%m-%d").to_string();
    let p1 = analysis_request(DOC_REV1, &today, None).map_err(err)?.render();
    let p2 = analysis_request(DOC_REV2, &today, None).map_err(err)?.render();
    ensure(p1 != p2, || "analysis prompts for the two revisions are identical".into())?;
    let gateway = replay_gateway(&fixtures_dir(), None).map_err(err)?;
    let q1 = revision_questions(&gateway, DOC_REV1, 1).map_err(err)?;
    let q2 = revision_questions(&gateway, DOC_REV2, 2).map_err(err)?;
    let j = jaccard(&q1, &q2);
    ensure(j < 0.8, || format!("question-set Jaccard {j:.3} is not below 0.8"))?;
    Ok(format!(
        "prompts differ; {} vs {} selected questions, Jaccard {j:.3} (recorded synthetic transcript pair)",
        q1.len(),
        q2.len()
    ))
}

fn tracking_scenario() -> Result<tempfile::TempDir, String> {
    let root = fixtures_dir();
    let data = tempfile::tempdir().map_err(err)?;
    let engine = fixture_engine(&root, data.path(), replay_gateway(&root, None).map_err(err)?).map_err(err)?;
    engine.run_update(FIXTURE_PROJECT_ID, RunTrigger::Manual, None).map_err(err)?;
    let top = top_question(&engine).map_err(err)?;
    engine.set_tracked(&top.question_id, true).map_err(err)?;
    drop(engine);
    let later = replay_gateway(&root, Some(&root.join(TRACKING_DIR))).map_err(err)?;
    let engine = fixture_engine(&root, data.path(), later).map_err(err)?;
    engine.run_update(FIXTURE_PROJECT_ID, RunTrigger::Manual, None).map_err(err)?;
    Ok(data)
}

fn setup() -> Result<Ctx, String> {
    Ok(Ctx {
        first: tempfile::tempdir().map_err(err)?,
        tracking: tracking_scenario()?,
    })
}

fn main() -> ExitCode {
    let ctx = match setup() {
        Ok(c) => c,
        Err(e) => {
            println!("setup FAIL: {e}");
            return ExitCode::FAILURE;
        }
    };
    // Criterion 1 must run first: 2-4 read the data dir it fills.
    let checks: Vec<(u8, &str, CheckFn)> = vec![
        (1, "deterministic end-to-end", Box::new(|| criterion_1(&ctx))),
        (2, "anchor integrity", Box::new(|| criterion_2(&ctx))),
        (3, "non-redundancy", Box::new(|| criterion_3(&ctx))),
        (4, "label closure", Box::new(|| criterion_4(&ctx))),
        (5, "scheduler", Box::new(criterion_5)),
        (6, "diff tracking", Box::new(|| criterion_6(&ctx))),
        (7, "ranking safety", Box::new(criterion_7)),
        (8, "parser robustness", Box::new(criterion_8)),
        (9, "version sensitivity", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (n, name, check) in checks {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {n} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
