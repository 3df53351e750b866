//! The on-disk fixture corpus: file formats, loaders, and the authoring
//! routine that regenerates everything under `fixtures/`.
//!
//! Transcripts and deep-research answers are recorded by running the real
//! pipeline against the synthetic providers with recording wrappers, so a
//! strict replay of the same steps finds every request it makes.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use litscout_core::analysis::{self, ProjectStateAssessment, QuestionStatus};
use litscout_core::anchoring::AnchorRejection;
use litscout_core::clock::{Clock, ManualClock};
use litscout_core::config::Config;
use litscout_core::document::segment_sentences;
use litscout_core::engine::{Engine, EngineSettings};
use litscout_core::gateway::{
    DeepResearchAnswer, DeepResearchProvider, FixtureMetadata, Gateway, LlmProvider, RecordingDeepResearch,
    RecordingLlm, ReplayDeepResearch, ReplayLlm,
};
use litscout_core::notify::FileSink;
use litscout_core::store::{self, DataLayout};
use litscout_core::tracking::{diff_answers, RunTrigger};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::corpus::{catalog_metadata, frozen_now, injected_finding, DOC_REV1, DOC_REV2, FIXTURE_PROJECT_ID};
use crate::synthetic::{synthetic_answer, with_finding, ScriptedResearch, SyntheticLlm, SyntheticResearch};

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// `fixtures/` at the workspace root.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub const TRACKING_DIR: &str = "tracking";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseOutcome {
    Accept,
    Reject,
}

/// One generation-parser fixture and its documented outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationCase {
    pub file: String,
    pub outcome: ParseOutcome,
    /// Well-formed suggestions the parser must return.
    pub suggestions: usize,
    /// How many of them come back with no papers.
    pub without_papers: usize,
    /// Suggestions flagged for lookup, in order.
    #[serde(default)]
    pub lookup_flags: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingKind {
    Questions,
    Recommendations,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingInput {
    /// Question text, or a suggestion title.
    pub title: String,
    /// Question explanation, or a suggestion text.
    pub text: String,
}

/// A scripted ranking completion with the outcome it must produce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingCase {
    pub name: String,
    pub kind: RankingKind,
    pub adversarial: bool,
    pub inputs: Vec<RankingInput>,
    /// Selection size for question rankings.
    pub k: usize,
    pub raw: String,
    pub expected: Vec<usize>,
    pub expect_fallback: bool,
}

/// A model-proposed anchor that verification must reject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptedAnchor {
    pub name: String,
    pub sentence_index: i64,
    pub quote: String,
    pub reasoning: String,
    pub location: String,
    pub expect: AnchorRejection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffCase {
    pub question: String,
    pub project_state: String,
    pub old: DeepResearchAnswer,
    pub new: DeepResearchAnswer,
    pub expect_diff: bool,
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, BoxError> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?)
}

/// Gateway over strict replay of the corpus. `research_root` selects the
/// deep-research answer set (defaults to `root`).
pub fn replay_gateway(root: &Path, research_root: Option<&Path>) -> Result<Gateway, BoxError> {
    let metadata = FixtureMetadata::load(root)?;
    Ok(Gateway::new(
        Arc::new(ReplayLlm::new(root)),
        Arc::new(ReplayDeepResearch::new(research_root.unwrap_or(root))),
        Arc::new(metadata),
    ))
}

pub fn recording_gateway(
    root: &Path,
    research_root: &Path,
    research: Arc<dyn DeepResearchProvider>,
) -> Result<Gateway, BoxError> {
    let live: Arc<dyn LlmProvider> = Arc::new(SyntheticLlm);
    Ok(Gateway::new(
        Arc::new(RecordingLlm::new(root, live)),
        Arc::new(RecordingDeepResearch::new(research_root, research)),
        Arc::new(FixtureMetadata::load(root)?),
    ))
}

/// Engine on `data_dir` as the fixture config wires it, with `gateway`.
pub fn fixture_engine(root: &Path, data_dir: &Path, gateway: Gateway) -> Result<Engine, BoxError> {
    let config = Config::load(&root.join("config.toml"))?;
    let clock: Arc<dyn Clock> = Arc::new(ManualClock::new(config.frozen_clock.unwrap_or_else(frozen_now)));
    let engine = Engine::new(DataLayout::new(data_dir), gateway, clock)
        .with_settings(EngineSettings::from_config(&config))
        .with_sink(Some(Arc::new(FileSink::new(data_dir.join("notifications.log")))));
    for seed in &config.seed_projects {
        engine.ensure_seed(seed)?;
    }
    Ok(engine)
}

pub const CONFIG_TOML: &str = r#"# Fixture deployment: strict replay of the recorded corpus, frozen clock.
data_dir = "../data"
fixtures_dir = "."
public_url = "http://127.0.0.1:8080"
questions_k = 12
suggestions_n = 12
frozen_clock = "2025-03-03T09:00:00Z"

[scheduler]
tick_seconds = 3600
worker_pool = 2

[providers]
mode = "replay"
parallelism = 4

[notifications]
sink = "file"

[[seed_projects]]
id = "fixture"
name = "Retrieval-augmented completion for low-resource languages"
source = "project/doc.md"
frequency = "weekly"
"#;

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), BoxError> {
    store::write_atomic(path, bytes.as_ref())?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BoxError> {
    write(path, store::to_json_bytes(value))
}

/// Regenerate the corpus under `root`. Returns a short report.
pub fn author(root: &Path) -> Result<Vec<String>, BoxError> {
    let mut report = Vec::new();
    for dir in ["transcripts", "deep_research", TRACKING_DIR, "diff", "generation", "ranking", "anchors", "revisions"] {
        let path = root.join(dir);
        if path.exists() {
            std::fs::remove_dir_all(&path)?;
        }
    }
    write(&root.join("config.toml"), CONFIG_TOML)?;
    write_json(&root.join("metadata.json"), &catalog_metadata())?;
    write(&root.join("project/doc.md"), DOC_REV1)?;
    write(&root.join("revisions/rev1.md"), DOC_REV1)?;
    write(&root.join("revisions/rev2.md"), DOC_REV2)?;
    let root = &root.canonicalize()?;

    // the default run, then a manual refresh on the unchanged document
    let scratch = tempfile::tempdir()?;
    let base = recording_gateway(root, root, Arc::new(SyntheticResearch))?;
    let engine = fixture_engine(root, scratch.path(), base)?;
    for _ in 0..2 {
        let run = engine.run_update(FIXTURE_PROJECT_ID, RunTrigger::Manual, None)?;
        report.push(format!(
            "{}: {:?}, {} questions, {} delivered",
            run.run_id,
            run.status,
            run.questions_issued.len(),
            run.suggestions_delivered.len()
        ));
    }

    // tracking: track the top question, then re-run with a new finding in its answer
    let scratch = tempfile::tempdir()?;
    let engine = fixture_engine(root, scratch.path(), recording_gateway(root, root, Arc::new(SyntheticResearch))?)?;
    engine.run_update(FIXTURE_PROJECT_ID, RunTrigger::Manual, None)?;
    let tracked = top_question(&engine)?;
    engine.set_tracked(&tracked.question_id, true)?;
    let scripted = ScriptedResearch::new();
    scripted.set_answer(&tracked.text, with_finding(&synthetic_answer(&tracked.text), &injected_finding()));
    let tracking_engine = fixture_engine(
        root,
        scratch.path(),
        recording_gateway(root, &root.join(TRACKING_DIR), Arc::new(scripted))?,
    )?;
    let run = tracking_engine.run_update(FIXTURE_PROJECT_ID, RunTrigger::Manual, None)?;
    report.push(format!(
        "tracking {}: {:?}, {} delivered, {} diff results",
        run.run_id,
        run.status,
        run.suggestions_delivered.len(),
        run.diff_results.len()
    ));

    // the same answers as standalone diff fixtures
    let answers = tracking_engine.answers(FIXTURE_PROJECT_ID, &tracked.question_id)?;
    let state = tracking_engine
        .state(FIXTURE_PROJECT_ID)?
        .map(|s| s.state_label)
        .unwrap_or_default();
    let injected = DiffCase {
        question: tracked.text.clone(),
        project_state: state.clone(),
        old: answers[0].clone(),
        new: answers[1].clone(),
        expect_diff: true,
    };
    let mut same = answers[0].clone();
    same.answer_ref = format!("{}#2", tracked.question_id);
    let identical = DiffCase {
        question: tracked.text.clone(),
        project_state: state,
        old: answers[0].clone(),
        new: same,
        expect_diff: false,
    };
    let recorder = recording_gateway(root, root, Arc::new(SyntheticResearch))?;
    for (name, case) in [("identical", &identical), ("injected", &injected)] {
        let result = diff_answers(&recorder, &case.question, &case.project_state, &case.old, &case.new);
        report.push(format!("diff {name}: meaningful={}", result.has_meaningful_diff));
        write_json(&root.join(format!("diff/{name}.json")), case)?;
    }

    // revision pair for the version-sensitivity check
    for (rev, text) in [(1, DOC_REV1), (2, DOC_REV2)] {
        let selected = revision_questions(&recorder, text, rev)?;
        report.push(format!("revision {rev}: {} questions selected", selected.len()));
    }

    let cases = generation_corpus();
    for (file, raw, _) in &cases {
        write(&root.join("generation").join(file), raw)?;
    }
    let manifest: Vec<GenerationCase> = cases.into_iter().map(|(_, _, c)| c).collect();
    write_json(&root.join("generation/manifest.json"), &manifest)?;
    report.push(format!("generation corpus: {} fixtures", manifest.len()));

    let ranking = ranking_cases(0x5eed_2025);
    write_json(&root.join("ranking/cases.json"), &ranking)?;
    report.push(format!(
        "ranking corpus: {} cases, {} adversarial",
        ranking.len(),
        ranking.iter().filter(|c| c.adversarial).count()
    ));

    let corrupted = corrupted_anchors(DOC_REV1);
    write_json(&root.join("anchors/corrupted.json"), &corrupted)?;
    report.push(format!("corrupted anchors: {}", corrupted.len()));
    Ok(report)
}

/// The question ranked first in the latest selection.
pub fn top_question(engine: &Engine) -> Result<analysis::ResearchQuestion, BoxError> {
    engine
        .questions(FIXTURE_PROJECT_ID)?
        .into_iter()
        .filter(|q| q.status == QuestionStatus::Answered)
        .min_by_key(|q| q.rank.unwrap_or(u32::MAX))
        .ok_or_else(|| "no answered question".into())
}

/// Assess a document revision and select its questions, as the pipeline
/// does for an unannotated document.
pub fn revision_questions(gateway: &Gateway, text: &str, revision: u64) -> Result<Vec<String>, BoxError> {
    let now = frozen_now();
    let today = now.format("%Y-%m-%d").to_string();
    let (assessment, candidates): (ProjectStateAssessment, _) =
        analysis::assess_project(gateway, text, &today, now, Some(revision), None)?;
    let selection = analysis::select_questions(gateway, text, &assessment, &candidates, analysis::DEFAULT_QUESTIONS_K)?;
    Ok(selection.indices.iter().map(|&i| candidates[i].question.clone()).collect())
}

fn case(file: &str, outcome: ParseOutcome, suggestions: usize, without_papers: usize, lookup: &[&[bool]]) -> GenerationCase {
    GenerationCase {
        file: file.to_owned(),
        outcome,
        suggestions,
        without_papers,
        lookup_flags: lookup.iter().map(|f| f.to_vec()).collect(),
    }
}

const SUGGESTION_A: &str = "<suggestion>\n<title>Add a BM25 baseline</title>\n<text>Report BM25 retrieval next to dense retrieval, following [Quinn et al., 2022].</text>\n<papers>\n<paper to_lookup=false>[Quinn et al., 2022]</paper>\n</papers>\n<info>Sparse baselines remain competitive.</info>\n</suggestion>\n";
const SUGGESTION_B: &str = "<suggestion>\n<title>Shrink the chunk budget</title>\n<text>Try four retrieved chunks instead of eight, as in [Sato et al., 2023].</text>\n<papers>\n<paper to_lookup=false>[Sato et al., 2023]</paper>\n</papers>\n<info>Recall stays flat while noise drops.</info>\n</suggestion>\n";

fn wrap(body: &str) -> String {
    format!("<output>\n<summary>\nTwo studies [Quinn et al., 2022] and [Sato et al., 2023] are relevant.\n</summary>\n<suggestions>\n{body}</suggestions>\n</output>\n")
}

/// The 20 generation-parser fixtures with their documented outcomes.
pub fn generation_corpus() -> Vec<(String, String, GenerationCase)> {
    use ParseOutcome::{Accept, Reject};
    let two = format!("{SUGGESTION_A}{SUGGESTION_B}");
    let raw: Vec<(&str, String, GenerationCase)> = vec![
        ("01_canonical.txt", wrap(&two), case("", Accept, 2, 0, &[&[false], &[false]])),
        (
            "02_scratchpad.txt",
            format!("<scratchpad>\nDraft: <title>not this</title> <suggestion> either\n</scratchpad>\n{}", wrap(&two)),
            case("", Accept, 2, 0, &[&[false], &[false]]),
        ),
        (
            "03_unclosed_scratchpad.txt",
            format!("<scratchpad>\nThinking about <summary> tags...\n{}", wrap(SUGGESTION_A)),
            case("", Accept, 1, 0, &[&[false]]),
        ),
        (
            "04_no_output_wrapper.txt",
            format!("<summary>\nShort summary [Quinn et al., 2022].\n</summary>\n<suggestions>\n{SUGGESTION_A}</suggestions>\n"),
            case("", Accept, 1, 0, &[&[false]]),
        ),
        ("05_missing_title_closer.txt", wrap(&SUGGESTION_A.replace("</title>", "")), case("", Accept, 1, 0, &[&[false]])),
        (
            "06_missing_suggestion_closer.txt",
            wrap(&format!("{}{SUGGESTION_B}", SUGGESTION_A.replace("</suggestion>\n", ""))),
            case("", Accept, 2, 0, &[&[false], &[false]]),
        ),
        (
            "07_missing_summary_closer.txt",
            wrap(&two).replace("</summary>", ""),
            case("", Accept, 2, 0, &[&[false], &[false]]),
        ),
        (
            "08_missing_output_closer.txt",
            wrap(&two).replace("</output>", ""),
            case("", Accept, 2, 0, &[&[false], &[false]]),
        ),
        (
            "09_empty_papers.txt",
            wrap(&format!(
                "{}{SUGGESTION_B}",
                SUGGESTION_A.replace("<paper to_lookup=false>[Quinn et al., 2022]</paper>\n", "")
            )),
            case("", Accept, 2, 1, &[&[], &[false]]),
        ),
        (
            "10_no_papers_block.txt",
            wrap("<suggestion>\n<title>Write up negative results</title>\n<text>Submit the per-language reranker result as a short paper.</text>\n<info>Workshops accept these.</info>\n</suggestion>\n"),
            case("", Accept, 1, 1, &[&[]]),
        ),
        (
            "11_lookup_suffix.txt",
            wrap(&SUGGESTION_A.replace(
                "</papers>",
                "<paper to_lookup=false>[Rossi et al., 2024] (to lookup - if applicable)</paper>\n</papers>",
            )),
            case("", Accept, 1, 0, &[&[false, true]]),
        ),
        (
            "12_quoted_lookup_attr.txt",
            wrap(&SUGGESTION_B.replace("to_lookup=false", "to_lookup=\"true\"")),
            case("", Accept, 1, 0, &[&[true]]),
        ),
        (
            "13_indented.txt",
            wrap(&two)
                .lines()
                .map(|l| format!("        {l}"))
                .collect::<Vec<_>>()
                .join("\n"),
            case("", Accept, 2, 0, &[&[false], &[false]]),
        ),
        ("14_fenced.txt", format!("Here you go:\n```xml\n{}```\n", wrap(&two)), case("", Accept, 2, 0, &[&[false], &[false]])),
        (
            "15_missing_summary.txt",
            format!("<output>\n<suggestions>\n{two}</suggestions>\n</output>\n"),
            case("", Reject, 0, 0, &[]),
        ),
        ("16_empty.txt", String::from("   \n"), case("", Reject, 0, 0, &[])),
        (
            "17_scratchpad_only.txt",
            String::from("<scratchpad>\nI will now write the suggestions.\n<summary>draft</summary>\n"),
            case("", Reject, 0, 0, &[]),
        ),
        (
            "18_one_untitled.txt",
            wrap(&format!("{}{SUGGESTION_B}", SUGGESTION_A.replace("<title>Add a BM25 baseline</title>\n", ""))),
            case("", Accept, 1, 0, &[&[false]]),
        ),
        (
            "19_no_text_anywhere.txt",
            wrap("<suggestion>\n<title>Only a title</title>\n<papers>\n<paper to_lookup=false>[Sato et al., 2023]</paper>\n</papers>\n</suggestion>\n<suggestion>\n<title>Another title</title>\n<text>   </text>\n</suggestion>\n"),
            case("", Reject, 0, 0, &[]),
        ),
        (
            "20_truncated.txt",
            format!(
                "<output>\n<summary>\nTwo studies are relevant.\n</summary>\n<suggestions>\n{SUGGESTION_A}<suggestion>\n<title>Shrink the chunk budget</title>\n<text>Try four retrieved chunks instead"
            ),
            case("", Accept, 2, 1, &[&[false], &[]]),
        ),
    ];
    raw.into_iter()
        .map(|(file, text, mut c)| {
            c.file = file.to_owned();
            (file.to_owned(), text, c)
        })
        .collect()
}

const QUESTIONS: &[&str] = &[
    "Does retrieval help more for languages with unusual syntax?",
    "How large must the curated corpus be before gains saturate?",
    "Should the reranker be trained per language?",
    "Is execution-based evaluation feasible without a package ecosystem?",
    "How can retrieval noise be filtered before generation?",
    "Would synthetic data beat retrieval at equal compute?",
    "Does tokenizer quality explain the gap for rare languages?",
    "Can long-context models replace retrieval?",
    "How should identifier hallucination be measured?",
    "Is documentation retrieval more useful than code retrieval?",
    "What contamination risks come from scraped benchmarks?",
    "Can compiler feedback filter retrieved snippets?",
    "How does index size trade off against model size?",
    "Which baselines are mandatory for a credible comparison?",
    "What latency does retrieval add in an editor?",
    "Which statistical test suits small benchmarks?",
];

const RECOMMENDATIONS: &[(&str, &str)] = &[
    ("Add a BM25 baseline", "Report sparse retrieval next to dense retrieval."),
    ("Shrink the chunk budget", "Try four chunks instead of eight."),
    ("Filter by import graph", "Drop chunks from modules the file never imports."),
    ("Report seed variance", "Repeat each evaluation with three seeds."),
    ("Use paired bootstrap", "Test pass@1 differences with a paired bootstrap."),
    ("Check contamination", "Scan the benchmark against the retrieval corpus."),
    ("Measure editor latency", "Time the full retrieval path on a laptop."),
    ("Try grammar-constrained decoding", "Constrain generation to the target grammar."),
    ("Share the reranker", "Train one reranker across all languages."),
    ("Retrieve documentation", "Index API docs alongside code."),
    ("Retry after compile errors", "Run a second retrieval round when compilation fails."),
    ("Compare long context", "Run a long-context baseline without retrieval."),
];

fn ordinal_line(rng: &mut StdRng, n: usize, body: &str) -> String {
    match rng.random_range(0..4) {
        0 => format!("{n}. {body}"),
        1 => format!("{n}. **{body}**"),
        2 => format!("{n}) {body}"),
        _ => format!("**{n}.** {body}"),
    }
}

fn question_inputs(rng: &mut StdRng, count: usize) -> Vec<RankingInput> {
    let mut pool: Vec<&str> = QUESTIONS.to_vec();
    pool.shuffle(rng);
    pool.into_iter()
        .take(count)
        .map(|q| RankingInput {
            title: q.to_owned(),
            text: "Listed as open in the document.".to_owned(),
        })
        .collect()
}

fn recommendation_inputs(rng: &mut StdRng, count: usize) -> Vec<RankingInput> {
    let mut pool: Vec<&(&str, &str)> = RECOMMENDATIONS.iter().collect();
    pool.shuffle(rng);
    pool.into_iter()
        .take(count)
        .map(|(t, x)| RankingInput {
            title: (*t).to_owned(),
            text: (*x).to_owned(),
        })
        .collect()
}

fn question_case(rng: &mut StdRng, i: usize) -> RankingCase {
    let count = rng.random_range(5..=QUESTIONS.len());
    let inputs = question_inputs(rng, count);
    let k = rng.random_range(3..=count.min(12));
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(rng);
    let listed = rng.random_range(k.min(count)..=count);
    order.truncate(listed);
    let mut raw = String::new();
    if rng.random_bool(0.5) {
        raw.push_str("<scratchpad>\nWeighing diversity against timeliness.\n</scratchpad>\n");
    }
    let mut expected = Vec::new();
    for (rank, &idx) in order.iter().enumerate() {
        raw.push_str(&ordinal_line(rng, rank + 1, &inputs[idx].title));
        raw.push('\n');
        if rng.random_bool(0.5) {
            raw.push_str("   Reason: it unblocks the next experiment.\n");
        }
        expected.push(idx);
    }
    // some cases repeat an entry; the repeat is ignored
    if i.is_multiple_of(3) {
        raw.push_str(&format!("{}. {}\n", order.len() + 1, inputs[order[0]].title));
    }
    expected.truncate(k);
    RankingCase {
        name: format!("questions_{i:02}"),
        kind: RankingKind::Questions,
        adversarial: false,
        inputs,
        k,
        raw,
        expected,
        expect_fallback: false,
    }
}

fn recommendation_case(rng: &mut StdRng, i: usize) -> RankingCase {
    let count = rng.random_range(4..=RECOMMENDATIONS.len());
    let inputs = recommendation_inputs(rng, count);
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(rng);
    let listed = rng.random_range(count.div_ceil(2)..=count);
    order.truncate(listed);
    let mut raw = String::new();
    for (rank, &idx) in order.iter().enumerate() {
        let item = &inputs[idx];
        let value = match rng.random_range(0..3) {
            0 => format!("{}: {}", item.title, item.text),
            1 => format!("**{}: {}**", item.title, item.text),
            _ => item.text.clone(),
        };
        raw.push_str(&format!("{}.\nRecommendation: {value}\nReasoning: fits the current stage.\n\n", rank + 1));
    }
    RankingCase {
        name: format!("recommendations_{i:02}"),
        kind: RankingKind::Recommendations,
        adversarial: false,
        inputs,
        k: count,
        raw,
        expected: order,
        expect_fallback: false,
    }
}

fn adversarial_cases(rng: &mut StdRng) -> Vec<RankingCase> {
    let mut out = Vec::new();
    let q = question_inputs(rng, 8);
    let q_fallback: Vec<usize> = (0..5).collect();
    let question_raws = [
        (
            "hallucinated",
            "1. What is the carbon cost of training code models?\n2. Are transformers Turing complete?\n3. Which GPU should we buy?\n".to_owned(),
        ),
        (
            "paraphrased",
            q.iter()
                .enumerate()
                .map(|(i, c)| format!("{}. Roughly: {}", i + 1, c.title.to_lowercase().replace(' ', "  -")))
                .collect::<Vec<_>>()
                .join("\n"),
        ),
        ("truncated", format!("1. {}", &q[0].title[..q[0].title.len() / 2])),
        ("empty", String::new()),
        (
            "prose",
            "I think the most important thing is to focus on retrieval quality and evaluation rigor.".to_owned(),
        ),
    ];
    for (name, raw) in question_raws {
        out.push(RankingCase {
            name: format!("adversarial_questions_{name}"),
            kind: RankingKind::Questions,
            adversarial: true,
            inputs: q.clone(),
            k: 5,
            raw,
            expected: q_fallback.clone(),
            expect_fallback: true,
        });
    }
    let r = recommendation_inputs(rng, 6);
    let rec = |v: &str| format!("Recommendation: {v}\nReasoning: important.\n\n");
    let rec_raws = [
        (
            "hallucinated",
            ["Buy more GPUs: scale up.", "Hire an annotator: label data.", "Switch to Rust: for speed."]
                .iter()
                .map(|v| rec(v))
                .collect::<String>(),
        ),
        (
            "paraphrased",
            r.iter()
                .map(|x| rec(&format!("{} (roughly: {})", x.title.to_uppercase(), x.text)))
                .collect::<String>(),
        ),
        ("truncated", format!("{}Recommendation: {}", rec(&format!("{}: {}", r[0].title, r[0].text)), &r[1].title[..4])),
        ("no_recommendation_lines", "Reasoning: all of these are good.\nReasoning: keep them all.\n".to_owned()),
        (
            "mostly_hallucinated",
            format!(
                "{}{}{}{}",
                rec(&format!("{}: {}", r[2].title, r[2].text)),
                rec("Publish a blog post: spread the word."),
                rec(&r[4].text),
                rec("Rewrite everything: from scratch.")
            ),
        ),
    ];
    for (name, raw) in rec_raws {
        out.push(RankingCase {
            name: format!("adversarial_recommendations_{name}"),
            kind: RankingKind::Recommendations,
            adversarial: true,
            inputs: r.clone(),
            k: r.len(),
            raw,
            expected: (0..r.len()).collect(),
            expect_fallback: true,
        });
    }
    out
}

/// 40 well-formed ranking transcripts and 10 adversarial ones.
pub fn ranking_cases(seed: u64) -> Vec<RankingCase> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut cases = Vec::new();
    for i in 0..20 {
        cases.push(question_case(&mut rng, i));
    }
    for i in 0..20 {
        cases.push(recommendation_case(&mut rng, i));
    }
    cases.extend(adversarial_cases(&mut rng));
    cases
}

/// Ten anchors against `doc` that must each be rejected.
pub fn corrupted_anchors(doc: &str) -> Vec<CorruptedAnchor> {
    let sentences = segment_sentences(doc);
    let body: Vec<usize> = sentences
        .iter()
        .filter(|s| !s.content.starts_with('#'))
        .map(|s| s.index)
        .collect();
    let at = |i: usize| sentences[body[i]].content.clone();
    let n = sentences.len() as i64;
    let mk = |name: &str, index: i64, quote: String, expect| CorruptedAnchor {
        name: name.to_owned(),
        sentence_index: index,
        quote,
        reasoning: "Relevant to the plan.".to_owned(),
        location: "Method sketch".to_owned(),
        expect,
    };
    use AnchorRejection::*;
    vec![
        mk("off_by_one", body[3] as i64 + 1, at(3), IndexTextMismatch),
        mk("swapped_index", body[1] as i64, at(6), IndexTextMismatch),
        mk("paraphrased", body[2] as i64, format!("Basically, {}", at(2).to_lowercase()), QuoteMismatch),
        mk("lowercased", body[4] as i64, at(4).to_lowercase(), QuoteMismatch),
        mk("truncated_quote", body[5] as i64, at(5)[..at(5).len() / 2].to_owned(), QuoteMismatch),
        mk("leading_space", body[0] as i64, format!(" {}", at(0)), QuoteMismatch),
        mk("merged_sentences", body[7] as i64, format!("{} {}", at(7), at(8)), QuoteMismatch),
        mk("out_of_range", n, at(1), IndexOutOfRange),
        mk("negative_index", -1, at(1), IndexOutOfRange),
        mk("far_out_of_range", n + 100, at(9), IndexOutOfRange),
    ]
}

/// Seeded helper exposed for tests that want reproducible shuffles.
pub fn seeded(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}
