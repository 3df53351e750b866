//! Source material for the fixture corpus: the project document in two
//! revisions, paper metadata, and the synthetic deep-research paper pool.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use litscout_core::gateway::PaperMetadata;

pub const FROZEN_NOW: &str = "2025-03-03T09:00:00Z";

pub fn frozen_now() -> DateTime<Utc> {
    FROZEN_NOW.parse().expect("valid timestamp")
}

pub const FIXTURE_PROJECT_ID: &str = "fixture";
pub const FIXTURE_PROJECT_NAME: &str = "Retrieval-augmented completion for low-resource languages";

/// Italic title in the document that no metadata record matches.
pub const UNRESOLVABLE_TITLE: &str = "Notes Toward a Grammar of Forgotten Build Systems";

pub const DOC_REV1: &str = r#"# Retrieval-augmented code completion for low-resource languages

Last updated: 2025-02-27

## Goal

We want a code completion model that stays useful for languages with little public training data, such as Nim, Zig and OCaml.
Our bet is that retrieval from a small curated corpus closes most of the gap to high-resource languages.
The starting point is the retrieval pipeline in [RepoFetch](https://arxiv.org/abs/2303.11201), which indexes repository context at the function level.
We also borrow the chunking scheme of *Syntax-Aware Chunking for Code Retrieval* because it respects scope boundaries.

## Related work

Several groups report that completion quality collapses outside the top ten languages, see [the cross-lingual benchmark](https://arxiv.org/abs/2305.04412).
Transfer from related languages helps in [PolyTransfer](https://arxiv.org/abs/2306.07719), but only when the grammars are close.
*Tokenizer Drift in Multilingual Code Models* argues that rare languages suffer from poor tokenization rather than missing data.
The retrieval side builds on dense passage retrieval adapted to code in [CodeDPR](https://arxiv.org/abs/2208.09013).
*Retrieval Noise Hurts Small Code Models* shows that irrelevant snippets can make completions worse than no retrieval at all.
For evaluation we follow the execution-based protocol of [ExecEval](https://arxiv.org/abs/2310.02277).
Synthetic data is an alternative route, and *Bootstrapping Code Corpora with Self-Instruct* generated usable training data for Lua.
Our reranker design follows [Rerank-then-Read](https://arxiv.org/abs/2211.05532).
Long-context models may make retrieval unnecessary, as suggested by [LongCoder Revisited](https://arxiv.org/abs/2401.03390).
*Repository-Level Prompt Generation Without Training* is the closest prompt-only baseline.
Documentation retrieval rather than code retrieval is explored in [DocPrompting for Rare APIs](https://arxiv.org/abs/2207.05987).
*Measuring Identifier Hallucination in Code LLMs* gives a metric we want to report.
We have also been pointed to *Notes Toward a Grammar of Forgotten Build Systems* but have not found it yet.
Compiler feedback as a training signal appears in [CompilerLoop](https://arxiv.org/abs/2402.01180).
*Small Models, Big Indexes: Scaling Retrieval for Code* studies index size versus model size.
A related tool is on [GitHub](https://github.com/example/rare-lang-complete) but has no write-up.
Contamination checks follow [Clean Splits for Code Benchmarks](https://arxiv.org/abs/2312.10051).

## Method sketch

We index 40k files per language and retrieve the top eight chunks for each completion request.
The reranker scores chunks with a cross-encoder trained on Python and applied zero-shot to the target languages.
Completions are generated by a 7B model with the retrieved chunks prepended to the prompt.

## Open questions

- Does retrieval help more for languages with unusual syntax than for those close to C?
- How large does the curated corpus need to be before gains saturate?
- Should the reranker be trained per language or shared across languages?
- Is execution-based evaluation feasible for languages without a package ecosystem?
- How do we detect and filter retrieval noise before it reaches the model?
- Would synthetic training data beat retrieval at the same compute budget?
- Does tokenizer quality explain most of the gap for rare languages?
- Can long-context models replace retrieval for repository-level completion?
- How should identifier hallucination be measured across languages?
- Is documentation retrieval more useful than code retrieval for rare APIs?
- What contamination risks exist when benchmarks are scraped from public repositories?
- Can compiler feedback be used to filter retrieved snippets at inference time?
- How does index size trade off against model size for low-resource languages?
- Which baselines are mandatory for a credible comparison?
- How do we measure latency overhead of retrieval in an editor setting?

## Next steps

Finish the Nim and Zig indexes by mid-March.
Run the first execution-based evaluation on the OCaml subset.
"#;

/// Second revision: the project moved from planning to first experiments and
/// most open questions changed.
pub const DOC_REV2: &str = r#"# Retrieval-augmented code completion for low-resource languages

Last updated: 2025-04-14

## Goal

We want a code completion model that stays useful for languages with little public training data, such as Nim, Zig and OCaml.
Our bet is that retrieval from a small curated corpus closes most of the gap to high-resource languages.
The starting point is the retrieval pipeline in [RepoFetch](https://arxiv.org/abs/2303.11201), which indexes repository context at the function level.

## Experiments

The Nim and Zig indexes are complete.
On the OCaml subset, retrieval improved pass@1 from 18.2 to 24.9 with the shared reranker.
Per-language rerankers gave no further gain on Zig and a small loss on Nim.
Retrieval noise was the main failure mode: in 31% of failing cases the top chunk came from an unrelated module.

## Open questions

- Why does the per-language reranker hurt on Nim?
- Can we filter chunks from unrelated modules using import graphs?
- Is the OCaml gain robust to a different split of the benchmark?
- How should identifier hallucination be measured across languages?
- Does retrieval help more for languages with unusual syntax than for those close to C?
- What statistical test is appropriate for pass@1 differences on small benchmarks?
- How do other papers report variance across random seeds for code completion?
- Would a smaller retrieval budget of four chunks reduce noise without losing recall?
- Can compiler errors on the first attempt be used to trigger a second retrieval round?
- What is the right ablation to separate reranker quality from index quality?
- How do we present per-language results compactly in a paper?
- Which venues accept negative results on per-language specialization?

## Next steps

Write up the OCaml results.
Repeat the evaluation with three seeds.
"#;

fn meta(paper_id: &str, title: &str, url: Option<&str>, abstract_text: &str, external: &[(&str, &str)]) -> PaperMetadata {
    PaperMetadata {
        paper_id: paper_id.to_owned(),
        title: title.to_owned(),
        abstract_text: Some(abstract_text.to_owned()),
        url: url.map(str::to_owned),
        external_ids: external
            .iter()
            .map(|(k, v)| ((*k).to_owned(), (*v).to_owned()))
            .collect::<BTreeMap<_, _>>(),
    }
}

fn arxiv(id: &str, title: &str, abstract_text: &str) -> PaperMetadata {
    meta(
        &format!("ARXIV:{id}"),
        title,
        Some(&format!("https://arxiv.org/abs/{id}")),
        abstract_text,
        &[("ArXiv", id)],
    )
}

fn by_title(hash: &str, title: &str, abstract_text: &str) -> PaperMetadata {
    meta(
        hash,
        title,
        Some(&format!("https://www.semanticscholar.org/paper/{hash}")),
        abstract_text,
        &[],
    )
}

/// The 17 papers of the fixture document that resolve.
pub fn catalog_metadata() -> Vec<PaperMetadata> {
    vec![
        arxiv("2303.11201", "RepoFetch: Function-Level Repository Retrieval for Code Completion", "Indexes repositories at function granularity and retrieves context for completion."),
        arxiv("2305.04412", "How Far Does Code Completion Transfer? A Cross-Lingual Benchmark", "Evaluates completion models on 40 languages and finds sharp drops outside the most common ones."),
        arxiv("2306.07719", "PolyTransfer: Cross-Language Transfer for Code Models", "Fine-tunes on related languages to improve completion for rare ones."),
        arxiv("2208.09013", "CodeDPR: Dense Passage Retrieval for Source Code", "Adapts dense retrieval to code search with contrastive training."),
        arxiv("2310.02277", "ExecEval: Execution-Based Evaluation of Code Generation", "Scores generated code by running unit tests in sandboxes."),
        arxiv("2211.05532", "Rerank-then-Read: Cross-Encoder Reranking for Code Generation", "Reranks retrieved snippets with a cross-encoder before generation."),
        arxiv("2401.03390", "LongCoder Revisited: Do Long Contexts Replace Retrieval?", "Compares long-context prompting with retrieval on repository-level tasks."),
        arxiv("2207.05987", "DocPrompting for Rare APIs", "Retrieves documentation instead of code to help models use unfamiliar APIs."),
        arxiv("2402.01180", "CompilerLoop: Learning from Compiler Feedback", "Uses compiler errors as a training signal for code models."),
        arxiv("2312.10051", "Clean Splits for Code Benchmarks", "Detects contamination between training corpora and code benchmarks."),
        by_title("a1b2c3d4e5f60718293a4b5c6d7e8f9012345601", "Syntax-Aware Chunking for Code Retrieval", "Chunks source files along syntactic scopes for retrieval."),
        by_title("a1b2c3d4e5f60718293a4b5c6d7e8f9012345602", "Tokenizer Drift in Multilingual Code Models", "Shows that tokenizers trained on common languages fragment rare-language code."),
        by_title("a1b2c3d4e5f60718293a4b5c6d7e8f9012345603", "Retrieval Noise Hurts Small Code Models", "Irrelevant retrieved snippets reduce accuracy of models under 10B parameters."),
        by_title("a1b2c3d4e5f60718293a4b5c6d7e8f9012345604", "Bootstrapping Code Corpora with Self-Instruct", "Generates synthetic training programs for a low-resource language."),
        by_title("a1b2c3d4e5f60718293a4b5c6d7e8f9012345605", "Repository-Level Prompt Generation Without Training", "Builds prompts from repository context without any fine-tuning."),
        by_title("a1b2c3d4e5f60718293a4b5c6d7e8f9012345606", "Measuring Identifier Hallucination in Code LLMs", "Defines a metric for identifiers that do not exist in scope."),
        by_title("a1b2c3d4e5f60718293a4b5c6d7e8f9012345607", "Small Models, Big Indexes: Scaling Retrieval for Code", "Trades index size against model size for retrieval-augmented completion."),
    ]
}

/// A paper the synthetic deep-research provider can cite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolPaper {
    pub label: String,
    pub title: String,
    pub url: String,
    pub finding: String,
}

const POOL: &[(&str, &str, &str)] = &[
    ("Abara et al., 2023", "Grammar-Constrained Decoding for Rare Languages", "constrained decoding removes most syntax errors"),
    ("Becker and Sun, 2024", "Import-Graph Filtering for Code Retrieval", "filtering by import graph halves irrelevant retrievals"),
    ("Chen et al., 2022", "Cross-Encoder Rerankers Transfer Across Languages", "rerankers trained on Python transfer to unseen languages"),
    ("Dimitrov et al., 2024", "Seed Variance in Code Benchmarks", "pass@1 varies by up to four points across seeds"),
    ("Estrada, 2023", "How Much Data Does a Language Need?", "gains saturate near 30k curated files"),
    ("Fujita et al., 2024", "Editor Latency Budgets for Code Assistants", "users abandon suggestions slower than 400 ms"),
    ("Gupta and Lee, 2023", "Synthetic Versus Retrieved Context", "retrieval beats synthetic data at equal compute for small models"),
    ("Haddad et al., 2024", "Tokenization Is Not the Bottleneck", "better tokenizers recover only a third of the gap"),
    ("Ivanova, 2022", "Benchmarks Without Package Managers", "execution harnesses can be built from standalone test files"),
    ("Jensen et al., 2024", "Contamination in Scraped Code Benchmarks", "one in six scraped tasks appears in training data"),
    ("Kowalski et al., 2023", "Documentation Beats Code for Unfamiliar APIs", "doc retrieval helps most when APIs are rare"),
    ("Liang et al., 2024", "Compiler-Guided Retrieval Refinement", "a second retrieval round after a compile error fixes a quarter of failures"),
    ("Mensah et al., 2023", "Identifier Hallucination Across Languages", "hallucinated identifiers are three times more common in rare languages"),
    ("Novak and Ortiz, 2024", "Per-Language Versus Shared Rerankers", "shared rerankers win when per-language data is under 5k pairs"),
    ("Okafor et al., 2023", "Syntax Distance and Transfer in Code Models", "transfer gains shrink with syntactic distance"),
    ("Park et al., 2024", "Long Context Is Not Free", "long-context prompting costs five times more than retrieval"),
    ("Quinn et al., 2022", "Baselines for Retrieval-Augmented Completion", "prompt-only and BM25 baselines are still competitive"),
    ("Rossi et al., 2024", "Statistical Testing for Small Code Benchmarks", "paired bootstrap is preferred over t-tests"),
    ("Sato et al., 2023", "Chunk Budgets in Retrieval-Augmented Generation", "four chunks match eight in recall with less noise"),
    ("Torres et al., 2024", "Negative Results in Code Intelligence", "workshop venues accept well-documented negative results"),
    ("Umar et al., 2023", "Ablating Retrieval Pipelines", "index quality explains more variance than reranker quality"),
    ("Varga et al., 2024", "Reporting Multilingual Results Compactly", "small-multiples tables are preferred by reviewers"),
    ("Wei et al., 2023", "Noise-Aware Training for Retrieval-Augmented Code Models", "training with noisy retrievals improves robustness"),
    ("Xu et al., 2024", "Robustness of Gains to Benchmark Splits", "a third of reported gains vanish on resplits"),
];

pub fn research_pool() -> Vec<PoolPaper> {
    POOL.iter()
        .enumerate()
        .map(|(i, (label, title, finding))| PoolPaper {
            label: (*label).to_owned(),
            title: (*title).to_owned(),
            url: format!("https://arxiv.org/abs/2409.{:05}", 10001 + i),
            finding: (*finding).to_owned(),
        })
        .collect()
}

/// Paper added to the tracked question's answer between two runs.
pub fn injected_finding() -> PoolPaper {
    PoolPaper {
        label: "Yilmaz et al., 2025".into(),
        title: "Retrieval Helps Least Where Syntax Is Most Familiar".into(),
        url: "https://arxiv.org/abs/2502.01234".into(),
        finding: "retrieval gains are twice as large for languages far from C syntax".into(),
    }
}
