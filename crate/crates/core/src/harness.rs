//! Study grid orchestration: retrieval, prompting, sampling, reranking and
//! scoring, repeated and averaged per configuration cell.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_corpus, Corpus, CorpusEntry, Intent, Split};
use crate::error::{Error, Result};
use crate::llm::{build_backend, BackendSpec, CandidateComment, CompletionBackend, SamplingParams};
use crate::metrics::{aggregate, score_pair, MetricScores};
use crate::prompt::{
    build_prompt, Demonstration, PromptSpec, RenderedPrompt, DEFAULT_WINDOW_LIMIT,
};
use crate::rerank::{rerank_with, RankedCandidate, RerankStrategy};
use crate::retrieval::{Embedder, EmbedderSpec, Retriever, Strategy};

/// Reranking choice for a cell; `None` keeps the first sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RerankMode {
    None,
    TokenRerank,
    SemanticRerank,
}

impl RerankMode {
    pub fn strategy(self) -> Option<RerankStrategy> {
        match self {
            RerankMode::None => None,
            RerankMode::TokenRerank => Some(RerankStrategy::TokenRerank),
            RerankMode::SemanticRerank => Some(RerankStrategy::SemanticRerank),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RerankMode::None => "none",
            RerankMode::TokenRerank => "token-rerank",
            RerankMode::SemanticRerank => "semantic-rerank",
        }
    }
}

impl fmt::Display for RerankMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RerankMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            RerankMode::None,
            RerankMode::TokenRerank,
            RerankMode::SemanticRerank,
        ]
        .into_iter()
        .find(|m| m.label() == s)
        .ok_or_else(|| Error::Config(format!("unknown rerank mode `{s}`")))
    }
}

fn default_repetitions() -> usize {
    1
}

fn default_parallelism() -> usize {
    1
}

fn default_window() -> usize {
    DEFAULT_WINDOW_LIMIT
}

fn default_language() -> String {
    "Java".into()
}

fn default_rerank() -> Vec<RerankMode> {
    vec![RerankMode::None]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    pub intents: Vec<Intent>,
    pub shots: Vec<usize>,
    pub selection: Vec<Strategy>,
    #[serde(default = "default_rerank")]
    pub rerank: Vec<RerankMode>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    pub backend: BackendSpec,
    #[serde(default)]
    pub embedder: Option<EmbedderSpec>,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default)]
    pub max_test_examples: Option<usize>,
    /// Cells evaluated concurrently.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Drop pool entries whose code is byte-identical to the query.
    #[serde(default)]
    pub exclude_exact_duplicates: bool,
    #[serde(default = "default_window")]
    pub window_limit: usize,
    #[serde(default = "default_language")]
    pub language_name: String,
}

impl ExperimentConfig {
    /// Reads a TOML or JSON config; relative corpus paths resolve against
    /// the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
            }
            _ => toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?,
        };
        if let Some(dir) = path.parent() {
            for p in [&mut config.train, &mut config.test] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
            if let BackendSpec::EchoNearest {
                corpus: Some(p), ..
            } = &mut config.backend
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.intents.is_empty()
            || self.shots.is_empty()
            || self.selection.is_empty()
            || self.rerank.is_empty()
        {
            return bad("intents, shots, selection and rerank must be non-empty");
        }
        if let Some(i) = self.intents.iter().find(|i| !i.is_target()) {
            return Err(Error::ExcludedIntent(*i));
        }
        if self.shots.iter().all(|&s| s == 0)
            && self.selection.iter().any(|&s| s != Strategy::Random)
        {
            return bad("zero-shot runs only support random selection");
        }
        let semantic = self.selection.contains(&Strategy::Semantic)
            || self.rerank.contains(&RerankMode::SemanticRerank);
        if semantic && self.embedder.is_none() {
            return bad("semantic selection or reranking requires an embedder");
        }
        if let Some(e) = &self.embedder {
            e.validate()?;
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1");
        }
        if self.window_limit == 0 {
            return bad("window_limit must be positive");
        }
        self.sampling.validate()
    }

    /// Cartesian product of the grid. Zero-shot cells ignore selection, so
    /// they appear once per (intent, rerank) labeled `random`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &intent in &self.intents {
            for &shots in &self.shots {
                for &selection in &self.selection {
                    let selection = if shots == 0 {
                        Strategy::Random
                    } else {
                        selection
                    };
                    for &rerank in &self.rerank {
                        let cell = Cell {
                            intent,
                            shots,
                            selection,
                            rerank,
                        };
                        if !cells.contains(&cell) {
                            cells.push(cell);
                        }
                    }
                }
            }
        }
        cells.sort();
        cells
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub intent: Intent,
    pub shots: usize,
    pub selection: Strategy,
    pub rerank: RerankMode,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}-shot/{}/{}",
            self.intent, self.shots, self.selection, self.rerank
        )
    }
}

/// One result line. Summary rows carry `repetition: None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub intent: Intent,
    pub shots: usize,
    pub selection: Strategy,
    pub rerank: RerankMode,
    pub repetition: Option<usize>,
    pub bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub n_examples: usize,
}

impl ResultRow {
    pub fn cell(&self) -> Cell {
        Cell {
            intent: self.intent,
            shots: self.shots,
            selection: self.selection,
            rerank: self.rerank,
        }
    }

    pub fn scores(&self) -> MetricScores {
        MetricScores {
            bleu: self.bleu,
            rouge_l: self.rouge_l,
            meteor: self.meteor,
        }
    }

    fn new(cell: Cell, repetition: Option<usize>, scores: MetricScores, n_examples: usize) -> Self {
        ResultRow {
            intent: cell.intent,
            shots: cell.shots,
            selection: cell.selection,
            rerank: cell.rerank,
            repetition,
            bleu: scores.bleu,
            rouge_l: scores.rouge_l,
            meteor: scores.meteor,
            n_examples,
        }
    }

    fn sort_key(&self) -> (Cell, Option<usize>) {
        (self.cell(), self.repetition)
    }
}

/// Everything needed to generate a comment for one query code.
pub struct GenerationRequest<'a> {
    pub intent: Intent,
    pub query_code: &'a str,
    pub shots: usize,
    pub selection: Strategy,
    pub seed: u64,
    pub rerank: RerankMode,
    pub exclude_exact_duplicates: bool,
    pub window_limit: usize,
    pub language_name: &'a str,
}

#[derive(Clone, Debug, Serialize)]
pub struct Generation {
    pub prompt: String,
    pub shots_used: usize,
    /// Ids and intents of the demonstrations placed in the prompt, in
    /// prompt order.
    pub demonstrations: Vec<(String, Intent)>,
    pub candidates: Vec<CandidateComment>,
    pub reference: Option<String>,
    pub ranked: Option<Vec<RankedCandidate>>,
    pub pick: CandidateComment,
}

/// A rendered prompt plus the ids and intents of the demonstrations it kept,
/// in prompt order.
#[derive(Clone, Debug, Serialize)]
pub struct PreparedPrompt {
    pub prompt: RenderedPrompt,
    pub demonstrations: Vec<(String, Intent)>,
}

fn excludes<'r>(req: &'r GenerationRequest<'_>) -> impl Fn(&CorpusEntry) -> bool + 'r {
    move |e| req.exclude_exact_duplicates && e.code == req.query_code
}

/// Retrieval → prompt for a single query.
pub fn prepare_prompt(pool: &Retriever, req: &GenerationRequest<'_>) -> Result<PreparedPrompt> {
    let hits = pool.retrieve_excluding(
        req.query_code,
        req.shots,
        req.selection,
        Some(req.seed),
        excludes(req),
    )?;
    // Most similar sits last, next to the query.
    let ordered: Vec<&CorpusEntry> = hits.iter().rev().map(|h| &h.entry).collect();
    let spec = PromptSpec {
        intent: req.intent,
        language_name: req.language_name.to_string(),
        demonstrations: ordered
            .iter()
            .map(|e| Demonstration::new(&e.code, &e.comment))
            .collect(),
        query_code: req.query_code.to_string(),
        window_limit: req.window_limit,
    };
    let prompt = build_prompt(&spec)?;
    let kept = &ordered[ordered.len() - prompt.shots_used..];
    Ok(PreparedPrompt {
        demonstrations: kept.iter().map(|e| (e.id.clone(), e.intent)).collect(),
        prompt,
    })
}

/// Retrieval → prompt → sampling → optional rerank for a single query.
///
/// `pool` is the demonstration pool (already intent-filtered train entries).
pub fn generate(
    pool: &Retriever,
    backend: &dyn CompletionBackend,
    sampling: &SamplingParams,
    req: &GenerationRequest<'_>,
) -> Result<Generation> {
    let PreparedPrompt {
        prompt,
        demonstrations,
    } = prepare_prompt(pool, req)?;
    let candidates = backend.complete(&prompt, sampling)?;
    if candidates.is_empty() {
        return Err(Error::MalformedResponse {
            service: "backend",
            message: "no candidates".into(),
        });
    }
    let (reference, ranked, pick) = match req.rerank.strategy() {
        None => (None, None, candidates[0].clone()),
        Some(strategy) => {
            let top = pool.retrieve_excluding(
                req.query_code,
                1,
                strategy.default_reference(),
                None,
                excludes(req),
            )?;
            let reference = top.first().ok_or(Error::EmptyCorpus)?.entry.comment.clone();
            let embedder = pool.embedder().map(Arc::as_ref);
            let ranked = rerank_with(&candidates, &reference, strategy, embedder)?;
            let pick = ranked[0].candidate.clone();
            (Some(reference), Some(ranked), pick)
        }
    };
    Ok(Generation {
        shots_used: prompt.shots_used,
        prompt: prompt.text,
        demonstrations,
        candidates,
        reference,
        ranked,
        pick,
    })
}

/// Shared, read-only inputs for every cell of one intent.
pub struct IntentContext {
    pub intent: Intent,
    pub pool: Retriever,
    pub tests: Vec<CorpusEntry>,
}

pub struct RunSettings<'a> {
    pub backend: &'a BackendSpec,
    pub sampling: &'a SamplingParams,
    pub exclude_exact_duplicates: bool,
    pub window_limit: usize,
    pub language_name: &'a str,
}

impl<'a> RunSettings<'a> {
    pub fn from_config(config: &'a ExperimentConfig) -> Self {
        RunSettings {
            backend: &config.backend,
            sampling: &config.sampling,
            exclude_exact_duplicates: config.exclude_exact_duplicates,
            window_limit: config.window_limit,
            language_name: &config.language_name,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExampleTrace {
    pub entry_id: String,
    pub generation: Generation,
    pub scores: MetricScores,
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub row: ResultRow,
    pub examples: Vec<ExampleTrace>,
}

/// Per-example random-selection seed, derived from the repetition seed.
pub fn example_seed(repetition_seed: u64, example_index: usize) -> u64 {
    repetition_seed
        ^ (example_index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs one cell for one repetition. The backend is instantiated fresh, so
/// scripted backends start from the top of their script.
pub fn run_cell(
    ctx: &IntentContext,
    settings: &RunSettings<'_>,
    cell: Cell,
    repetition: usize,
    repetition_seed: u64,
) -> Result<CellOutcome> {
    if cell.intent != ctx.intent {
        return Err(Error::Config(format!(
            "cell {cell} run against {} context",
            ctx.intent
        )));
    }
    let backend = build_backend(settings.backend)?;
    let mut examples = Vec::with_capacity(ctx.tests.len());
    for (idx, entry) in ctx.tests.iter().enumerate() {
        let req = GenerationRequest {
            intent: cell.intent,
            query_code: &entry.code,
            shots: cell.shots,
            selection: cell.selection,
            seed: example_seed(repetition_seed, idx),
            rerank: cell.rerank,
            exclude_exact_duplicates: settings.exclude_exact_duplicates,
            window_limit: settings.window_limit,
            language_name: settings.language_name,
        };
        let generation = generate(&ctx.pool, backend.as_ref(), settings.sampling, &req)
            .map_err(|e| e.at_stage(&entry.id, "generate"))?;
        let scores = score_pair(&generation.pick.text, &entry.comment);
        examples.push(ExampleTrace {
            entry_id: entry.id.clone(),
            generation,
            scores,
        });
    }
    let report = aggregate(
        examples
            .iter()
            .map(|e| (e.entry_id.clone(), cell.intent, e.scores))
            .collect(),
    );
    if report.overall.is_none() {
        log::warn!("cell {cell}: no test entries");
    }
    let row = ResultRow::new(
        cell,
        Some(repetition),
        report.overall.unwrap_or_default(),
        examples.len(),
    );
    Ok(CellOutcome { row, examples })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellFailure {
    pub cell: Cell,
    pub repetition: usize,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

impl ExperimentOutcome {
    /// Per-repetition rows followed by summary rows.
    pub fn all_rows(&self) -> Vec<ResultRow> {
        self.rows.iter().chain(&self.summary).cloned().collect()
    }

    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Builds per-intent pools and test lists from loaded corpora.
pub fn prepare_contexts(
    config: &ExperimentConfig,
    train: &Corpus,
    test: &Corpus,
) -> Result<BTreeMap<Intent, IntentContext>> {
    let needs_embedder = config.selection.contains(&Strategy::Semantic)
        || config.rerank.contains(&RerankMode::SemanticRerank);
    let embedder = match (&config.embedder, needs_embedder) {
        (Some(spec), true) => Some(Arc::new(Embedder::from_spec(spec)?)),
        _ => None,
    };
    let mut contexts = BTreeMap::new();
    for &intent in &config.intents {
        let mut pool = Retriever::new(train.filter(intent, Split::Train));
        if let Some(e) = &embedder {
            pool = pool.with_embedder(e.clone())?;
        }
        let mut tests = test.filter(intent, Split::Test).entries;
        if let Some(cap) = config.max_test_examples {
            tests.truncate(cap);
        }
        contexts.insert(
            intent,
            IntentContext {
                intent,
                pool,
                tests,
            },
        );
    }
    Ok(contexts)
}

/// Runs every cell × repetition; repetition `r` uses seed `seed + r`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    if config.backend.is_remote() {
        crate::remote::ensure_network_allowed("remote completion service")?;
    }
    let train = load_corpus(&config.train)?;
    let test = if config.test == config.train {
        train.clone()
    } else {
        load_corpus(&config.test)?
    };
    let contexts = prepare_contexts(config, &train, &test)?;
    run_prepared(config, &contexts)
}

pub fn run_prepared(
    config: &ExperimentConfig,
    contexts: &BTreeMap<Intent, IntentContext>,
) -> Result<ExperimentOutcome> {
    let settings = RunSettings::from_config(config);
    let tasks: Vec<(Cell, usize)> = config
        .cells()
        .into_iter()
        .flat_map(|c| (0..config.repetitions).map(move |r| (c, r)))
        .collect();
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<(Cell, usize, Result<CellOutcome>)> = threads.install(|| {
        tasks
            .par_iter()
            .map(|&(cell, rep)| {
                let ctx = &contexts[&cell.intent];
                let seed = config.seed.wrapping_add(rep as u64);
                (cell, rep, run_cell(ctx, &settings, cell, rep, seed))
            })
            .collect()
    });

    let mut outcome = ExperimentOutcome::default();
    for (cell, repetition, result) in results {
        match result {
            Ok(o) => outcome.rows.push(o.row),
            Err(e) => {
                log::error!("cell {cell} repetition {repetition} failed: {e}");
                outcome.failures.push(CellFailure {
                    cell,
                    repetition,
                    error: e.to_string(),
                });
            }
        }
    }
    outcome.rows.sort_by_key(ResultRow::sort_key);
    outcome.summary = summarize(&outcome.rows);
    Ok(outcome)
}

/// Mean over repetitions for each cell.
pub fn summarize(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut grouped: BTreeMap<Cell, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.repetition.is_some()) {
        grouped.entry(r.cell()).or_default().push(r);
    }
    grouped
        .into_iter()
        .map(|(cell, reps)| {
            let per_rep: Vec<MetricScores> = reps.iter().map(|r| r.scores()).collect();
            let scores = MetricScores::mean(&per_rep).unwrap_or_default();
            let n = reps.iter().map(|r| r.n_examples).sum::<usize>() / reps.len();
            ResultRow::new(cell, None, scores, n)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Csv,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(Error::Config(format!("unknown export format `{other}`"))),
        }
    }
}

pub const EXPORT_COLUMNS: [&str; 9] = [
    "intent",
    "shots",
    "selection",
    "rerank",
    "repetition",
    "bleu",
    "rouge_l",
    "meteor",
    "n_examples",
];

/// Renders rows. Floats use the shortest representation that parses back
/// to the same value; summary rows leave `repetition` empty (CSV) or null
/// (JSON).
pub fn render(rows: &[ResultRow], format: ExportFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Config("nothing to export".into()));
    }
    match format {
        ExportFormat::Json => {
            let mut s = serde_json::to_string_pretty(rows)
                .map_err(|e| Error::Serialization(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let ser = |e: csv::Error| Error::Serialization(e.to_string());
            w.write_record(EXPORT_COLUMNS).map_err(ser)?;
            for r in rows {
                w.write_record([
                    r.intent.label().to_string(),
                    r.shots.to_string(),
                    r.selection.label().to_string(),
                    r.rerank.label().to_string(),
                    r.repetition.map(|x| x.to_string()).unwrap_or_default(),
                    r.bleu.to_string(),
                    r.rouge_l.to_string(),
                    r.meteor.to_string(),
                    r.n_examples.to_string(),
                ])
                .map_err(ser)?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| Error::Serialization(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
        }
    }
}

pub fn export(rows: &[ResultRow], format: ExportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render(rows, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn import_json(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))
}
