use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use ccgen_core::harness::{self, GenerationRequest};
use ccgen_core::llm::BackendSpec;
use ccgen_core::prompt::DEFAULT_WINDOW_LIMIT;
use ccgen_core::retrieval::Embedder;
use ccgen_core::{
    load_corpus, score_pair, Corpus, EmbedderSpec, ExperimentConfig, ExportFormat, Intent,
    RerankMode, Retriever, SamplingParams, Split, Strategy,
};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

#[derive(Parser)]
#[command(
    name = "ccgen",
    version,
    about = "Intent-conditioned code comment generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus file and print a summary.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Rank corpus entries by similarity to a code snippet.
    Retrieve {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        code_file: PathBuf,
        #[arg(long, default_value = "token")]
        strategy: Strategy,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Only consider entries with this intent.
        #[arg(long)]
        intent: Option<Intent>,
        /// Only consider entries in this split.
        #[arg(long)]
        split: Option<Split>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Render the prompt for one query.
    Prompt {
        #[command(flatten)]
        query: QueryArgs,
    },
    /// Generate a comment for one query end to end.
    Generate {
        #[command(flatten)]
        query: QueryArgs,
        /// Backend spec (TOML or JSON). Defaults to echoing the nearest
        /// entry of --corpus.
        #[arg(long)]
        backend_config: Option<PathBuf>,
        #[arg(long, default_value = "none")]
        rerank: RerankMode,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 0.5)]
        temperature: f64,
    },
    /// Score candidate comments against corpus references.
    Evaluate {
        /// JSON lines with `id` and `comment`.
        #[arg(long)]
        candidates_file: PathBuf,
        /// Corpus file holding the reference comments.
        #[arg(long)]
        references_file: PathBuf,
    },
    /// Run an experiment grid and export the results.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "json")]
        format: ExportFormat,
    },
}

#[derive(Args)]
struct EmbedderArgs {
    /// Remote embedding service; the local hashed embedder is used otherwise.
    #[arg(long)]
    embed_endpoint: Option<String>,
    #[arg(long, default_value_t = 512)]
    embed_dim: usize,
}

impl EmbedderArgs {
    fn spec(&self) -> EmbedderSpec {
        match &self.embed_endpoint {
            Some(url) => EmbedderSpec::remote(url.clone()),
            None => EmbedderSpec::local(self.embed_dim),
        }
    }
}

#[derive(Args)]
struct QueryArgs {
    /// Corpus whose train split supplies demonstrations.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    code_file: PathBuf,
    #[arg(long)]
    intent: Intent,
    #[arg(long, default_value_t = 10)]
    shots: usize,
    #[arg(long, default_value = "token")]
    selection: Strategy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_WINDOW_LIMIT)]
    window_limit: usize,
    #[arg(long, default_value = "Java")]
    language: String,
    /// Skip demonstrations whose code equals the query.
    #[arg(long)]
    exclude_duplicates: bool,
    #[command(flatten)]
    embedder: EmbedderArgs,
}

struct Query {
    pool: Retriever,
    code: String,
}

impl QueryArgs {
    fn load(&self, semantic: bool) -> Result<Query> {
        let corpus = load_corpus(&self.corpus)?;
        let pool = retriever(
            corpus.filter(self.intent, Split::Train),
            semantic,
            &self.embedder,
        )?;
        Ok(Query {
            pool,
            code: read_code(&self.code_file)?,
        })
    }

    fn request<'a>(&'a self, code: &'a str, rerank: RerankMode) -> GenerationRequest<'a> {
        GenerationRequest {
            intent: self.intent,
            query_code: code,
            shots: self.shots,
            selection: self.selection,
            seed: self.seed,
            rerank,
            exclude_exact_duplicates: self.exclude_duplicates,
            window_limit: self.window_limit,
            language_name: &self.language,
        }
    }
}

fn retriever(corpus: Corpus, semantic: bool, embedder: &EmbedderArgs) -> Result<Retriever> {
    let pool = Retriever::new(corpus);
    if !semantic {
        return Ok(pool);
    }
    let embedder = Arc::new(Embedder::from_spec(&embedder.spec())?);
    Ok(pool.with_embedder(embedder)?)
}

fn read_code(path: &Path) -> Result<String> {
    let code =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let code = code.trim_end().to_string();
    if code.is_empty() {
        bail!("{} is empty", path.display());
    }
    Ok(code)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_backend(path: &Path) -> Result<BackendSpec> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut spec: BackendSpec = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text)?,
        _ => toml::from_str(&text)?,
    };
    if let BackendSpec::EchoNearest {
        corpus: Some(p), ..
    } = &mut spec
    {
        if p.is_relative() {
            if let Some(dir) = path.parent() {
                *p = dir.join(&*p);
            }
        }
    }
    Ok(spec)
}

fn ingest(path: &Path) -> Result<()> {
    let corpus = load_corpus(path)?;
    let mut splits: BTreeMap<String, usize> = BTreeMap::new();
    let mut intents: BTreeMap<String, usize> = BTreeMap::new();
    for e in corpus.iter() {
        *splits.entry(e.split.to_string()).or_default() += 1;
        *intents.entry(e.intent.to_string()).or_default() += 1;
    }
    print_json(&serde_json::json!({
        "name": corpus.name,
        "entries": corpus.len(),
        "splits": splits,
        "intents": intents,
    }))
}

#[derive(Deserialize)]
struct CandidateLine {
    id: String,
    comment: String,
}

fn evaluate(candidates: &Path, references: &Path) -> Result<()> {
    let refs = load_corpus(references)?;
    let text = std::fs::read_to_string(candidates)
        .with_context(|| format!("reading {}", candidates.display()))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: CandidateLine = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", candidates.display(), i + 1))?;
        let Some(entry) = refs.get(&c.id) else {
            bail!(
                "{}:{}: no reference with id {:?}",
                candidates.display(),
                i + 1,
                c.id
            );
        };
        pairs.push((c.id, entry.intent, score_pair(&c.comment, &entry.comment)));
    }
    print_json(&ccgen_core::aggregate(pairs))
}

fn experiment(config: &Path, out: &Path, format: ExportFormat) -> Result<bool> {
    let config = ExperimentConfig::load(config)?;
    let outcome = harness::run_experiment(&config)?;
    harness::export(&outcome.all_rows(), format, out)?;
    for s in &outcome.summary {
        log::info!(
            "{}: bleu {:.4} rouge-l {:.4} meteor {:.4}",
            s.cell(),
            s.bleu,
            s.rouge_l,
            s.meteor
        );
    }
    for f in &outcome.failures {
        eprintln!(
            "cell {} repetition {} failed: {}",
            f.cell, f.repetition, f.error
        );
    }
    Ok(outcome.succeeded())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ingest { corpus } => ingest(&corpus)?,
        Command::Retrieve {
            corpus,
            code_file,
            strategy,
            k,
            intent,
            split,
            seed,
            embedder,
        } => {
            let corpus = load_corpus(&corpus)?;
            let entries = corpus
                .entries
                .into_iter()
                .filter(|e| {
                    intent.is_none_or(|i| e.intent == i) && split.is_none_or(|s| e.split == s)
                })
                .collect();
            let pool = retriever(
                Corpus::new(corpus.name, entries)?,
                strategy == Strategy::Semantic,
                &embedder,
            )?;
            let code = read_code(&code_file)?;
            let hits = pool.retrieve(&code, k, strategy, Some(seed))?;
            let rows: Vec<_> = hits
                .iter()
                .map(|h| serde_json::json!({"rank": h.rank, "id": h.entry.id, "score": h.score}))
                .collect();
            print_json(&rows)?;
        }
        Command::Prompt { query } => {
            let q = query.load(query.selection == Strategy::Semantic)?;
            let prepared =
                harness::prepare_prompt(&q.pool, &query.request(&q.code, RerankMode::None))?;
            log::info!(
                "{} demonstrations: {:?}",
                prepared.prompt.shots_used,
                prepared.demonstrations
            );
            print!("{}", prepared.prompt.text);
            std::io::stdout().flush()?;
        }
        Command::Generate {
            query,
            backend_config,
            rerank,
            samples,
            temperature,
        } => {
            let spec = match &backend_config {
                Some(path) => load_backend(path)?,
                None => BackendSpec::EchoNearest {
                    corpus: Some(query.corpus.clone()),
                    strategy: Strategy::Token,
                    embedder: None,
                },
            };
            let semantic =
                query.selection == Strategy::Semantic || rerank == RerankMode::SemanticRerank;
            let q = query.load(semantic)?;
            let backend = ccgen_core::build_backend(&spec)?;
            let sampling = SamplingParams {
                temperature,
                n_samples: samples,
                ..SamplingParams::default()
            };
            sampling.validate()?;
            let g = harness::generate(
                &q.pool,
                backend.as_ref(),
                &sampling,
                &query.request(&q.code, rerank),
            )?;
            print_json(&g)?;
        }
        Command::Evaluate {
            candidates_file,
            references_file,
        } => evaluate(&candidates_file, &references_file)?,
        Command::Experiment {
            config,
            out,
            format,
        } => return experiment(&config, &out, format),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
