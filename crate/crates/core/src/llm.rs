//! Completion backends that sample candidate comments for a prompt.

use std::fmt;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::corpus::{load_corpus, Corpus, CorpusEntry, Intent, Split};
use crate::error::{Error, Result};
use crate::prompt::{extract_demonstrations, extract_query, RenderedPrompt};
use crate::remote::{ensure_network_allowed, JsonClient, RateLimit, Reply, RetryPolicy};
use crate::retrieval::{Embedder, EmbedderSpec, Retriever, Strategy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub n_samples: usize,
    pub max_output_tokens: usize,
    pub stop_sequences: Vec<String>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 0.5,
            n_samples: 10,
            max_output_tokens: 64,
            stop_sequences: vec!["\n".into(), "###".into()],
        }
    }
}

impl SamplingParams {
    pub const MAX_SAMPLES: usize = 100;

    pub fn validate(&self) -> Result<()> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        if self.n_samples == 0 || self.n_samples > Self::MAX_SAMPLES {
            return Err(Error::Config(format!(
                "n_samples must be in 1..={}",
                Self::MAX_SAMPLES
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateComment {
    pub text: String,
    /// 1-based position in the sample order.
    pub sample_index: usize,
    pub backend: String,
}

/// Truncates at the earliest stop sequence, then trims whitespace.
pub fn clean_completion(raw: &str, stops: &[String]) -> String {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| raw.find(s.as_str()))
        .min()
        .unwrap_or(raw.len());
    raw[..cut].trim().to_string()
}

/// Declarative backend selection, as found in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendSpec {
    RemoteCompletion {
        base_url: String,
        model: String,
        /// Name of the environment variable holding the bearer token.
        api_key_env: String,
        #[serde(default)]
        retry: RetryPolicy,
        #[serde(default)]
        rate_limit: RateLimit,
    },
    /// Answers with the comment of the nearest code. Searches `corpus` when
    /// given, otherwise the demonstrations embedded in the prompt.
    EchoNearest {
        #[serde(default)]
        corpus: Option<PathBuf>,
        #[serde(default = "default_echo_strategy")]
        strategy: Strategy,
        #[serde(default)]
        embedder: Option<EmbedderSpec>,
    },
    Scripted {
        script: Vec<String>,
    },
}

fn default_echo_strategy() -> Strategy {
    Strategy::Token
}

impl BackendSpec {
    pub fn is_remote(&self) -> bool {
        matches!(self, BackendSpec::RemoteCompletion { .. })
            || matches!(
                self,
                BackendSpec::EchoNearest { strategy: Strategy::Semantic, embedder: Some(e), .. }
                    if e.kind == crate::retrieval::EmbedderKind::RemoteService
            )
    }
}

pub trait CompletionBackend: Send + Sync {
    fn tag(&self) -> &str;

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        params: &SamplingParams,
    ) -> Result<Vec<CandidateComment>>;
}

/// Instantiates a backend. Each call yields independent state (the scripted
/// cursor starts at the beginning).
pub fn build_backend(spec: &BackendSpec) -> Result<Box<dyn CompletionBackend>> {
    Ok(match spec {
        BackendSpec::RemoteCompletion {
            base_url,
            model,
            api_key_env,
            retry,
            rate_limit,
        } => Box::new(RemoteCompletion::new(
            base_url,
            model,
            api_key_env,
            retry.clone(),
            rate_limit.clone(),
        )?),
        BackendSpec::EchoNearest {
            corpus,
            strategy,
            embedder,
        } => {
            let corpus = corpus.as_ref().map(load_corpus).transpose()?;
            let embedder = embedder
                .as_ref()
                .map(Embedder::from_spec)
                .transpose()?
                .map(Arc::new);
            Box::new(EchoNearest::new(corpus, *strategy, embedder)?)
        }
        BackendSpec::Scripted { script } => Box::new(Scripted::new(script.clone())?),
    })
}

/// Convenience wrapper: build the backend and sample once.
pub fn complete(
    spec: &BackendSpec,
    prompt: &RenderedPrompt,
    params: &SamplingParams,
) -> Result<Vec<CandidateComment>> {
    build_backend(spec)?.complete(prompt, params)
}

fn check_request(prompt: &RenderedPrompt, params: &SamplingParams) -> Result<()> {
    if prompt.text.is_empty() {
        return Err(Error::Config("prompt must not be empty".into()));
    }
    params.validate()
}

/// Cycles through a fixed list of responses.
#[derive(Debug)]
pub struct Scripted {
    script: Vec<String>,
    cursor: Mutex<usize>,
}

impl Scripted {
    pub fn new(script: Vec<String>) -> Result<Self> {
        if script.is_empty() {
            return Err(Error::Config(
                "scripted backend needs at least one response".into(),
            ));
        }
        Ok(Scripted {
            script,
            cursor: Mutex::new(0),
        })
    }
}

impl CompletionBackend for Scripted {
    fn tag(&self) -> &str {
        "scripted"
    }

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        params: &SamplingParams,
    ) -> Result<Vec<CandidateComment>> {
        check_request(prompt, params)?;
        let mut cursor = self.cursor.lock().unwrap();
        let out = (0..params.n_samples)
            .map(|i| {
                let text = &self.script[(*cursor + i) % self.script.len()];
                CandidateComment {
                    text: clean_completion(text, &params.stop_sequences),
                    sample_index: i + 1,
                    backend: self.tag().into(),
                }
            })
            .collect();
        *cursor = (*cursor + params.n_samples) % self.script.len();
        Ok(out)
    }
}

/// Deterministic stand-in for a model: every sample is the comment of the
/// code most similar to the prompt's query.
#[derive(Debug)]
pub struct EchoNearest {
    index: Option<Retriever>,
    strategy: Strategy,
    embedder: Option<Arc<Embedder>>,
}

impl EchoNearest {
    pub fn new(
        corpus: Option<Corpus>,
        strategy: Strategy,
        embedder: Option<Arc<Embedder>>,
    ) -> Result<Self> {
        match strategy {
            Strategy::Random => {
                return Err(Error::Config(
                    "echo backend needs token or semantic strategy".into(),
                ))
            }
            Strategy::Semantic if embedder.is_none() => {
                return Err(Error::Config(
                    "semantic echo backend requires an embedder".into(),
                ))
            }
            _ => {}
        }
        let index = match corpus {
            Some(c) => Some(self::index(c, strategy, embedder.as_ref())?),
            None => None,
        };
        Ok(EchoNearest {
            index,
            strategy,
            embedder,
        })
    }

    fn nearest_comment(&self, prompt: &str) -> Result<String> {
        let query = extract_query(prompt);
        let local;
        let retriever = match &self.index {
            Some(r) => r,
            None => {
                let entries = extract_demonstrations(prompt)
                    .into_iter()
                    .enumerate()
                    .map(|(i, d)| CorpusEntry {
                        id: format!("demo-{}", i + 1),
                        code: d.code,
                        comment: d.comment,
                        intent: Intent::What,
                        split: Split::Train,
                    })
                    .collect();
                local = index(
                    Corpus {
                        name: "prompt".into(),
                        entries,
                    },
                    self.strategy,
                    self.embedder.as_ref(),
                )?;
                &local
            }
        };
        if retriever.corpus().is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let hit = retriever.retrieve(query, 1, self.strategy, None)?;
        Ok(hit[0].entry.comment.clone())
    }
}

fn index(
    corpus: Corpus,
    strategy: Strategy,
    embedder: Option<&Arc<Embedder>>,
) -> Result<Retriever> {
    let r = Retriever::new(corpus);
    match (strategy, embedder) {
        (Strategy::Semantic, Some(e)) => r.with_embedder(e.clone()),
        _ => Ok(r),
    }
}

impl CompletionBackend for EchoNearest {
    fn tag(&self) -> &str {
        "echo-nearest"
    }

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        params: &SamplingParams,
    ) -> Result<Vec<CandidateComment>> {
        check_request(prompt, params)?;
        let text = clean_completion(&self.nearest_comment(&prompt.text)?, &params.stop_sequences);
        Ok((1..=params.n_samples)
            .map(|sample_index| CandidateComment {
                text: text.clone(),
                sample_index,
                backend: self.tag().into(),
            })
            .collect())
    }
}

#[derive(Clone)]
struct Credential(String);

impl fmt::Debug for Credential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Credential(<redacted>)")
    }
}

/// Client for an OpenAI-compatible `/completions` endpoint.
#[derive(Debug)]
pub struct RemoteCompletion {
    url: String,
    model: String,
    credential: Credential,
    client: JsonClient,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    n: usize,
    max_tokens: usize,
    stop: &'a [String],
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
    #[serde(default)]
    index: Option<usize>,
}

const SERVICE: &str = "completion service";

impl RemoteCompletion {
    pub fn new(
        base_url: &str,
        model: &str,
        api_key_env: &str,
        retry: RetryPolicy,
        limit: RateLimit,
    ) -> Result<Self> {
        ensure_network_allowed(SERVICE)?;
        let key = std::env::var(api_key_env).map_err(|_| {
            Error::Config(format!("environment variable `{api_key_env}` is not set"))
        })?;
        Ok(RemoteCompletion {
            url: format!("{}/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            credential: Credential(key),
            client: JsonClient::new(SERVICE, retry, limit),
        })
    }

    fn request(&self, prompt: &str, params: &SamplingParams, n: usize) -> Result<Reply> {
        let body = serde_json::to_string(&CompletionRequest {
            model: &self.model,
            prompt,
            temperature: params.temperature,
            n,
            max_tokens: params.max_output_tokens,
            stop: &params.stop_sequences,
        })
        .map_err(|e| Error::Serialization(e.to_string()))?;
        self.client.post(&self.url, &body, Some(&self.credential.0))
    }

    fn parse(text: &str, expected: usize) -> Result<Vec<String>> {
        let mut resp: CompletionResponse =
            serde_json::from_str(text).map_err(|e| Error::MalformedResponse {
                service: SERVICE,
                message: e.to_string(),
            })?;
        if resp.choices.len() != expected {
            return Err(Error::MalformedResponse {
                service: SERVICE,
                message: format!("expected {expected} choices, got {}", resp.choices.len()),
            });
        }
        resp.choices.sort_by_key(|c| c.index);
        Ok(resp.choices.into_iter().map(|c| c.text).collect())
    }

    fn status_error(status: u16) -> Error {
        match status {
            401 | 403 => Error::Auth {
                service: SERVICE,
                status,
            },
            _ => Error::HttpStatus {
                service: SERVICE,
                status,
                attempts: 1,
            },
        }
    }
}

impl CompletionBackend for RemoteCompletion {
    fn tag(&self) -> &str {
        "remote"
    }

    fn complete(
        &self,
        prompt: &RenderedPrompt,
        params: &SamplingParams,
    ) -> Result<Vec<CandidateComment>> {
        check_request(prompt, params)?;
        let n = params.n_samples;
        let raw = match self.request(&prompt.text, params, n)? {
            Reply::Ok(text) => Self::parse(&text, n)?,
            // Services that reject batched sampling get one request per sample.
            Reply::Status(400) if n > 1 => {
                log::info!(
                    "{SERVICE}: batched request rejected, falling back to {n} single requests"
                );
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    match self.request(&prompt.text, params, 1)? {
                        Reply::Ok(text) => out.extend(Self::parse(&text, 1)?),
                        Reply::Status(status) => return Err(Self::status_error(status)),
                    }
                }
                out
            }
            Reply::Status(status) => return Err(Self::status_error(status)),
        };
        Ok(raw
            .iter()
            .enumerate()
            .map(|(i, t)| CandidateComment {
                text: clean_completion(t, &params.stop_sequences),
                sample_index: i + 1,
                backend: self.tag().into(),
            })
            .collect())
    }
}
