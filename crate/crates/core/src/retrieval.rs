//! Demonstration retrieval: Jaccard over code sub-tokens, cosine over
//! embeddings, or a seeded random draw. The index is a flat scan.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::codetok::{code_subtokens, comment_tokens, SubTokenSet};
use crate::corpus::{sample_indices, Corpus, CorpusEntry};
use crate::error::{Error, Result};
use crate::remote::{ensure_network_allowed, JsonClient, RateLimit, Reply, RetryPolicy};

/// `|a ∩ b| / |a ∪ b|`; two empty sets score 1.0.
pub fn jaccard(a: &SubTokenSet, b: &SubTokenSet) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.tokens.intersection(&b.tokens).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub components: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Self {
        EmbeddingVector { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = u
        .components
        .iter()
        .zip(&v.components)
        .map(|(a, b)| a * b)
        .sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    RemoteService,
    LocalHashed,
}

pub const DEFAULT_LOCAL_DIM: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub kind: EmbedderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Texts per remote request.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub rate_limit: RateLimit,
}

fn default_batch_size() -> usize {
    64
}

impl EmbedderSpec {
    pub fn local(dim: usize) -> Self {
        EmbedderSpec {
            kind: EmbedderKind::LocalHashed,
            endpoint: None,
            dim: Some(dim),
            batch_size: default_batch_size(),
            retry: RetryPolicy::default(),
            rate_limit: RateLimit::default(),
        }
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        EmbedderSpec {
            kind: EmbedderKind::RemoteService,
            endpoint: Some(endpoint.into()),
            dim: None,
            batch_size: default_batch_size(),
            retry: RetryPolicy::default(),
            rate_limit: RateLimit::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            EmbedderKind::RemoteService if self.endpoint.is_none() => {
                Err(Error::Config("remote embedder requires an endpoint".into()))
            }
            EmbedderKind::LocalHashed if self.dim.unwrap_or(DEFAULT_LOCAL_DIM) < 16 => Err(
                Error::Config("local hashed embedder requires dim >= 16".into()),
            ),
            _ if self.batch_size == 0 => Err(Error::Config("batch_size must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// What a text is, which decides how the local embedder tokenizes it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextKind {
    Code,
    Comment,
}

/// 64-bit FNV-1a over UTF-8 bytes; the pinned bucket hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

/// Hashed bag of tokens, L2-normalized. Code is tokenized with
/// [`code_subtokens`] (a set, so every count is 1); comments with
/// [`comment_tokens`] (a sequence, so repeats count).
pub fn hashed_embedding(text: &str, kind: TextKind, dim: usize) -> EmbeddingVector {
    let mut v = vec![0.0; dim];
    let mut bump = |tok: &str| v[(fnv1a64(tok.as_bytes()) % dim as u64) as usize] += 1.0;
    match kind {
        TextKind::Code => code_subtokens(text).tokens.iter().for_each(|t| bump(t)),
        TextKind::Comment => comment_tokens(text).words.iter().for_each(|t| bump(t)),
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    EmbeddingVector::new(v)
}

/// A constructed embedding provider.
#[derive(Debug)]
pub enum Embedder {
    LocalHashed { dim: usize },
    Remote(RemoteEmbedder),
}

#[derive(Debug)]
pub struct RemoteEmbedder {
    url: String,
    batch_size: usize,
    client: JsonClient,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

impl RemoteEmbedder {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let body = serde_json::to_string(&EmbedRequest { texts })
            .map_err(|e| Error::Serialization(e.to_string()))?;
        let service = self.client.service();
        let text = match self.client.post(&self.url, &body, None)? {
            Reply::Ok(text) => text,
            Reply::Status(status) => {
                return Err(Error::HttpStatus {
                    service,
                    status,
                    attempts: 1,
                })
            }
        };
        let resp: EmbedResponse =
            serde_json::from_str(&text).map_err(|e| Error::MalformedResponse {
                service,
                message: e.to_string(),
            })?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::MalformedResponse {
                service,
                message: format!(
                    "expected {} vectors, got {}",
                    texts.len(),
                    resp.vectors.len()
                ),
            });
        }
        if let Some(bad) = resp.vectors.iter().find(|v| v.len() != resp.dim) {
            return Err(Error::MalformedResponse {
                service,
                message: format!("declared dim {} but a vector has {}", resp.dim, bad.len()),
            });
        }
        Ok(resp.vectors.into_iter().map(EmbeddingVector::new).collect())
    }
}

impl Embedder {
    pub fn from_spec(spec: &EmbedderSpec) -> Result<Self> {
        spec.validate()?;
        match spec.kind {
            EmbedderKind::LocalHashed => Ok(Embedder::LocalHashed {
                dim: spec.dim.unwrap_or(DEFAULT_LOCAL_DIM),
            }),
            EmbedderKind::RemoteService => {
                ensure_network_allowed("embedding service")?;
                let endpoint = spec.endpoint.as_deref().unwrap_or_default();
                Ok(Embedder::Remote(RemoteEmbedder {
                    url: format!("{}/embed", endpoint.trim_end_matches('/')),
                    batch_size: spec.batch_size,
                    client: JsonClient::new(
                        "embedding service",
                        spec.retry.clone(),
                        spec.rate_limit.clone(),
                    ),
                }))
            }
        }
    }

    pub fn is_remote(&self) -> bool {
        matches!(self, Embedder::Remote(_))
    }

    /// One vector per text, in order. Remote batches run concurrently up to
    /// the client's in-flight limit.
    pub fn embed(&self, texts: &[&str], kind: TextKind) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(Error::Config("embed requires at least one text".into()));
        }
        match self {
            Embedder::LocalHashed { dim } => Ok(texts
                .iter()
                .map(|t| hashed_embedding(t, kind, *dim))
                .collect()),
            Embedder::Remote(remote) => {
                let batches: Vec<&[&str]> = texts.chunks(remote.batch_size).collect();
                let results: Vec<Result<Vec<EmbeddingVector>>> = if batches.len() == 1 {
                    vec![remote.embed_batch(batches[0])]
                } else {
                    std::thread::scope(|s| {
                        let handles: Vec<_> = batches
                            .iter()
                            .map(|batch| s.spawn(move || remote.embed_batch(batch)))
                            .collect();
                        handles
                            .into_iter()
                            .map(|h| h.join().expect("embed worker panicked"))
                            .collect()
                    })
                };
                let mut out = Vec::with_capacity(texts.len());
                for r in results {
                    out.extend(r?);
                }
                if let Some(first) = out.first() {
                    let dim = first.dim();
                    if let Some(bad) = out.iter().find(|v| v.dim() != dim) {
                        return Err(Error::MalformedResponse {
                            service: remote.client.service(),
                            message: format!("inconsistent dims {dim} and {}", bad.dim()),
                        });
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn embed_one(&self, text: &str, kind: TextKind) -> Result<EmbeddingVector> {
        Ok(self.embed(&[text], kind)?.remove(0))
    }
}

/// Convenience wrapper: build the embedder from `spec` and embed.
pub fn embed(spec: &EmbedderSpec, texts: &[&str], kind: TextKind) -> Result<Vec<EmbeddingVector>> {
    Embedder::from_spec(spec)?.embed(texts, kind)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Token,
    Semantic,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Token => "token",
            Strategy::Semantic => "semantic",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "token" => Ok(Strategy::Token),
            "semantic" => Ok(Strategy::Semantic),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub entry: CorpusEntry,
    /// Index of the entry in the searched corpus.
    pub position: usize,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Score descending, then corpus position ascending.
pub fn rank_order(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Flat index over one corpus with precomputed sub-token sets and, when an
/// embedder is attached, precomputed code embeddings.
#[derive(Debug)]
pub struct Retriever {
    corpus: Corpus,
    token_sets: Vec<SubTokenSet>,
    embedder: Option<Arc<Embedder>>,
    embeddings: Option<Vec<EmbeddingVector>>,
}

impl Retriever {
    pub fn new(corpus: Corpus) -> Self {
        let token_sets = corpus
            .iter()
            .map(|e| code_subtokens(&e.code).with_source(e.id.clone()))
            .collect();
        Retriever {
            corpus,
            token_sets,
            embedder: None,
            embeddings: None,
        }
    }

    /// Attaches an embedder and embeds every corpus code snippet.
    pub fn with_embedder(mut self, embedder: Arc<Embedder>) -> Result<Self> {
        if !self.corpus.is_empty() {
            let texts: Vec<&str> = self.corpus.iter().map(|e| e.code.as_str()).collect();
            self.embeddings = Some(embedder.embed(&texts, TextKind::Code)?);
        } else {
            self.embeddings = Some(Vec::new());
        }
        self.embedder = Some(embedder);
        Ok(self)
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn embedder(&self) -> Option<&Arc<Embedder>> {
        self.embedder.as_ref()
    }

    /// Similarity of every corpus entry to the query, in corpus order.
    pub fn scores(&self, query_code: &str, strategy: Strategy) -> Result<Vec<f64>> {
        match strategy {
            Strategy::Token => {
                let query = code_subtokens(query_code);
                Ok(self.token_sets.iter().map(|s| jaccard(&query, s)).collect())
            }
            Strategy::Semantic => {
                let (Some(embedder), Some(vectors)) = (&self.embedder, &self.embeddings) else {
                    return Err(Error::Config(
                        "semantic retrieval requires an embedder".into(),
                    ));
                };
                if vectors.is_empty() {
                    return Ok(Vec::new());
                }
                let query = embedder.embed_one(query_code, TextKind::Code)?;
                vectors.iter().map(|v| cosine(&query, v)).collect()
            }
            Strategy::Random => Ok(vec![0.0; self.corpus.len()]),
        }
    }

    pub fn retrieve(
        &self,
        query_code: &str,
        k: usize,
        strategy: Strategy,
        seed: Option<u64>,
    ) -> Result<Vec<ScoredEntry>> {
        self.retrieve_excluding(query_code, k, strategy, seed, |_| false)
    }

    /// Like [`Retriever::retrieve`], skipping entries for which `exclude`
    /// returns true.
    pub fn retrieve_excluding(
        &self,
        query_code: &str,
        k: usize,
        strategy: Strategy,
        seed: Option<u64>,
        exclude: impl Fn(&CorpusEntry) -> bool,
    ) -> Result<Vec<ScoredEntry>> {
        let eligible: Vec<usize> = (0..self.corpus.len())
            .filter(|&i| !exclude(&self.corpus.entries[i]))
            .collect();
        if k == 0 || eligible.is_empty() {
            return Ok(Vec::new());
        }
        let picked: Vec<(f64, usize)> = match strategy {
            Strategy::Random => {
                let seed =
                    seed.ok_or_else(|| Error::Config("random selection requires a seed".into()))?;
                sample_indices(eligible.len(), k, seed)
                    .into_iter()
                    .map(|i| (0.0, eligible[i]))
                    .collect()
            }
            _ => {
                let scores = self.scores(query_code, strategy)?;
                let mut scored: Vec<(f64, usize)> =
                    eligible.iter().map(|&i| (scores[i], i)).collect();
                let k = k.min(scored.len());
                if k < scored.len() {
                    scored.select_nth_unstable_by(k - 1, |a, b| rank_order(*a, *b));
                    scored.truncate(k);
                }
                scored.sort_by(|a, b| rank_order(*a, *b));
                scored
            }
        };
        Ok(picked
            .into_iter()
            .enumerate()
            .map(|(r, (score, position))| ScoredEntry {
                entry: self.corpus.entries[position].clone(),
                position,
                score,
                rank: r + 1,
            })
            .collect())
    }
}

/// One-shot retrieval over `corpus`; builds a fresh index each call.
pub fn retrieve(
    corpus: &Corpus,
    query_code: &str,
    k: usize,
    strategy: Strategy,
    spec: Option<&EmbedderSpec>,
    seed: Option<u64>,
) -> Result<Vec<ScoredEntry>> {
    let mut retriever = Retriever::new(corpus.clone());
    if strategy == Strategy::Semantic {
        let spec = spec
            .ok_or_else(|| Error::Config("semantic retrieval requires an embedder spec".into()))?;
        retriever = retriever.with_embedder(Arc::new(Embedder::from_spec(spec)?))?;
    }
    retriever.retrieve(query_code, k, strategy, seed)
}
