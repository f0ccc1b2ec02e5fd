//! Candidate reranking against the comment of the most similar corpus code.

use serde::{Deserialize, Serialize};

use crate::codetok::comment_tokens;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::llm::CandidateComment;
use crate::retrieval::{cosine, jaccard, Embedder, EmbedderSpec, Retriever, Strategy, TextKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RerankStrategy {
    TokenRerank,
    SemanticRerank,
}

impl RerankStrategy {
    /// Retrieval modality used to pick the reference by default.
    pub fn default_reference(self) -> Strategy {
        match self {
            RerankStrategy::TokenRerank => Strategy::Token,
            RerankStrategy::SemanticRerank => Strategy::Semantic,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RerankStrategy::TokenRerank => "token-rerank",
            RerankStrategy::SemanticRerank => "semantic-rerank",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RerankSpec {
    pub strategy: RerankStrategy,
    pub reference_retrieval: Strategy,
    #[serde(default)]
    pub embedder: Option<EmbedderSpec>,
}

impl RerankSpec {
    pub fn new(strategy: RerankStrategy, embedder: Option<EmbedderSpec>) -> Self {
        RerankSpec {
            strategy,
            reference_retrieval: strategy.default_reference(),
            embedder,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let needs_embedder = self.strategy == RerankStrategy::SemanticRerank
            || self.reference_retrieval == Strategy::Semantic;
        if needs_embedder && self.embedder.is_none() {
            return Err(Error::Config(
                "semantic reranking requires an embedder".into(),
            ));
        }
        if self.reference_retrieval == Strategy::Random {
            return Err(Error::Config(
                "reference retrieval must be token or semantic".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub candidate: CandidateComment,
    pub similarity_to_reference: f64,
    /// 1-based.
    pub final_rank: usize,
}

/// Comment of the rank-1 entry of `retriever` for `query_code`.
pub fn reference_from(
    retriever: &Retriever,
    query_code: &str,
    retrieval: Strategy,
) -> Result<String> {
    if retriever.corpus().is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if retrieval == Strategy::Random {
        return Err(Error::Config(
            "reference retrieval must be token or semantic".into(),
        ));
    }
    let top = retriever.retrieve(query_code, 1, retrieval, None)?;
    Ok(top[0].entry.comment.clone())
}

pub fn select_reference(
    corpus: &Corpus,
    query_code: &str,
    retrieval: Strategy,
    embedder: Option<&EmbedderSpec>,
) -> Result<String> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut retriever = Retriever::new(corpus.clone());
    if retrieval == Strategy::Semantic {
        let spec = embedder.ok_or_else(|| {
            Error::Config("semantic reference retrieval requires an embedder".into())
        })?;
        retriever = retriever.with_embedder(std::sync::Arc::new(Embedder::from_spec(spec)?))?;
    }
    reference_from(&retriever, query_code, retrieval)
}

/// Orders candidates by similarity to `reference`, ties by sample index.
pub fn rerank_with(
    candidates: &[CandidateComment],
    reference: &str,
    strategy: RerankStrategy,
    embedder: Option<&Embedder>,
) -> Result<Vec<RankedCandidate>> {
    if candidates.is_empty() {
        return Err(Error::Config("rerank needs at least one candidate".into()));
    }
    let sims: Vec<f64> = match strategy {
        RerankStrategy::TokenRerank => {
            let reference = comment_tokens(reference).to_set();
            candidates
                .iter()
                .map(|c| jaccard(&comment_tokens(&c.text).to_set(), &reference))
                .collect()
        }
        RerankStrategy::SemanticRerank => {
            let embedder = embedder
                .ok_or_else(|| Error::Config("semantic reranking requires an embedder".into()))?;
            let mut texts: Vec<&str> = candidates.iter().map(|c| c.text.as_str()).collect();
            texts.push(reference);
            let vectors = embedder.embed(&texts, TextKind::Comment)?;
            let (reference, cands) = vectors.split_last().expect("non-empty");
            cands
                .iter()
                .map(|v| cosine(v, reference))
                .collect::<Result<_>>()?
        }
    };
    let mut ranked: Vec<RankedCandidate> = candidates
        .iter()
        .zip(sims)
        .map(|(c, s)| RankedCandidate {
            candidate: c.clone(),
            similarity_to_reference: s,
            final_rank: 0,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.similarity_to_reference
            .total_cmp(&a.similarity_to_reference)
            .then(a.candidate.sample_index.cmp(&b.candidate.sample_index))
    });
    for (i, r) in ranked.iter_mut().enumerate() {
        r.final_rank = i + 1;
    }
    Ok(ranked)
}

pub fn rerank(
    candidates: &[CandidateComment],
    reference: &str,
    spec: &RerankSpec,
) -> Result<Vec<RankedCandidate>> {
    spec.validate()?;
    let embedder = match spec.strategy {
        RerankStrategy::SemanticRerank => Some(Embedder::from_spec(
            spec.embedder.as_ref().expect("validated"),
        )?),
        RerankStrategy::TokenRerank => None,
    };
    rerank_with(candidates, reference, spec.strategy, embedder.as_ref())
}
