//! Sentence-level BLEU-4, ROUGE-L and exact-match METEOR.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::codetok::{comment_tokens, WordSequence};
use crate::corpus::Intent;

const MAX_ORDER: usize = 4;
pub const ROUGE_BETA: f64 = 1.2;

fn ngram_counts(words: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in words.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU-4 with +1 smoothing for orders 2..4 that have no match.
///
/// Orders longer than the candidate are left out of the geometric mean (each
/// remaining order keeps weight 1/4).
pub fn bleu(candidate: &WordSequence, reference: &WordSequence) -> f64 {
    let cand = candidate.as_slice();
    let refr = reference.as_slice();
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=MAX_ORDER {
        if n > cand.len() {
            break;
        }
        let cand_counts = ngram_counts(cand, n);
        let ref_counts = ngram_counts(refr, n);
        let total = cand.len() - n + 1;
        let matched: usize = cand_counts
            .iter()
            .map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if matched == 0 {
            if n == 1 {
                return 0.0;
            }
            1.0 / (total as f64 + 1.0)
        } else {
            matched as f64 / total as f64
        };
        log_sum += 0.25 * p.ln();
    }
    let (c, r) = (cand.len() as f64, refr.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    (bp * log_sum.exp()).clamp(0.0, 1.0)
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure with β = 1.2.
pub fn rouge_l(candidate: &WordSequence, reference: &WordSequence) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(candidate.as_slice(), reference.as_slice()) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / candidate.len() as f64;
    let r = l / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Size and fragmentation of a unigram alignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

/// Exact-match alignment with the maximum number of matches and, among
/// those, the fewest chunks.
///
/// Candidate positions are visited left to right; each is either left
/// unmatched or mapped to an unused reference position holding the same
/// word, with memoization on (position, used reference set, previous
/// mapping). Inputs with so many repeated words that the state space exceeds
/// a fixed budget fall back to a greedy pass that extends the current chunk
/// when it can.
pub fn meteor_alignment(candidate: &[String], reference: &[String]) -> Alignment {
    Aligner::new(candidate, reference).run()
}

const STATE_BUDGET: usize = 250_000;

struct Aligner {
    cand: Vec<usize>,
    refr: Vec<usize>,
    /// Target match count per word id.
    target: Vec<usize>,
    /// Occurrences of each word in cand[i..], indexed [i][word].
    cand_remaining: Vec<Vec<usize>>,
    ref_positions: Vec<Vec<usize>>,
    memo: HashMap<(usize, Vec<u64>, usize), Option<usize>>,
    overflow: bool,
}

impl Aligner {
    fn new<'w>(candidate: &'w [String], reference: &'w [String]) -> Self {
        let mut ids: HashMap<&'w str, usize> = HashMap::new();
        let mut id = |w: &'w String| {
            let next = ids.len();
            *ids.entry(w.as_str()).or_insert(next)
        };
        let cand: Vec<usize> = candidate.iter().map(&mut id).collect();
        let refr: Vec<usize> = reference.iter().map(&mut id).collect();
        let vocab = ids.len();
        let mut cc = vec![0; vocab];
        let mut rc = vec![0; vocab];
        cand.iter().for_each(|&w| cc[w] += 1);
        refr.iter().for_each(|&w| rc[w] += 1);
        let target = (0..vocab).map(|w| cc[w].min(rc[w])).collect();
        let mut cand_remaining = vec![vec![0; vocab]; cand.len() + 1];
        for i in (0..cand.len()).rev() {
            cand_remaining[i] = cand_remaining[i + 1].clone();
            cand_remaining[i][cand[i]] += 1;
        }
        let mut ref_positions = vec![Vec::new(); vocab];
        for (j, &w) in refr.iter().enumerate() {
            ref_positions[w].push(j);
        }
        Aligner {
            cand,
            refr,
            target,
            cand_remaining,
            ref_positions,
            memo: HashMap::new(),
            overflow: false,
        }
    }

    fn run(mut self) -> Alignment {
        let matches: usize = self.target.iter().sum();
        if matches == 0 {
            return Alignment {
                matches: 0,
                chunks: 0,
            };
        }
        let used = vec![0u64; self.refr.len().div_ceil(64)];
        let mut matched = vec![0; self.target.len()];
        let best = self.search(0, used, NONE, &mut matched);
        match best {
            Some(chunks) if !self.overflow => Alignment { matches, chunks },
            _ => self.greedy(),
        }
    }

    /// Minimum chunks for cand[i..]; `last` is the reference position the
    /// previous candidate word was mapped to, or NONE.
    fn search(
        &mut self,
        i: usize,
        used: Vec<u64>,
        last: usize,
        matched: &mut [usize],
    ) -> Option<usize> {
        if i == self.cand.len() {
            return Some(0);
        }
        let key = (i, used, last);
        if let Some(v) = self.memo.get(&key) {
            return *v;
        }
        if self.memo.len() >= STATE_BUDGET {
            self.overflow = true;
            return None;
        }
        let (_, used, _) = &key;
        let w = self.cand[i];
        let needed = self.target[w] - matched[w];
        let mut best: Option<usize> = None;
        if self.cand_remaining[i + 1][w] >= needed {
            best = self.search(i + 1, used.clone(), NONE, matched);
        }
        if needed > 0 {
            for k in 0..self.ref_positions[w].len() {
                let j = self.ref_positions[w][k];
                if used[j / 64] & (1 << (j % 64)) != 0 {
                    continue;
                }
                let mut next = used.clone();
                next[j / 64] |= 1 << (j % 64);
                matched[w] += 1;
                let rest = self.search(i + 1, next, j, matched);
                matched[w] -= 1;
                if let Some(rest) = rest {
                    let opens = usize::from(last == NONE || last + 1 != j);
                    let total = rest + opens;
                    best = Some(best.map_or(total, |b| b.min(total)));
                }
            }
        }
        if self.overflow {
            return None;
        }
        self.memo.insert(key, best);
        best
    }

    fn greedy(&self) -> Alignment {
        let mut used = vec![false; self.refr.len()];
        let mut matched = vec![0; self.target.len()];
        let mut last = NONE;
        let (mut matches, mut chunks) = (0, 0);
        for i in 0..self.cand.len() {
            let w = self.cand[i];
            let needed = self.target[w] - matched[w];
            let contiguous = last != NONE
                && last + 1 < self.refr.len()
                && self.refr[last + 1] == w
                && !used[last + 1];
            let pick = if needed == 0 {
                None
            } else if contiguous {
                Some(last + 1)
            } else {
                self.ref_positions[w].iter().copied().find(|&j| !used[j])
            };
            match pick {
                Some(j) => {
                    if !(last != NONE && last + 1 == j) {
                        chunks += 1;
                    }
                    used[j] = true;
                    matched[w] += 1;
                    matches += 1;
                    last = j;
                }
                None => last = NONE,
            }
        }
        Alignment { matches, chunks }
    }
}

const NONE: usize = usize::MAX;

/// METEOR restricted to exact unigram matches:
/// `Fmean = 10PR / (R + 9P)`, `penalty = 0.5 · (chunks / m)^3`.
pub fn meteor(candidate: &WordSequence, reference: &WordSequence) -> f64 {
    let Alignment { matches, chunks } =
        meteor_alignment(candidate.as_slice(), reference.as_slice());
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let p = m / candidate.len() as f64;
    let r = m / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m).powi(3);
    fmean * (1.0 - penalty)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
}

impl MetricScores {
    pub fn mean<'a>(scores: impl IntoIterator<Item = &'a MetricScores>) -> Option<MetricScores> {
        let mut n = 0usize;
        let mut sum = MetricScores::default();
        for s in scores {
            n += 1;
            sum.bleu += s.bleu;
            sum.rouge_l += s.rouge_l;
            sum.meteor += s.meteor;
        }
        (n > 0).then(|| MetricScores {
            bleu: sum.bleu / n as f64,
            rouge_l: sum.rouge_l / n as f64,
            meteor: sum.meteor / n as f64,
        })
    }
}

/// Tokenizes both texts with [`comment_tokens`] and applies all three metrics.
pub fn score_pair(candidate: &str, reference: &str) -> MetricScores {
    let c = comment_tokens(candidate);
    let r = comment_tokens(reference);
    MetricScores {
        bleu: bleu(&c, &r),
        rouge_l: rouge_l(&c, &r),
        meteor: meteor(&c, &r),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub id: String,
    pub intent: Intent,
    pub scores: MetricScores,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_example: Vec<ExampleScore>,
    /// `None` for an empty report.
    pub overall: Option<MetricScores>,
    pub per_intent: BTreeMap<Intent, MetricScores>,
}

/// Arithmetic means overall and per intent.
pub fn aggregate(pairs: Vec<(String, Intent, MetricScores)>) -> MetricReport {
    let per_example: Vec<ExampleScore> = pairs
        .into_iter()
        .map(|(id, intent, scores)| ExampleScore { id, intent, scores })
        .collect();
    let overall = MetricScores::mean(per_example.iter().map(|e| &e.scores));
    let mut grouped: BTreeMap<Intent, Vec<&MetricScores>> = BTreeMap::new();
    for e in &per_example {
        grouped.entry(e.intent).or_default().push(&e.scores);
    }
    let per_intent = grouped
        .into_iter()
        .filter_map(|(intent, scores)| MetricScores::mean(scores).map(|m| (intent, m)))
        .collect();
    MetricReport {
        per_example,
        overall,
        per_intent,
    }
}
