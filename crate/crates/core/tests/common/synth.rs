//! Deterministic synthetic corpora.

use ccgen_core::{Corpus, CorpusEntry, Intent, Split};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub const IDENT_PARTS: [&str; 40] = [
    "play", "video", "list", "parse", "xml", "stream", "buffer", "read", "write", "file", "user",
    "account", "session", "token", "cache", "index", "query", "result", "node", "tree", "graph",
    "edge", "vertex", "path", "config", "value", "key", "map", "entry", "socket", "channel",
    "message", "queue", "event", "handler", "timer", "clock", "frame", "pixel", "color",
];

pub const COMMENT_WORDS: [&str; 48] = [
    "returns", "sets", "creates", "the", "a", "given", "current", "new", "value", "list", "item",
    "object", "stream", "file", "user", "checks", "whether", "is", "valid", "empty", "closes",
    "opens", "reads", "writes", "data", "from", "to", "into", "with", "for", "each", "element",
    "cache", "updates", "removes", "adds", "index", "node", "tree", "path", "message", "queue",
    "handles", "event", "timer", "frame", "pixel", "color",
];

fn camel(parts: &[&str]) -> String {
    let mut s = parts[0].to_string();
    for p in &parts[1..] {
        let mut c = p.chars();
        s.push(c.next().unwrap().to_ascii_uppercase());
        s.extend(c);
    }
    s
}

pub fn random_code(rng: &mut StdRng) -> String {
    let pick = |rng: &mut StdRng, n: usize| -> Vec<&'static str> {
        (0..n)
            .map(|_| IDENT_PARTS[rng.gen_range(0..IDENT_PARTS.len())])
            .collect()
    };
    let method = camel(&pick(rng, 3));
    let field = camel(&pick(rng, 2));
    let call = camel(&pick(rng, 2));
    let arg = camel(&pick(rng, 2));
    format!("public void {method}(String {arg}) {{ this.{field} = {call}({arg}); }}")
}

pub fn random_comment(rng: &mut StdRng) -> String {
    let len = rng.gen_range(7..11);
    let words: Vec<&str> = (0..len)
        .map(|_| COMMENT_WORDS[rng.gen_range(0..COMMENT_WORDS.len())])
        .collect();
    let mut s = words.join(" ");
    s[..1].make_ascii_uppercase();
    s.push('.');
    s
}

/// Random corpus with all entries in `split`, intents cycling over targets.
pub fn random_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = StdRng::seed_from_u64(seed);
    let entries = (0..n)
        .map(|i| CorpusEntry {
            id: format!("e{i:05}"),
            code: random_code(&mut rng),
            comment: random_comment(&mut rng),
            intent: Intent::TARGETS[i % 5],
            split: Split::Train,
        })
        .collect();
    Corpus::new("synthetic", entries).unwrap()
}

/// Renames one identifier of `code` by swapping a sub-token, leaving the rest.
pub fn paraphrase_code(code: &str) -> String {
    code.replacen("public void ", "public void my", 1)
}

/// `n_test` test entries, each with a near-duplicate train entry (same
/// comment, lightly edited code), plus `n_distractors` unrelated train
/// entries. Entry order is shuffled.
pub fn planted_corpus(n_test: usize, n_distractors: usize, seed: u64) -> Corpus {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for i in 0..n_test {
        let intent = Intent::TARGETS[i % 5];
        let code = random_code(&mut rng);
        let comment = random_comment(&mut rng);
        entries.push(CorpusEntry {
            id: format!("dup{i:04}"),
            code: paraphrase_code(&code),
            comment: comment.clone(),
            intent,
            split: Split::Train,
        });
        entries.push(CorpusEntry {
            id: format!("test{i:04}"),
            code,
            comment,
            intent,
            split: Split::Test,
        });
    }
    for i in 0..n_distractors {
        entries.push(CorpusEntry {
            id: format!("noise{i:04}"),
            code: random_code(&mut rng),
            comment: random_comment(&mut rng),
            intent: Intent::TARGETS[i % 5],
            split: Split::Train,
        });
    }
    entries.shuffle(&mut rng);
    Corpus::new("planted", entries).unwrap()
}
