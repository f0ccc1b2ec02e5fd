//! Fixtures shared by the benchmarks under `benches/`.

use ccgen_core::{Corpus, CorpusEntry, Intent, Split};

const PARTS: [&str; 24] = [
    "play", "video", "list", "parse", "xml", "stream", "buffer", "read", "write", "file", "user",
    "account", "session", "token", "cache", "index", "query", "result", "node", "tree", "graph",
    "edge", "config", "value",
];

const WORDS: [&str; 24] = [
    "returns", "sets", "creates", "the", "given", "current", "new", "value", "list", "item",
    "stream", "file", "checks", "whether", "is", "valid", "reads", "writes", "data", "from",
    "into", "each", "element", "cache",
];

fn part(i: usize) -> &'static str {
    PARTS[i % PARTS.len()]
}

/// Java-like method text built from index arithmetic, so fixtures are stable.
pub fn code(i: usize) -> String {
    let (a, b, c, d) = (part(i), part(i / 3 + 1), part(i / 7 + 5), part(i * 13 + 2));
    format!(
        "public {b}Result {a}{}({c}Config {d}) {{ if ({d} == null) return null; return this.{c}.{a}({d}); }}",
        capitalize(b)
    )
}

pub fn comment(i: usize) -> String {
    let words: Vec<&str> = (0..9)
        .map(|k| WORDS[(i * 7 + k * 5 + k * k) % WORDS.len()])
        .collect();
    words.join(" ")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_ascii_uppercase().to_string() + c.as_str())
        .unwrap_or_default()
}

/// `n` train entries with intents cycling over the five targets.
pub fn corpus(n: usize) -> Corpus {
    let entries = (0..n)
        .map(|i| CorpusEntry {
            id: format!("b{i:06}"),
            code: code(i),
            comment: comment(i),
            intent: Intent::TARGETS[i % 5],
            split: Split::Train,
        })
        .collect();
    Corpus::new("bench", entries).expect("unique ids")
}
