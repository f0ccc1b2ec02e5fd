//! Labeled code–comment corpora.
//!
//! A corpus file is UTF-8 JSON Lines: one object per line with the string
//! fields `id`, `code`, `comment`, `intent` and `split`. Field order does not
//! matter; unknown fields are ignored with a warning. Blank lines are skipped
//! but still counted for line numbers.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Comment intent taxonomy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Intent {
    What,
    Why,
    HowToUse,
    HowItIsDone,
    Property,
    Others,
}

impl Intent {
    pub const ALL: [Intent; 6] = [
        Intent::What,
        Intent::Why,
        Intent::HowToUse,
        Intent::HowItIsDone,
        Intent::Property,
        Intent::Others,
    ];

    /// The five intents comments are generated for.
    pub const TARGETS: [Intent; 5] = [
        Intent::What,
        Intent::Why,
        Intent::HowToUse,
        Intent::HowItIsDone,
        Intent::Property,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Intent::What => "what",
            Intent::Why => "why",
            Intent::HowToUse => "how-to-use",
            Intent::HowItIsDone => "how-it-is-done",
            Intent::Property => "property",
            Intent::Others => "others",
        }
    }

    pub fn is_target(self) -> bool {
        self != Intent::Others
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Intent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Intent::ALL
            .into_iter()
            .find(|i| i.label() == s)
            .ok_or_else(|| Error::UnknownIntent(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::UnknownSplit(other.to_string())),
        }
    }
}

/// One labeled code–comment pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub code: String,
    pub comment: String,
    pub intent: Intent,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    pub entries: Vec<CorpusEntry>,
}

const KNOWN_FIELDS: [&str; 5] = ["id", "code", "comment", "intent", "split"];

impl Corpus {
    /// Builds a corpus from entries, enforcing the entry invariants.
    pub fn new(name: impl Into<String>, entries: Vec<CorpusEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (idx, entry) in entries.iter().enumerate() {
            let line = idx + 1;
            for (field, value) in [("code", &entry.code), ("comment", &entry.comment)] {
                if value.trim().is_empty() {
                    return Err(Error::Record {
                        line,
                        field: field.to_string(),
                        message: "must not be empty".into(),
                    });
                }
            }
            if entry.id.is_empty() {
                return Err(Error::Record {
                    line,
                    field: "id".into(),
                    message: "must not be empty".into(),
                });
            }
            if !seen.insert(entry.id.as_str()) {
                return Err(Error::DuplicateId {
                    line,
                    id: entry.id.clone(),
                });
            }
        }
        Ok(Corpus {
            name: name.into(),
            entries,
        })
    }

    /// Parses JSON Lines text. Errors name the 1-based line and field.
    pub fn parse_jsonl(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let entry = parse_record(line, raw)?;
            if !seen.insert(entry.id.clone()) {
                return Err(Error::DuplicateId { line, id: entry.id });
            }
            entries.push(entry);
        }
        Ok(Corpus {
            name: name.into(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CorpusEntry> {
        self.entries.iter()
    }

    pub fn get(&self, id: &str) -> Option<&CorpusEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Entries matching both `intent` and `split`, in corpus order.
    pub fn filter(&self, intent: Intent, split: Split) -> Corpus {
        Corpus {
            name: format!("{}[{}/{}]", self.name, intent, split),
            entries: self
                .entries
                .iter()
                .filter(|e| e.intent == intent && e.split == split)
                .cloned()
                .collect(),
        }
    }

    /// Entries of one split, all intents.
    pub fn split(&self, split: Split) -> Corpus {
        Corpus {
            name: format!("{}[{}]", self.name, split),
            entries: self
                .entries
                .iter()
                .filter(|e| e.split == split)
                .cloned()
                .collect(),
        }
    }

    /// `k` distinct entries drawn uniformly without replacement.
    ///
    /// See [`sample_indices`] for the pinned generator.
    pub fn sample_random(&self, k: usize, seed: u64) -> Vec<CorpusEntry> {
        sample_indices(self.len(), k, seed)
            .into_iter()
            .map(|i| self.entries[i].clone())
            .collect()
    }

    /// Serializes back to JSON Lines in entry order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("entry serializes"));
            out.push('\n');
        }
        out
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a CorpusEntry;
    type IntoIter = std::slice::Iter<'a, CorpusEntry>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

/// Loads a JSON Lines corpus file; the corpus is named after the file stem.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Corpus::parse_jsonl(name, &text)
}

fn parse_record(line: usize, raw: &str) -> Result<CorpusEntry> {
    let value: Value = serde_json::from_str(raw).map_err(|e| Error::Record {
        line,
        field: "<record>".into(),
        message: format!("invalid JSON: {e}"),
    })?;
    let Value::Object(map) = value else {
        return Err(Error::Record {
            line,
            field: "<record>".into(),
            message: "expected a JSON object".into(),
        });
    };
    for key in map.keys() {
        if !KNOWN_FIELDS.contains(&key.as_str()) {
            log::warn!("line {line}: ignoring unknown field `{key}`");
        }
    }
    let field = |name: &str| -> Result<&str> {
        match map.get(name) {
            Some(Value::String(s)) => Ok(s.as_str()),
            Some(_) => Err(Error::Record {
                line,
                field: name.into(),
                message: "expected a string".into(),
            }),
            None => Err(Error::Record {
                line,
                field: name.into(),
                message: "missing".into(),
            }),
        }
    };
    let non_empty = |name: &str| -> Result<String> {
        let value = field(name)?;
        if value.trim().is_empty() {
            return Err(Error::Record {
                line,
                field: name.into(),
                message: "must not be empty".into(),
            });
        }
        Ok(value.to_string())
    };

    let id = non_empty("id")?;
    let code = non_empty("code")?;
    let comment = non_empty("comment")?;
    let intent = field("intent")?
        .parse::<Intent>()
        .map_err(|e| Error::Record {
            line,
            field: "intent".into(),
            message: e.to_string(),
        })?;
    let split = field("split")?
        .parse::<Split>()
        .map_err(|e| Error::Record {
            line,
            field: "split".into(),
            message: e.to_string(),
        })?;
    Ok(CorpusEntry {
        id,
        code,
        comment,
        intent,
        split,
    })
}

/// Draws `min(k, n)` distinct indices from `0..n`.
///
/// Generator: ChaCha8 seeded with `seed_from_u64(seed)` (rand_core 0.6
/// semantics). Selection is a partial Fisher–Yates shuffle; position `i`
/// swaps with `i + uniform_below(n - i)`, where `uniform_below` rejects
/// `next_u64` draws under `bound.wrapping_neg() % bound` and reduces the
/// rest modulo `bound`. The returned order is the draw order.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let k = k.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + uniform_below(&mut rng, (n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

fn uniform_below(rng: &mut impl RngCore, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let x = rng.next_u64();
        if x >= threshold {
            return x % bound;
        }
    }
}
