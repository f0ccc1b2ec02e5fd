//! Code and comment tokenization.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

const RESERVED_WORDS_DATA: &str = include_str!("../data/java_reserved_words.txt");

/// The pinned Java reserved-word list (keywords plus `true`, `false`, `null`).
pub fn java_reserved_words() -> &'static BTreeSet<&'static str> {
    static WORDS: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| {
        RESERVED_WORDS_DATA
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

pub fn is_reserved(word: &str) -> bool {
    java_reserved_words().contains(word)
}

/// Normalized lexical fingerprint of a code snippet.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubTokenSet {
    pub tokens: BTreeSet<String>,
    pub source_id: Option<String>,
}

impl SubTokenSet {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SubTokenSet {
            tokens: tokens.into_iter().map(Into::into).collect(),
            source_id: None,
        }
    }

    pub fn with_source(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }
}

/// Ordered lowercase words of a comment.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSequence {
    pub words: Vec<String>,
}

impl WordSequence {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        WordSequence {
            words: words.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.words
    }

    /// Distinct words as a set, for Jaccard comparisons.
    pub fn to_set(&self) -> SubTokenSet {
        SubTokenSet::from_tokens(self.words.iter().cloned())
    }
}

/// Splits an identifier on underscores and case boundaries, lowercasing
/// every segment.
///
/// A new segment starts at an uppercase letter that follows a lowercase
/// letter or digit, and at the last uppercase letter of an uppercase run that
/// is followed by a lowercase letter (`XMLParser` → `xml`, `parser`). Digits
/// stay with the preceding segment.
pub fn split_identifier(name: &str) -> Vec<String> {
    let mut segments = Vec::new();
    for part in name.split('_') {
        let chars: Vec<char> = part.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let cur = chars[i];
            if !cur.is_uppercase() {
                continue;
            }
            let prev = chars[i - 1];
            let after_lower = prev.is_lowercase() || prev.is_numeric();
            let acronym_end =
                prev.is_uppercase() && chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            if after_lower || acronym_end {
                segments.push(lower(&chars[start..i]));
                start = i;
            }
        }
        if start < chars.len() {
            segments.push(lower(&chars[start..]));
        }
    }
    segments.retain(|s| !s.is_empty());
    segments
}

fn lower(chars: &[char]) -> String {
    chars.iter().flat_map(|c| c.to_lowercase()).collect()
}

/// Word-like tokens of source text: maximal runs of letters, digits and
/// underscores. Runs starting with a digit (numeric literals) are dropped.
pub fn lex_words(code: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    for (pos, c) in code.char_indices() {
        match (start, is_word(c)) {
            (None, true) => start = Some(pos),
            (Some(s), false) => {
                push_word(&mut out, &code[s..pos]);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        push_word(&mut out, &code[s..]);
    }
    out
}

fn push_word<'a>(out: &mut Vec<&'a str>, word: &'a str) {
    if word.starts_with(|c: char| c.is_alphabetic() || c == '_') {
        out.push(word);
    }
}

/// Sub-token set of a code snippet.
///
/// Reserved words are removed by exact (case-sensitive) match before
/// splitting; sub-tokens that come out of splitting equal to a reserved word
/// (`getInt` → `int`) are removed as well, so the result never contains one.
pub fn code_subtokens(code: &str) -> SubTokenSet {
    let mut tokens = BTreeSet::new();
    for word in lex_words(code) {
        if is_reserved(word) {
            continue;
        }
        for sub in split_identifier(word) {
            if !is_reserved(&sub) {
                tokens.insert(sub);
            }
        }
    }
    SubTokenSet {
        tokens,
        source_id: None,
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn comment_tokens(comment: &str) -> WordSequence {
    let lowered = comment.to_lowercase();
    WordSequence {
        words: lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect(),
    }
}
