//! Brute-force reference implementations, written independently of the
//! library code paths they check.

use std::collections::BTreeSet;

/// Character-class walk that emits a boundary wherever the case rules say
/// one belongs, by looking at each adjacent pair (and the following char).
pub fn split_identifier(name: &str) -> Vec<String> {
    let chars: Vec<char> = name.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c == '_' {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if i > 0 && c.is_uppercase() && !cur.is_empty() {
            let p = chars[i - 1];
            let n = chars.get(i + 1).copied();
            let boundary = p.is_lowercase()
                || p.is_ascii_digit()
                || p.is_numeric()
                || (p.is_uppercase() && n.is_some_and(|n| n.is_lowercase()));
            if boundary {
                out.push(std::mem::take(&mut cur));
            }
        }
        cur.extend(c.to_lowercase());
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub const JAVA_RESERVED: [&str; 53] = [
    "abstract",
    "assert",
    "boolean",
    "break",
    "byte",
    "case",
    "catch",
    "char",
    "class",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extends",
    "final",
    "finally",
    "float",
    "for",
    "goto",
    "if",
    "implements",
    "import",
    "instanceof",
    "int",
    "interface",
    "long",
    "native",
    "new",
    "package",
    "private",
    "protected",
    "public",
    "return",
    "short",
    "static",
    "strictfp",
    "super",
    "switch",
    "synchronized",
    "this",
    "throw",
    "throws",
    "transient",
    "try",
    "void",
    "volatile",
    "while",
    "true",
    "false",
    "null",
];

/// Scanner that grows tokens one character at a time.
pub fn code_subtokens(code: &str) -> BTreeSet<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    for c in code.chars().chain(std::iter::once(' ')) {
        if c.is_alphanumeric() || c == '_' {
            cur.push(c);
        } else if !cur.is_empty() {
            words.push(std::mem::take(&mut cur));
        }
    }
    let mut out = BTreeSet::new();
    for w in words {
        let first = w.chars().next().unwrap();
        if !(first.is_alphabetic() || first == '_') || JAVA_RESERVED.contains(&w.as_str()) {
            continue;
        }
        for s in split_identifier(&w) {
            if !JAVA_RESERVED.contains(&s.as_str()) {
                out.insert(s);
            }
        }
    }
    out
}

/// Textbook sentence BLEU-4 with add-one smoothing for orders >= 2,
/// computed by explicit n-gram list enumeration.
pub fn bleu(c: &[String], r: &[String]) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4usize {
        if n > c.len() {
            continue;
        }
        let cg: Vec<&[String]> = c.windows(n).collect();
        let mut rg: Vec<Option<&[String]>> = if r.len() >= n {
            r.windows(n).map(Some).collect()
        } else {
            vec![]
        };
        let mut hits = 0usize;
        for g in &cg {
            if let Some(slot) = rg.iter_mut().find(|x| x.is_some_and(|x| x == *g)) {
                *slot = None;
                hits += 1;
            }
        }
        let p = if hits == 0 {
            if n == 1 {
                return 0.0;
            }
            1.0 / (cg.len() as f64 + 1.0)
        } else {
            hits as f64 / cg.len() as f64
        };
        log_sum += p.ln() / 4.0;
    }
    let bp = if c.len() < r.len() {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    } else {
        1.0
    };
    bp * log_sum.exp()
}

/// LCS by enumerating every subsequence of `a` (exponential; short inputs).
pub fn lcs_brute(a: &[String], b: &[String]) -> usize {
    assert!(a.len() <= 16);
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<&String> = (0..a.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| &a[i])
            .collect();
        if sub.len() <= best {
            continue;
        }
        let mut it = b.iter();
        if sub.iter().all(|w| it.any(|x| x == *w)) {
            best = sub.len();
        }
    }
    best
}

pub fn rouge_l(c: &[String], r: &[String]) -> f64 {
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let l = lcs_brute(c, r) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, rc) = (l / c.len() as f64, l / r.len() as f64);
    let b2 = 1.2f64 * 1.2;
    (1.0 + b2) * p * rc / (rc + b2 * p)
}

/// Enumerates every partial one-to-one exact-match alignment; returns
/// (max matches, min chunks among maximal alignments).
pub fn meteor_alignment(c: &[String], r: &[String]) -> (usize, usize) {
    fn go(
        i: usize,
        c: &[String],
        r: &[String],
        used: &mut Vec<bool>,
        pairs: &mut Vec<(usize, usize)>,
        best: &mut (usize, usize),
    ) {
        if i == c.len() {
            let m = pairs.len();
            let mut chunks = 0;
            for (k, &(ci, rj)) in pairs.iter().enumerate() {
                if k == 0 || !(pairs[k - 1].0 + 1 == ci && pairs[k - 1].1 + 1 == rj) {
                    chunks += 1;
                }
            }
            if m > best.0 || (m == best.0 && chunks < best.1) {
                *best = (m, chunks);
            }
            return;
        }
        go(i + 1, c, r, used, pairs, best);
        for j in 0..r.len() {
            if !used[j] && r[j] == c[i] {
                used[j] = true;
                pairs.push((i, j));
                go(i + 1, c, r, used, pairs, best);
                pairs.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, usize::MAX);
    go(
        0,
        c,
        r,
        &mut vec![false; r.len()],
        &mut Vec::new(),
        &mut best,
    );
    if best.0 == 0 {
        (0, 0)
    } else {
        best
    }
}

pub fn meteor(c: &[String], r: &[String]) -> f64 {
    let (m, chunks) = meteor_alignment(c, r);
    if m == 0 {
        return 0.0;
    }
    let m = m as f64;
    let (p, rc) = (m / c.len() as f64, m / r.len() as f64);
    let fmean = 10.0 * p * rc / (rc + 9.0 * p);
    fmean * (1.0 - 0.5 * (chunks as f64 / m).powi(3))
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let union: BTreeSet<_> = a.union(b).collect();
    let inter = a.iter().filter(|x| b.contains(*x)).count();
    inter as f64 / union.len() as f64
}

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot / (nu * nv)
    }
}

/// Full scan: score every entry, then sort by (score desc, position asc).
pub fn brute_rank(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
