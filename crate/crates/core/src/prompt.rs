//! Intent-conditioned completion prompts.
//!
//! Layout (bit-exact):
//!
//! ```text
//! # <language>
//! # <intent instruction>
//! <demo code>
//! # Comment: <demo comment>
//! ###
//! ...
//! <query code>
//! # Comment:
//! ```
//!
//! There is no trailing newline after the final `# Comment:` cue.

use serde::{Deserialize, Serialize};

use crate::corpus::Intent;
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_LIMIT: usize = 8000;
pub const DELIMITER: &str = "###";
pub const COMMENT_CUE: &str = "# Comment:";

/// Instruction line for a target intent.
pub fn intent_instruction(intent: Intent) -> Result<&'static str> {
    Ok(match intent {
        Intent::What => "Describe the functionality of the method",
        Intent::Why => "Explain the reason why the method is provided or the design rationale of the method",
        Intent::HowToUse => "Describe the usage or the expected set-up of using the method",
        Intent::HowItIsDone => "Describe the implementation details of the method",
        Intent::Property => "Assert properties of the method including pre-conditions or post-conditions of the method",
        Intent::Others => return Err(Error::ExcludedIntent(intent)),
    })
}

/// Byte-length heuristic: `ceil(bytes / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    estimate_bytes(text.len())
}

fn estimate_bytes(bytes: usize) -> usize {
    bytes.div_ceil(4)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub code: String,
    pub comment: String,
}

impl Demonstration {
    pub fn new(code: impl Into<String>, comment: impl Into<String>) -> Self {
        Demonstration {
            code: code.into(),
            comment: comment.into(),
        }
    }

    fn render(&self) -> String {
        format!(
            "{}\n{COMMENT_CUE} {}\n{DELIMITER}\n",
            self.code, self.comment
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptSpec {
    pub intent: Intent,
    pub language_name: String,
    /// Least relevant first; the last demonstration sits next to the query.
    pub demonstrations: Vec<Demonstration>,
    pub query_code: String,
    pub window_limit: usize,
}

impl PromptSpec {
    pub fn new(
        intent: Intent,
        demonstrations: Vec<Demonstration>,
        query_code: impl Into<String>,
    ) -> Self {
        PromptSpec {
            intent,
            language_name: "Java".into(),
            demonstrations,
            query_code: query_code.into(),
            window_limit: DEFAULT_WINDOW_LIMIT,
        }
    }

    pub fn with_window_limit(mut self, limit: usize) -> Self {
        self.window_limit = limit;
        self
    }

    fn validate(&self) -> Result<()> {
        if !self.intent.is_target() {
            return Err(Error::ExcludedIntent(self.intent));
        }
        if self.window_limit == 0 {
            return Err(Error::Config("window_limit must be positive".into()));
        }
        if self.query_code.is_empty() {
            return Err(Error::Config("query code must not be empty".into()));
        }
        if self
            .demonstrations
            .iter()
            .any(|d| d.code.is_empty() || d.comment.is_empty())
        {
            return Err(Error::Config(
                "demonstrations need non-empty code and comment".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub shots_used: usize,
    pub estimated_tokens: usize,
}

/// Renders the prompt, dropping demonstrations from the front of the list
/// until the estimate fits `window_limit`.
pub fn build_prompt(spec: &PromptSpec) -> Result<RenderedPrompt> {
    spec.validate()?;
    let header = format!(
        "# {}\n# {}\n",
        spec.language_name,
        intent_instruction(spec.intent)?
    );
    let query = format!("{}\n{COMMENT_CUE}", spec.query_code);
    let demos: Vec<String> = spec
        .demonstrations
        .iter()
        .map(Demonstration::render)
        .collect();

    let fixed = header.len() + query.len();
    if estimate_bytes(fixed) > spec.window_limit {
        return Err(Error::PromptTooLarge {
            needed: estimate_bytes(fixed),
            limit: spec.window_limit,
        });
    }
    let mut total = fixed + demos.iter().map(String::len).sum::<usize>();
    let mut skip = 0;
    while estimate_bytes(total) > spec.window_limit {
        total -= demos[skip].len();
        skip += 1;
    }

    let mut text = String::with_capacity(total);
    text.push_str(&header);
    for d in &demos[skip..] {
        text.push_str(d);
    }
    text.push_str(&query);
    debug_assert_eq!(text.len(), total);
    Ok(RenderedPrompt {
        estimated_tokens: estimate_tokens(&text),
        shots_used: demos.len() - skip,
        text,
    })
}

/// Recovers the query code from a rendered prompt: the text after the last
/// delimiter line (or after the two header lines when there is none), minus
/// the trailing comment cue.
pub fn extract_query(prompt: &str) -> &str {
    let body = prompt.strip_suffix(COMMENT_CUE).unwrap_or(prompt);
    let body = body.strip_suffix('\n').unwrap_or(body);
    let delim = format!("\n{DELIMITER}\n");
    if let Some(pos) = body.rfind(&delim) {
        return &body[pos + delim.len()..];
    }
    let mut rest = body;
    for _ in 0..2 {
        if rest.starts_with('#') {
            rest = rest.split_once('\n').map_or("", |(_, r)| r);
        }
    }
    rest
}

/// Recovers the demonstrations embedded in a rendered prompt, in prompt
/// order. Inverse of the demonstration layout used by [`build_prompt`].
pub fn extract_demonstrations(prompt: &str) -> Vec<Demonstration> {
    let delim = format!("\n{DELIMITER}\n");
    let Some(last) = prompt.rfind(&delim) else {
        return Vec::new();
    };
    // Skip the two header lines.
    let mut body = &prompt[..last + delim.len()];
    for _ in 0..2 {
        body = body.split_once('\n').map_or("", |(_, r)| r);
    }
    let cue = format!("\n{COMMENT_CUE} ");
    body.split_inclusive(&delim)
        .filter_map(|chunk| {
            let chunk = chunk.strip_suffix(&delim)?;
            let (code, comment) = chunk.rsplit_once(&cue)?;
            Some(Demonstration::new(code, comment))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instructions_are_verbatim() {
        assert_eq!(
            intent_instruction(Intent::What).unwrap(),
            "Describe the functionality of the method"
        );
        assert_eq!(
            intent_instruction(Intent::HowItIsDone).unwrap(),
            "Describe the implementation details of the method"
        );
        assert!(intent_instruction(Intent::Others).is_err());
    }

    #[test]
    fn estimator() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("12345678"), 2);
        assert_eq!(estimate_tokens("123456789"), 3);
    }

    #[test]
    fn zero_shot_layout() {
        let p = build_prompt(&PromptSpec::new(Intent::What, vec![], "void f() {}")).unwrap();
        assert_eq!(
            p.text,
            "# Java\n# Describe the functionality of the method\nvoid f() {}\n# Comment:"
        );
        assert_eq!(p.shots_used, 0);
        assert!(!p.text.contains("###"));
        assert_eq!(extract_query(&p.text), "void f() {}");
    }

    #[test]
    fn few_shot_layout() {
        let demos = vec![
            Demonstration::new("int a() {}", "Returns a."),
            Demonstration::new("int b() {}", "Returns b."),
        ];
        let p = build_prompt(&PromptSpec::new(Intent::Why, demos.clone(), "int c() {}")).unwrap();
        assert_eq!(
            p.text,
            "# Java\n# Explain the reason why the method is provided or the design rationale of the method\n\
             int a() {}\n# Comment: Returns a.\n###\n\
             int b() {}\n# Comment: Returns b.\n###\n\
             int c() {}\n# Comment:"
        );
        assert_eq!(p.shots_used, 2);
        assert_eq!(extract_query(&p.text), "int c() {}");
        assert_eq!(extract_demonstrations(&p.text), demos);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(build_prompt(&PromptSpec::new(Intent::Others, vec![], "x")).is_err());
        assert!(
            build_prompt(&PromptSpec::new(Intent::What, vec![], "x").with_window_limit(0)).is_err()
        );
        let big = "x".repeat(400);
        assert!(matches!(
            build_prompt(&PromptSpec::new(Intent::What, vec![], big).with_window_limit(50)),
            Err(Error::PromptTooLarge { .. })
        ));
    }
}
