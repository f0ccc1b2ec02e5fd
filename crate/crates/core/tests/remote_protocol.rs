//! Wire-format, retry and credential-handling checks against a local double.

mod common;

use std::time::Duration;

use ccgen_core::llm::{build_backend, BackendSpec, SamplingParams};
use ccgen_core::prompt::{build_prompt, PromptSpec};
use ccgen_core::retrieval::{embed, Embedder, EmbedderSpec, TextKind};
use ccgen_core::{Error, Intent, RateLimit, RetryPolicy};
use common::capture_log;
use common::http_double::HttpDouble;

const SECRET: &str = "sk-test-7f3a9c1d2e";

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_retries: 3,
        initial_backoff_ms: 20,
        timeout_ms: 5_000,
    }
}

fn remote_spec(url: &str, env: &str) -> BackendSpec {
    std::env::set_var(env, SECRET);
    BackendSpec::RemoteCompletion {
        base_url: format!("{url}/v1"),
        model: "code-model".into(),
        api_key_env: env.into(),
        retry: fast_retry(),
        rate_limit: RateLimit::default(),
    }
}

fn prompt() -> ccgen_core::RenderedPrompt {
    build_prompt(&PromptSpec::new(Intent::What, vec![], "void f() {}")).unwrap()
}

fn choices(texts: &[&str]) -> String {
    let items: Vec<String> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            format!(
                r#"{{"text":{},"index":{i}}}"#,
                serde_json::to_string(t).unwrap()
            )
        })
        .collect();
    format!(r#"{{"choices":[{}]}}"#, items.join(","))
}

fn assert_no_secret(text: &str) {
    assert!(!text.contains(SECRET), "credential leaked: {text}");
}

#[test]
fn completion_request_is_bit_exact() {
    capture_log::install();
    let double = HttpDouble::scripted(vec![(
        200,
        choices(&[" Returns f.\nextra", " Does f. ###", "  f  "]),
    )]);
    let backend = build_backend(&remote_spec(&double.url, "CCGEN_KEY_A")).unwrap();
    let params = SamplingParams {
        n_samples: 3,
        ..SamplingParams::default()
    };
    let out = backend.complete(&prompt(), &params).unwrap();
    let texts: Vec<_> = out.iter().map(|c| c.text.as_str()).collect();
    assert_eq!(texts, ["Returns f.", "Does f.", "f"]);
    assert_eq!(
        out.iter().map(|c| c.sample_index).collect::<Vec<_>>(),
        [1, 2, 3]
    );

    let reqs = double.requests();
    assert_eq!(reqs.len(), 1);
    let r = &reqs[0];
    assert_eq!(r.method, "POST");
    assert_eq!(r.path, "/v1/completions");
    assert_eq!(
        r.header("Authorization"),
        Some(format!("Bearer {SECRET}").as_str())
    );
    assert_eq!(r.header("Content-Type"), Some("application/json"));
    let expected = format!(
        r####"{{"model":"code-model","prompt":{},"temperature":0.5,"n":3,"max_tokens":64,"stop":["\n","###"]}}"####,
        serde_json::to_string(&prompt().text).unwrap()
    );
    assert_eq!(r.body, expected);
    for line in capture_log::lines() {
        assert_no_secret(&line);
    }
}

#[test]
fn completion_retries_transient_statuses_with_backoff() {
    capture_log::install();
    let double = HttpDouble::scripted(vec![
        (429, "{}".into()),
        (503, "{}".into()),
        (200, choices(&["ok"])),
    ]);
    let backend = build_backend(&remote_spec(&double.url, "CCGEN_KEY_B")).unwrap();
    let params = SamplingParams {
        n_samples: 1,
        ..SamplingParams::default()
    };
    let out = backend.complete(&prompt(), &params).unwrap();
    assert_eq!(out[0].text, "ok");
    let reqs = double.requests();
    assert_eq!(reqs.len(), 3);
    // 20 ms then 40 ms.
    assert!(reqs[1].at.duration_since(reqs[0].at) >= Duration::from_millis(20));
    assert!(reqs[2].at.duration_since(reqs[1].at) >= Duration::from_millis(40));
    assert!(reqs.windows(2).all(|w| w[0].body == w[1].body));
}

#[test]
fn completion_gives_up_after_three_retries() {
    capture_log::install();
    let double = HttpDouble::scripted(vec![(500, "{}".into())]);
    let backend = build_backend(&remote_spec(&double.url, "CCGEN_KEY_C")).unwrap();
    let err = backend
        .complete(&prompt(), &SamplingParams::default())
        .unwrap_err();
    assert!(
        matches!(
            err,
            Error::HttpStatus {
                status: 500,
                attempts: 4,
                ..
            }
        ),
        "{err}"
    );
    assert_eq!(double.requests().len(), 4);
    assert_no_secret(&err.to_string());
    assert_no_secret(&format!("{err:?}"));
}

#[test]
fn auth_failure_is_fatal_and_redacted() {
    capture_log::install();
    for status in [401, 403] {
        let double =
            HttpDouble::scripted(vec![(status, format!(r#"{{"error":"bad key {SECRET}"}}"#))]);
        let backend = build_backend(&remote_spec(&double.url, "CCGEN_KEY_D")).unwrap();
        let err = backend
            .complete(&prompt(), &SamplingParams::default())
            .unwrap_err();
        assert!(matches!(err, Error::Auth { .. }), "{err}");
        assert_eq!(double.requests().len(), 1);
        assert_no_secret(&err.to_string());
        assert_no_secret(&format!("{err:?}"));
    }
    for line in capture_log::lines() {
        assert_no_secret(&line);
    }
}

#[test]
fn malformed_completion_body_is_an_error() {
    let double = HttpDouble::scripted(vec![(200, r#"{"data":[]}"#.into())]);
    let backend = build_backend(&remote_spec(&double.url, "CCGEN_KEY_E")).unwrap();
    let err = backend
        .complete(&prompt(), &SamplingParams::default())
        .unwrap_err();
    assert!(matches!(err, Error::MalformedResponse { .. }), "{err}");

    let double = HttpDouble::scripted(vec![(200, choices(&["only one"]))]);
    let backend = build_backend(&remote_spec(&double.url, "CCGEN_KEY_E")).unwrap();
    assert!(backend
        .complete(&prompt(), &SamplingParams::default())
        .is_err());
}

#[test]
fn rejected_batch_falls_back_to_single_requests() {
    let double = HttpDouble::with(Box::new(|_, req| {
        if req.body.contains(r#""n":1,"#) {
            (200, choices(&["single"]))
        } else {
            (400, r#"{"error":"n not supported"}"#.into())
        }
    }));
    let backend = build_backend(&remote_spec(&double.url, "CCGEN_KEY_F")).unwrap();
    let params = SamplingParams {
        n_samples: 3,
        ..SamplingParams::default()
    };
    let out = backend.complete(&prompt(), &params).unwrap();
    assert_eq!(out.len(), 3);
    assert_eq!(double.requests().len(), 4);
}

#[test]
fn missing_credential_names_variable_only() {
    let spec = BackendSpec::RemoteCompletion {
        base_url: "http://127.0.0.1:9".into(),
        model: "m".into(),
        api_key_env: "CCGEN_DEFINITELY_UNSET".into(),
        retry: fast_retry(),
        rate_limit: RateLimit::default(),
    };
    let err = build_backend(&spec).err().unwrap();
    assert!(err.to_string().contains("CCGEN_DEFINITELY_UNSET"));
}

fn embed_spec(url: &str) -> EmbedderSpec {
    let mut spec = EmbedderSpec::remote(url);
    spec.retry = fast_retry();
    spec
}

#[test]
fn embedding_request_is_bit_exact() {
    let double = HttpDouble::scripted(vec![(
        200,
        r#"{"vectors":[[1,0],[0.5,0.5]],"dim":2}"#.into(),
    )]);
    let out = embed(
        &embed_spec(&double.url),
        &["int a;", "say \"hi\""],
        TextKind::Code,
    )
    .unwrap();
    assert_eq!(out[0].components, [1.0, 0.0]);
    assert_eq!(out[1].components, [0.5, 0.5]);
    let reqs = double.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].path, "/embed");
    assert_eq!(reqs[0].body, r#"{"texts":["int a;","say \"hi\""]}"#);
    assert_eq!(reqs[0].header("Authorization"), None);
}

#[test]
fn embedding_retries_then_errors_with_status() {
    let double = HttpDouble::scripted(vec![
        (502, "".into()),
        (200, r#"{"vectors":[[1]],"dim":1}"#.into()),
    ]);
    assert_eq!(
        embed(&embed_spec(&double.url), &["x"], TextKind::Code)
            .unwrap()
            .len(),
        1
    );
    assert_eq!(double.requests().len(), 2);

    let double = HttpDouble::scripted(vec![(503, "".into())]);
    let err = embed(&embed_spec(&double.url), &["x"], TextKind::Code).unwrap_err();
    assert!(
        matches!(err, Error::HttpStatus { status: 503, .. }),
        "{err}"
    );
    assert_eq!(double.requests().len(), 4);

    let double = HttpDouble::scripted(vec![(404, "".into())]);
    assert!(matches!(
        embed(&embed_spec(&double.url), &["x"], TextKind::Code),
        Err(Error::HttpStatus { status: 404, .. })
    ));
    assert_eq!(double.requests().len(), 1);
}

#[test]
fn embedding_shape_errors() {
    let double = HttpDouble::scripted(vec![(200, r#"{"vectors":[[1,2]],"dim":2}"#.into())]);
    assert!(matches!(
        embed(&embed_spec(&double.url), &["a", "b"], TextKind::Code),
        Err(Error::MalformedResponse { .. })
    ));
    let double = HttpDouble::scripted(vec![(200, r#"{"vectors":[[1,2,3]],"dim":2}"#.into())]);
    assert!(embed(&embed_spec(&double.url), &["a"], TextKind::Code).is_err());
}

#[test]
fn embedding_unreachable_reports_transport_cause() {
    let mut spec = embed_spec("http://127.0.0.1:9");
    spec.retry.initial_backoff_ms = 1;
    let err = embed(&spec, &["x"], TextKind::Code).unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 4, .. }), "{err}");
}

#[test]
fn embedding_batches_preserve_order() {
    let double = HttpDouble::with(Box::new(|_, req| {
        let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
        let vectors: Vec<Vec<f64>> = body["texts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| vec![t.as_str().unwrap().parse::<f64>().unwrap(), 1.0])
            .collect();
        (
            200,
            serde_json::json!({"vectors": vectors, "dim": 2}).to_string(),
        )
    }));
    let mut spec = embed_spec(&double.url);
    spec.batch_size = 3;
    spec.rate_limit.max_in_flight = 2;
    let texts: Vec<String> = (0..10).map(|i| i.to_string()).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let embedder = Embedder::from_spec(&spec).unwrap();
    let out = embedder.embed(&refs, TextKind::Code).unwrap();
    let firsts: Vec<f64> = out.iter().map(|v| v.components[0]).collect();
    assert_eq!(firsts, (0..10).map(f64::from).collect::<Vec<_>>());
    assert_eq!(double.requests().len(), 4);
}
