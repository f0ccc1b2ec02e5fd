//! Shared HTTP plumbing for the remote embedding and completion clients:
//! retry with exponential backoff, an in-flight limit and a per-minute
//! request budget.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Returns an error when `NO_NETWORK=1` is set in the environment.
pub fn ensure_network_allowed(what: &'static str) -> Result<()> {
    if std::env::var("NO_NETWORK").is_ok_and(|v| v == "1") {
        return Err(Error::NetworkDisabled(what));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff_ms: 500,
            timeout_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): `initial · 2^retry`.
    pub fn backoff(&self, retry: u32) -> Duration {
        Duration::from_millis(
            self.initial_backoff_ms
                .saturating_mul(1u64 << retry.min(20)),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateLimit {
    pub max_in_flight: usize,
    pub requests_per_minute: Option<u32>,
}

impl Default for RateLimit {
    fn default() -> Self {
        RateLimit {
            max_in_flight: 4,
            requests_per_minute: None,
        }
    }
}

/// Blocks callers until a request slot is free under both limits.
#[derive(Debug)]
pub struct Throttle {
    limit: RateLimit,
    state: Mutex<ThrottleState>,
    cv: Condvar,
}

#[derive(Debug, Default)]
struct ThrottleState {
    in_flight: usize,
    started: VecDeque<Instant>,
}

pub struct Permit<'a> {
    throttle: &'a Throttle,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut state = self.throttle.state.lock().unwrap();
        state.in_flight -= 1;
        self.throttle.cv.notify_one();
    }
}

impl Throttle {
    pub fn new(limit: RateLimit) -> Self {
        Throttle {
            limit,
            state: Mutex::new(ThrottleState::default()),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        const WINDOW: Duration = Duration::from_secs(60);
        let max_in_flight = self.limit.max_in_flight.max(1);
        let mut state = self.state.lock().unwrap();
        loop {
            let now = Instant::now();
            while state
                .started
                .front()
                .is_some_and(|t| now.duration_since(*t) >= WINDOW)
            {
                state.started.pop_front();
            }
            let budget_wait = match self.limit.requests_per_minute {
                Some(rpm) if state.started.len() >= rpm.max(1) as usize => {
                    Some(WINDOW - now.duration_since(state.started[0]))
                }
                _ => None,
            };
            if state.in_flight < max_in_flight && budget_wait.is_none() {
                state.in_flight += 1;
                state.started.push_back(now);
                return Permit { throttle: self };
            }
            state = match budget_wait {
                Some(wait) => self.cv.wait_timeout(state, wait).unwrap().0,
                None => self.cv.wait(state).unwrap(),
            };
        }
    }
}

/// JSON-over-HTTP client with retries. Never records request headers, so a
/// bearer credential cannot leak into errors or logs.
#[derive(Debug)]
pub(crate) struct JsonClient {
    service: &'static str,
    agent: ureq::Agent,
    retry: RetryPolicy,
    throttle: Throttle,
}

pub(crate) enum Reply {
    Ok(String),
    /// Non-success status that is not retried.
    Status(u16),
}

impl JsonClient {
    pub(crate) fn new(service: &'static str, retry: RetryPolicy, limit: RateLimit) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_millis(retry.timeout_ms)))
            .build();
        JsonClient {
            service,
            agent: config.into(),
            retry,
            throttle: Throttle::new(limit),
        }
    }

    pub(crate) fn service(&self) -> &'static str {
        self.service
    }

    /// POSTs `body` verbatim. 429 and 5xx responses and transport failures
    /// are retried; any other non-200 status is returned to the caller.
    pub(crate) fn post(&self, url: &str, body: &str, bearer: Option<&str>) -> Result<Reply> {
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            log::debug!("{}: POST {url} (attempt {attempt})", self.service);
            let outcome = {
                let _permit = self.throttle.acquire();
                let mut req = self
                    .agent
                    .post(url)
                    .header("Content-Type", "application/json");
                if let Some(token) = bearer {
                    req = req.header("Authorization", format!("Bearer {token}"));
                }
                req.send(body)
            };
            let retry_left = attempt <= self.retry.max_retries;
            match outcome {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    if status == 200 {
                        return Ok(Reply::Ok(text));
                    }
                    let transient = status == 429 || (500..600).contains(&status);
                    if !transient {
                        return Ok(Reply::Status(status));
                    }
                    if !retry_left {
                        return Err(Error::HttpStatus {
                            service: self.service,
                            status,
                            attempts: attempt,
                        });
                    }
                    log::warn!("{}: HTTP {status}, retrying", self.service);
                }
                Err(err) => {
                    if !retry_left {
                        return Err(Error::Transport {
                            service: self.service,
                            attempts: attempt,
                            cause: err.to_string(),
                        });
                    }
                    log::warn!("{}: transport error ({err}), retrying", self.service);
                }
            }
            std::thread::sleep(self.retry.backoff(attempt - 1));
        }
    }
}
