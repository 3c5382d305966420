use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{CostLedger, Probe, ProbeKind, ProbeRequest};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL without the `/v1/...` suffix, e.g. `http://127.0.0.1:8000`.
    pub base_url: String,
    pub bearer_token: Option<String>,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub embedding_dim: Option<usize>,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            bearer_token: None,
            max_attempts: 3,
            initial_backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(30),
            max_in_flight: 8,
            embedding_dim: None,
        }
    }
}

struct InFlight {
    active: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().expect("in-flight mutex poisoned");
        while *active >= self.cap {
            active = self.freed.wait(active).expect("in-flight mutex poisoned");
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().expect("in-flight mutex poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Deserialize)]
struct LogprobsResponse {
    token_logprobs: Vec<f64>,
}

#[derive(Deserialize)]
struct MaxProbsResponse {
    max_probs: Vec<f64>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

enum Attempt {
    Done(Vec<f64>),
    Retry(String),
    Fail(Error),
}

/// JSON-over-HTTP probe client with bounded retries and an in-flight cap.
/// Every attempt, successful or not, is charged as one forward call.
pub struct HttpProbe {
    config: HttpConfig,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl HttpProbe {
    pub fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let in_flight = InFlight {
            active: Mutex::new(0),
            freed: Condvar::new(),
            cap: config.max_in_flight.max(1),
        };
        Self {
            config,
            agent,
            in_flight,
        }
    }

    fn endpoint(kind: ProbeKind) -> &'static str {
        match kind {
            ProbeKind::TargetLogprobs => "/v1/logprobs",
            ProbeKind::TokenMaxProbs => "/v1/token_max_probs",
            ProbeKind::Embed => "/v1/embed",
        }
    }

    fn attempt(&self, request: &ProbeRequest) -> Attempt {
        let url = format!(
            "{}{}",
            self.config.base_url.trim_end_matches('/'),
            Self::endpoint(request.kind)
        );
        let body = match request.kind {
            ProbeKind::Embed => json!({ "text": request.context }),
            _ => json!({ "context": request.context, "target": request.target }),
        };
        let mut call = self.agent.post(&url);
        if let Some(token) = &self.config.bearer_token {
            call = call.header("Authorization", format!("Bearer {token}"));
        }
        let response = match call.send_json(&body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status().as_u16();
        if status >= 500 {
            return Attempt::Retry(format!("server returned {status}"));
        }
        if status >= 400 {
            return Attempt::Fail(Error::Probe(format!("{url} returned {status}")));
        }
        let mut body = response.into_body();
        let parsed = match request.kind {
            ProbeKind::TargetLogprobs => body.read_json::<LogprobsResponse>().map(|r| r.token_logprobs),
            ProbeKind::TokenMaxProbs => body.read_json::<MaxProbsResponse>().map(|r| r.max_probs),
            ProbeKind::Embed => body.read_json::<EmbedResponse>().map(|r| r.vector),
        };
        match parsed {
            Ok(values) if values.is_empty() => {
                Attempt::Fail(Error::Protocol(format!("{url} returned an empty list")))
            }
            Ok(values) => Attempt::Done(values),
            Err(e) => Attempt::Fail(Error::Protocol(format!("{url}: {e}"))),
        }
    }
}

impl Probe for HttpProbe {
    fn query(&self, request: &ProbeRequest, ledger: &CostLedger) -> Result<Vec<f64>> {
        request.validate()?;
        let _permit = self.in_flight.acquire();
        let mut backoff = self.config.initial_backoff;
        let mut last = String::new();
        for attempt in 0..self.config.max_attempts.max(1) {
            if attempt > 0 {
                thread::sleep(backoff);
                backoff *= 2;
            }
            ledger.record_forward();
            match self.attempt(request) {
                Attempt::Done(values) => return Ok(values),
                Attempt::Fail(err) => return Err(err),
                Attempt::Retry(reason) => last = reason,
            }
        }
        Err(Error::Probe(format!(
            "{} failed after {} attempts: {last}",
            request.kind.as_str(),
            self.config.max_attempts.max(1)
        )))
    }

    fn embedding_dim(&self) -> Option<usize> {
        self.config.embedding_dim
    }
}
