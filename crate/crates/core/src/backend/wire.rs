//! HTTP client for completion endpoints that return per-token
//! log-probabilities (`POST {base_url}/completions`).

use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Backend, CallOptions, Completion, EndpointConfig, InFlightLimit, TokenLogprob};
use crate::error::BackendError;

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<u32>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
}

enum Attempt {
    Done(Completion),
    Retry(String),
    Fail(BackendError),
}

pub struct WireBackend {
    id: String,
    cfg: EndpointConfig,
    agent: ureq::Agent,
    limit: Option<InFlightLimit>,
}

impl WireBackend {
    pub fn new(id: impl Into<String>, cfg: EndpointConfig) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(cfg.timeout())).build().into();
        WireBackend { id: id.into(), cfg, agent, limit: None }
    }

    pub fn with_limit(mut self, limit: InFlightLimit) -> Self {
        self.limit = Some(limit);
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    fn api_key(&self) -> Result<String, BackendError> {
        std::env::var(&self.cfg.api_key_env)
            .map_err(|_| BackendError::Auth(format!("environment variable {} is not set", self.cfg.api_key_env)))
    }

    fn url(&self) -> String {
        format!("{}/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &str, key: &str, want_logprobs: bool) -> Attempt {
        let _guard = self.limit.as_ref().map(InFlightLimit::acquire);
        let started = Instant::now();
        let sent = self
            .agent
            .post(&self.url())
            .header("Authorization", &format!("Bearer {key}"))
            .header("Content-Type", "application/json")
            .send(body);
        let mut resp = match sent {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(redact(&e.to_string(), key)),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(redact(&e.to_string(), key)),
        };
        match status {
            200..=299 => {}
            401 | 403 => return Attempt::Fail(BackendError::Auth(format!("HTTP {status}"))),
            408 | 429 | 500..=599 => return Attempt::Retry(format!("HTTP {status}")),
            _ => {
                let snippet: String = redact(&text, key).chars().take(200).collect();
                return Attempt::Fail(BackendError::Protocol(format!("HTTP {status}: {snippet}")));
            }
        }
        match parse_response(&text, want_logprobs) {
            Ok((text, token_logprobs)) => Attempt::Done(Completion {
                text,
                token_logprobs,
                model_id: self.cfg.model_name.clone(),
                latency_ms: started.elapsed().as_millis() as u64,
            }),
            Err(e) => Attempt::Fail(e),
        }
    }
}

fn redact(message: &str, key: &str) -> String {
    if key.is_empty() {
        message.to_string()
    } else {
        message.replace(key, "[redacted]")
    }
}

fn parse_response(body: &str, want_logprobs: bool) -> Result<(String, Vec<TokenLogprob>), BackendError> {
    let parsed: CompletionResponse =
        serde_json::from_str(body).map_err(|e| BackendError::Protocol(format!("malformed completion response: {e}")))?;
    let choice = parsed.choices.into_iter().next().ok_or_else(|| BackendError::Protocol("completion response has no choices".into()))?;
    let mut logprobs = Vec::new();
    if want_logprobs {
        match choice.logprobs {
            Some(lp) => {
                for (i, lp_value) in lp.token_logprobs.into_iter().enumerate() {
                    let Some(logprob) = lp_value else { continue };
                    if logprob > 0.0 || logprob.is_nan() {
                        return Err(BackendError::Protocol(format!("log-probability {logprob} is not <= 0")));
                    }
                    let token = lp.tokens.get(i).cloned().unwrap_or_default();
                    logprobs.push(TokenLogprob { token, logprob });
                }
            }
            None => log::warn!("endpoint returned no log-probabilities; confidence will be 0"),
        }
    }
    Ok((choice.text, logprobs))
}

impl Backend for WireBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str, opts: &CallOptions) -> Result<Completion, BackendError> {
        let key = self.api_key()?;
        let body = serde_json::to_string(&CompletionRequest {
            model: &self.cfg.model_name,
            prompt,
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_tokens,
            logprobs: opts.want_logprobs.then_some(5),
        })
        .map_err(|e| BackendError::Protocol(e.to_string()))?;

        let attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            log::debug!("{}: POST {} model={} attempt {}/{}", self.id, self.url(), self.cfg.model_name, attempt + 1, attempts);
            match self.attempt(&body, &key, opts.want_logprobs) {
                Attempt::Done(c) => return Ok(c),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(reason) => {
                    log::warn!("{}: transient failure ({reason})", self.id);
                    last = reason;
                    if attempt + 1 < attempts {
                        let backoff = self.cfg.retry_backoff_ms.saturating_mul(1 << attempt.min(16));
                        thread::sleep(Duration::from_millis(backoff));
                    }
                }
            }
        }
        Err(BackendError::Transport { attempts, message: last })
    }
}
