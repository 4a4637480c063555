//! Model backends for the editor, guide and reader roles, plus the
//! confidence estimate and candidate scoring used to steer edits.

mod limit;
mod mock;
mod wire;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::metrics::inclusion_match;
use crate::prompts;

pub use limit::{InFlightGuard, InFlightLimit};
pub use mock::{MockBackend, MockFixtures, MockResponse, MockRule, PromptPattern};
pub use wire::WireBackend;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(String, f64)", into = "(String, f64)")]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
}

impl From<(String, f64)> for TokenLogprob {
    fn from((token, logprob): (String, f64)) -> Self {
        TokenLogprob { token, logprob }
    }
}

impl From<TokenLogprob> for (String, f64) {
    fn from(t: TokenLogprob) -> Self {
        (t.token, t.logprob)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub token_logprobs: Vec<TokenLogprob>,
    pub model_id: String,
    pub latency_ms: u64,
}

impl Completion {
    pub fn check(&self) -> Result<(), BackendError> {
        if let Some(t) = self.token_logprobs.iter().find(|t| t.logprob > 0.0 || t.logprob.is_nan()) {
            return Err(BackendError::Protocol(format!("log-probability {} for token {:?} is not <= 0", t.logprob, t.token)));
        }
        Ok(())
    }
}

/// Per-call knobs. `variant` numbers repeated requests for the same prompt;
/// remote models ignore it (sampling provides the variety), scripted mocks use
/// it to pick among their canned replies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CallOptions {
    pub want_logprobs: bool,
    pub variant: u32,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, prompt: &str, opts: &CallOptions) -> Result<Completion, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, prompt: &str, opts: &CallOptions) -> Result<Completion, BackendError> {
        (**self).complete(prompt, opts)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, prompt: &str, opts: &CallOptions) -> Result<Completion, BackendError> {
        (**self).complete(prompt, opts)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn complete(&self, prompt: &str, opts: &CallOptions) -> Result<Completion, BackendError> {
        (**self).complete(prompt, opts)
    }
}

fn default_max_tokens() -> u32 {
    256
}

fn default_backoff_ms() -> u64 {
    500
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_max_retries() -> u32 {
    3
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}

/// Endpoint settings. The secret itself is never stored here, only the name
/// of the environment variable that holds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env: default_api_key_env(),
            temperature: 0.0,
            max_retries: default_max_retries(),
            timeout_ms: default_timeout_ms(),
            max_tokens: default_max_tokens(),
            retry_backoff_ms: default_backoff_ms(),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

/// Asks the reading-comprehension prompt, requesting log-probabilities.
pub fn answer_question(backend: &dyn Backend, context: &str, question: &str) -> Result<Completion, BackendError> {
    backend.complete(&prompts::qa(question, context), &CallOptions { want_logprobs: true, variant: 0 })
}

/// `e^{lp1} + e^{lp2/2} + e^{lp3/4}` over the first three produced tokens.
/// Absent tokens contribute nothing, so the result lies in `[0, 3]`.
pub fn confidence(c: &Completion) -> f64 {
    c.token_logprobs.iter().take(3).zip([1.0, 2.0, 4.0]).map(|(t, div)| (t.logprob / div).exp()).sum()
}

/// One scored edit: the guide's answer on the edited text, its confidence,
/// whether it was correct (`delta = +1`) and how misleading the edit is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub edited_text: String,
    pub guide_answer: String,
    pub confidence: f64,
    pub delta: i8,
    pub misleading_score: f64,
}

/// `misleading_score = -(delta * confidence)`: a confidently wrong guide
/// scores highest, a confidently right one lowest.
pub fn score_candidate<S: AsRef<str>>(edited_text: &str, guide_answer: &str, golds: &[S], conf: f64) -> Candidate {
    let delta: i8 = if inclusion_match(guide_answer, golds) == 1 { 1 } else { -1 };
    Candidate {
        edited_text: edited_text.to_string(),
        guide_answer: guide_answer.to_string(),
        confidence: conf,
        delta,
        misleading_score: -(f64::from(delta) * conf),
    }
}

/// Index of the highest misleading score; ties go to the earliest candidate.
pub fn select_most_misleading(candidates: &[Candidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if best.is_none_or(|b| c.misleading_score > candidates[b].misleading_score) {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn completion(lps: &[f64]) -> Completion {
        Completion {
            text: "x".into(),
            token_logprobs: lps.iter().enumerate().map(|(i, &lp)| TokenLogprob { token: format!("t{i}"), logprob: lp }).collect(),
            model_id: "m".into(),
            latency_ms: 0,
        }
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(confidence(&completion(&[0.0, 0.0, 0.0])), 3.0);
        let q = 0.25f64.ln();
        let expected = 0.25 + 0.5 + 0.25f64.powf(0.25);
        assert!((confidence(&completion(&[q, q, q])) - expected).abs() < 1e-12);
        assert!((expected - 1.4571).abs() < 1e-4);
        assert!((confidence(&completion(&[0.5f64.ln()])) - 0.5).abs() < 1e-12);
        assert_eq!(confidence(&completion(&[])), 0.0);
        assert_eq!(confidence(&completion(&[0.0, 0.0, 0.0, 0.0])), 3.0);
    }

    #[test]
    fn scoring_sign_convention() {
        let wrong = score_candidate("t", "1998", &["1913"], 2.0);
        assert_eq!((wrong.delta, wrong.misleading_score), (-1, 2.0));
        let right = score_candidate("t", "in 1913", &["1913"], 2.0);
        assert_eq!((right.delta, right.misleading_score), (1, -2.0));
        let low = score_candidate("a", "1913", &["1913"], 0.3);
        let high = score_candidate("b", "1913", &["1913"], 2.9);
        assert!(low.misleading_score > high.misleading_score);
        assert_eq!(select_most_misleading(&[high, low]), Some(1));
    }

    #[test]
    fn selection_examples() {
        let c = |s: f64| Candidate {
            edited_text: s.to_string(),
            guide_answer: String::new(),
            confidence: s.abs(),
            delta: if s > 0.0 { -1 } else { 1 },
            misleading_score: s,
        };
        assert_eq!(select_most_misleading(&[c(1.0)]), Some(0));
        assert_eq!(select_most_misleading(&[c(1.0), c(-0.5), c(2.0)]), Some(2));
        assert_eq!(select_most_misleading(&[c(1.0), c(1.0)]), Some(0));
        assert_eq!(select_most_misleading(&[]), None);
    }

    #[test]
    fn logprob_sign_checked() {
        assert!(completion(&[-0.1]).check().is_ok());
        assert!(completion(&[0.1]).check().is_err());
        assert!(completion(&[f64::NAN]).check().is_err());
    }
}
