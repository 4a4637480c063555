//! Scripted backend driven by a fixture of prompt patterns and canned replies.
//!
//! A reply is a pure function of the prompt, the call's `variant` number and
//! the mock's seed, so concurrent use and repeated runs are reproducible.

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Backend, CallOptions, Completion, TokenLogprob};
use crate::error::{BackendError, DatasetError};
use crate::prompts;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptPattern {
    Exact(String),
    Regex(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockResponse {
    pub text: String,
    #[serde(default)]
    pub token_logprobs: Vec<TokenLogprob>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(rename = "match")]
    pub pattern: PromptPattern,
    pub responses: Vec<MockResponse>,
}

/// Fixture file: one rule list per role (`editor`, `guide`, readers by name).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockFixtures {
    #[serde(default)]
    pub editor: Vec<MockRule>,
    #[serde(default)]
    pub guide: Vec<MockRule>,
    #[serde(default)]
    pub readers: BTreeMap<String, Vec<MockRule>>,
}

impl MockFixtures {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let raw = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }
}

enum Matcher {
    Exact(String),
    Regex(Regex),
}

struct CompiledRule {
    matcher: Matcher,
    responses: Vec<MockResponse>,
}

pub struct MockBackend {
    id: String,
    rules: Vec<CompiledRule>,
    seed: u64,
}

impl MockBackend {
    /// Compiles rules; the first matching rule wins.
    pub fn new(id: impl Into<String>, rules: Vec<MockRule>) -> Result<Self, BackendError> {
        let rules = rules
            .into_iter()
            .map(|r| {
                if r.responses.is_empty() {
                    return Err(BackendError::Protocol("mock rule has no responses".into()));
                }
                for resp in &r.responses {
                    if let Some(t) = resp.token_logprobs.iter().find(|t| t.logprob > 0.0 || t.logprob.is_nan()) {
                        return Err(BackendError::Protocol(format!("mock log-probability {} > 0", t.logprob)));
                    }
                }
                let matcher = match r.pattern {
                    PromptPattern::Exact(s) => Matcher::Exact(s),
                    PromptPattern::Regex(s) => {
                        Matcher::Regex(Regex::new(&s).map_err(|e| BackendError::Protocol(format!("bad mock regex {s:?}: {e}")))?)
                    }
                };
                Ok(CompiledRule { matcher, responses: r.responses })
            })
            .collect::<Result<_, _>>()?;
        Ok(MockBackend { id: id.into(), rules, seed: 0 })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Reader that answers every question with its first gold, with full
    /// confidence. `items` are `(context, question, gold)` triples.
    pub fn echo_gold<'a>(id: impl Into<String>, items: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> Self {
        let rules = items
            .into_iter()
            .map(|(context, question, gold)| CompiledRule {
                matcher: Matcher::Exact(prompts::qa(question, context)),
                responses: vec![MockResponse {
                    text: gold.to_string(),
                    token_logprobs: gold.split_whitespace().map(|w| TokenLogprob { token: w.to_string(), logprob: 0.0 }).collect(),
                }],
            })
            .collect();
        MockBackend { id: id.into(), rules, seed: 0 }
    }

    fn lookup(&self, prompt: &str) -> Option<&CompiledRule> {
        self.rules.iter().find(|r| match &r.matcher {
            Matcher::Exact(s) => s == prompt,
            Matcher::Regex(re) => re.is_match(prompt),
        })
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, prompt: &str, opts: &CallOptions) -> Result<Completion, BackendError> {
        let rule = self.lookup(prompt).ok_or_else(|| {
            let head: String = prompt.chars().take(80).collect();
            BackendError::Protocol(format!("mock {}: no fixture matches prompt starting {head:?}", self.id))
        })?;
        let idx = ((u64::from(opts.variant) + self.seed) % rule.responses.len() as u64) as usize;
        let resp = &rule.responses[idx];
        Ok(Completion {
            text: resp.text.clone(),
            token_logprobs: if opts.want_logprobs { resp.token_logprobs.clone() } else { Vec::new() },
            model_id: self.id.clone(),
            latency_ms: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(pattern: PromptPattern, texts: &[&str]) -> MockRule {
        MockRule { pattern, responses: texts.iter().map(|t| MockResponse { text: t.to_string(), token_logprobs: vec![] }).collect() }
    }

    #[test]
    fn registered_prompt_is_deterministic() {
        let mock = MockBackend::new("m", vec![rule(PromptPattern::Exact("hi".into()), &["there"])]).unwrap();
        let opts = CallOptions::default();
        let a = mock.complete("hi", &opts).unwrap();
        assert_eq!(a, mock.complete("hi", &opts).unwrap());
        assert_eq!(a.text, "there");
    }

    #[test]
    fn unregistered_prompt_is_protocol_error() {
        let mock = MockBackend::new("m", vec![]).unwrap();
        assert!(matches!(mock.complete("nope", &CallOptions::default()), Err(BackendError::Protocol(_))));
    }

    #[test]
    fn regex_rules_and_variants() {
        let mock = MockBackend::new(
            "m",
            vec![rule(PromptPattern::Exact("x".into()), &["exact"]), rule(PromptPattern::Regex("^x|y".into()), &["a", "b"])],
        )
        .unwrap();
        assert_eq!(mock.complete("x", &CallOptions::default()).unwrap().text, "exact");
        let pick = |v| mock.complete("yy", &CallOptions { want_logprobs: false, variant: v }).unwrap().text;
        assert_eq!((pick(0), pick(1), pick(2)), ("a".into(), "b".into(), "a".into()));
        let seeded = MockBackend::new("m", vec![rule(PromptPattern::Regex("y".into()), &["a", "b"])]).unwrap().with_seed(1);
        assert_eq!(seeded.complete("y", &CallOptions::default()).unwrap().text, "b");
    }

    #[test]
    fn rejects_bad_fixtures() {
        assert!(MockBackend::new("m", vec![rule(PromptPattern::Regex("(".into()), &["a"])]).is_err());
        assert!(MockBackend::new("m", vec![rule(PromptPattern::Exact("a".into()), &[])]).is_err());
        let bad = MockRule {
            pattern: PromptPattern::Exact("a".into()),
            responses: vec![MockResponse { text: "a".into(), token_logprobs: vec![TokenLogprob { token: "a".into(), logprob: 0.5 }] }],
        };
        assert!(MockBackend::new("m", vec![bad]).is_err());
    }

    #[test]
    fn fixture_json_shape() {
        let json = r#"{"editor":[{"match":{"regex":"Distractor"},"responses":[{"text":"Distractor: x","token_logprobs":[["x",-0.1]]}]}]}"#;
        let fx: MockFixtures = serde_json::from_str(json).unwrap();
        assert_eq!(fx.editor[0].responses[0].token_logprobs[0].logprob, -0.1);
        assert!(fx.guide.is_empty());
    }

    #[test]
    fn echo_gold_answers_with_gold() {
        let mock = MockBackend::echo_gold("echo", [("ctx 1913", "When?", "1913")]);
        let c = super::super::answer_question(&mock, "ctx 1913", "When?").unwrap();
        assert_eq!(c.text, "1913");
        assert_eq!(super::super::confidence(&c), 1.0);
        // empty context still renders a well-formed prompt
        let empty = MockBackend::echo_gold("echo", [("", "When?", "x")]);
        assert_eq!(super::super::answer_question(&empty, "", "When?").unwrap().text, "x");
    }
}
