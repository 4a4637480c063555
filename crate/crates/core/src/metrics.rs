//! Answer scoring (F1, EM, IM), aggregation and the misled predicate.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::EvalError;

fn is_punctuation(c: char) -> bool {
    (c.is_ascii_punctuation() && c != '&')
        || matches!(c, '\u{2018}' | '\u{2019}' | '\u{201c}' | '\u{201d}' | '\u{2013}' | '\u{2014}' | '\u{2026}')
}

/// Case-folds, strips punctuation (keeping `&`), drops the articles
/// "a", "an" and "the", and collapses whitespace.
pub fn normalize(text: &str) -> String {
    let stripped: String = text.to_lowercase().chars().filter(|&c| !is_punctuation(c)).collect();
    stripped.split_whitespace().filter(|w| !matches!(*w, "a" | "an" | "the")).collect::<Vec<_>>().join(" ")
}

fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = normalize(prediction);
    let gold = normalize(gold);
    let pred_tokens: Vec<&str> = pred.split_whitespace().collect();
    let gold_tokens: Vec<&str> = gold.split_whitespace().collect();
    match (pred_tokens.is_empty(), gold_tokens.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_tokens {
        *gold_counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred_tokens {
        if let Some(n) = gold_counts.get_mut(t) {
            if *n > 0 {
                *n -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred_tokens.len() as f64;
    let recall = common as f64 / gold_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best bag-of-tokens F1 against any gold.
pub fn f1<S: AsRef<str>>(prediction: &str, golds: &[S]) -> f64 {
    golds.iter().map(|g| token_f1(prediction, g.as_ref())).fold(0.0, f64::max)
}

pub fn exact_match<S: AsRef<str>>(prediction: &str, golds: &[S]) -> u8 {
    let pred = normalize(prediction);
    u8::from(golds.iter().any(|g| normalize(g.as_ref()) == pred))
}

/// 1 when any normalized gold occurs as a contiguous substring of the
/// normalized prediction. A gold that normalizes to nothing only matches an
/// empty prediction.
pub fn inclusion_match<S: AsRef<str>>(prediction: &str, golds: &[S]) -> u8 {
    let pred = normalize(prediction);
    u8::from(golds.iter().any(|g| {
        let gold = normalize(g.as_ref());
        if gold.is_empty() {
            pred.is_empty()
        } else {
            pred.contains(&gold)
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAnswer {
    pub prediction: String,
    pub golds: Vec<String>,
    pub f1: f64,
    pub em: u8,
    pub im: u8,
}

impl ScoredAnswer {
    pub fn score(prediction: &str, golds: &[String]) -> Self {
        ScoredAnswer {
            prediction: prediction.to_string(),
            golds: golds.to_vec(),
            f1: f1(prediction, golds),
            em: exact_match(prediction, golds),
            im: inclusion_match(prediction, golds),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Natural,
    Edited,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Natural => "natural",
            Variant::Edited => "edited",
        })
    }
}

/// Dataset-level means, as percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset_id: String,
    pub variant: Variant,
    pub mean_f1: f64,
    pub mean_em: f64,
    pub mean_im: f64,
    pub n: usize,
}

impl MetricsReport {
    pub fn aggregate<'a>(dataset_id: &str, variant: Variant, scores: impl IntoIterator<Item = &'a ScoredAnswer>) -> Self {
        let (mut f1, mut em, mut im, mut n) = (0.0, 0.0, 0.0, 0usize);
        for s in scores {
            f1 += s.f1;
            em += f64::from(s.em);
            im += f64::from(s.im);
            n += 1;
        }
        let pct = |total: f64| if n == 0 { 0.0 } else { 100.0 * total / n as f64 };
        MetricsReport { dataset_id: dataset_id.to_string(), variant, mean_f1: pct(f1), mean_em: pct(em), mean_im: pct(im), n }
    }
}

/// Edited minus natural IM; negative when the edits hurt.
pub fn im_diff(natural: &MetricsReport, edited: &MetricsReport) -> Result<f64, EvalError> {
    if natural.dataset_id != edited.dataset_id {
        return Err(EvalError::DatasetMismatch(natural.dataset_id.clone(), edited.dataset_id.clone()));
    }
    Ok(edited.mean_im - natural.mean_im)
}

/// The reader answered the original correctly and the edited text incorrectly.
pub fn is_misled<S: AsRef<str>>(answer_original: &str, answer_edited: &str, gold_original: &[S], gold_edited: &[S]) -> bool {
    inclusion_match(answer_original, gold_original) == 1 && inclusion_match(answer_edited, gold_edited) == 0
}
