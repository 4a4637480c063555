//! Reader evaluation on natural and edited contexts, run comparison,
//! controllability and report rendering.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{answer_question, Backend};
use crate::dataset::{CorpusStats, EditRecord, MrcSample};
use crate::error::EvalError;
use crate::metrics::{is_misled, normalize, MetricsReport, ScoredAnswer, Variant};
use crate::text::{is_stopword, tokenize};

/// One question to put to a reader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalItem {
    pub id: String,
    pub context: String,
    pub question: String,
    pub golds: Vec<String>,
}

impl EvalItem {
    pub fn from_sample(s: &MrcSample) -> Self {
        EvalItem { id: s.id.clone(), context: s.context.clone(), question: s.question.clone(), golds: s.golds.clone() }
    }

    pub fn from_record(r: &EditRecord, variant: Variant) -> Self {
        let mut item = Self::from_sample(&r.sample);
        if variant == Variant::Edited {
            item.context = r.edited_context.clone();
        }
        item
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub id: String,
    /// `None` when the reader call failed; the sample then scores 0.
    pub prediction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub scored: ScoredAnswer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub reader_id: String,
    pub dataset_id: String,
    pub variant: Variant,
    pub per_sample: Vec<SampleResult>,
    pub report: MetricsReport,
}

impl EvalRun {
    /// Scores fixed predictions without calling any reader.
    pub fn from_predictions(
        reader_id: &str,
        dataset_id: &str,
        variant: Variant,
        predictions: Vec<(String, Option<String>, Vec<String>)>,
    ) -> Self {
        let mut per_sample: Vec<SampleResult> = predictions
            .into_iter()
            .map(|(id, prediction, golds)| {
                let scored = score_prediction(prediction.as_deref(), &golds);
                SampleResult { id, prediction, error: None, scored }
            })
            .collect();
        per_sample.sort_by(|a, b| a.id.cmp(&b.id));
        let report = MetricsReport::aggregate(dataset_id, variant, per_sample.iter().map(|s| &s.scored));
        EvalRun { reader_id: reader_id.to_string(), dataset_id: dataset_id.to_string(), variant, per_sample, report }
    }
}

fn score_prediction(prediction: Option<&str>, golds: &[String]) -> ScoredAnswer {
    match prediction {
        Some(p) => ScoredAnswer::score(p, golds),
        None => ScoredAnswer { prediction: String::new(), golds: golds.to_vec(), f1: 0.0, em: 0, im: 0 },
    }
}

/// Asks every item concurrently; results are ordered by id. Reader failures
/// are recorded and scored 0.
pub fn evaluate(reader: &dyn Backend, dataset_id: &str, variant: Variant, items: &[EvalItem]) -> EvalRun {
    let mut per_sample: Vec<SampleResult> = items
        .par_iter()
        .map(|item| {
            let (prediction, error) = match answer_question(reader, &item.context, &item.question) {
                Ok(c) => (Some(c.text.trim().to_string()), None),
                Err(e) => {
                    log::warn!("{}: reader failed on {}: {e}", reader.id(), item.id);
                    (None, Some(e.to_string()))
                }
            };
            let scored = score_prediction(prediction.as_deref(), &item.golds);
            SampleResult { id: item.id.clone(), prediction, error, scored }
        })
        .collect();
    per_sample.sort_by(|a, b| a.id.cmp(&b.id));
    let report = MetricsReport::aggregate(dataset_id, variant, per_sample.iter().map(|s| &s.scored));
    EvalRun { reader_id: reader.id().to_string(), dataset_id: dataset_id.to_string(), variant, per_sample, report }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisledFlag {
    pub id: String,
    pub misled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reader_id: String,
    pub dataset_id: String,
    pub natural: MetricsReport,
    pub edited: MetricsReport,
    pub f1_diff: f64,
    pub em_diff: f64,
    pub im_diff: f64,
    pub per_sample: Vec<MisledFlag>,
    pub n_misled: usize,
    pub misled_rate: f64,
}

/// Edited-minus-natural deltas and per-sample misled flags.
pub fn compare(natural: &EvalRun, edited: &EvalRun) -> Result<Comparison, EvalError> {
    if natural.dataset_id != edited.dataset_id {
        return Err(EvalError::DatasetMismatch(natural.dataset_id.clone(), edited.dataset_id.clone()));
    }
    let edited_by_id: HashMap<&str, &SampleResult> = edited.per_sample.iter().map(|s| (s.id.as_str(), s)).collect();
    if natural.per_sample.len() != edited.per_sample.len() || edited_by_id.len() != edited.per_sample.len() {
        return Err(EvalError::IdMismatch(format!("{} natural vs {} edited samples", natural.per_sample.len(), edited.per_sample.len())));
    }
    let mut per_sample = Vec::with_capacity(natural.per_sample.len());
    for nat in &natural.per_sample {
        let ed = edited_by_id.get(nat.id.as_str()).ok_or_else(|| EvalError::IdMismatch(format!("{} missing from edited run", nat.id)))?;
        let misled =
            is_misled(nat.prediction.as_deref().unwrap_or(""), ed.prediction.as_deref().unwrap_or(""), &nat.scored.golds, &ed.scored.golds);
        per_sample.push(MisledFlag { id: nat.id.clone(), misled });
    }
    let n_misled = per_sample.iter().filter(|f| f.misled).count();
    let n = per_sample.len();
    Ok(Comparison {
        reader_id: edited.reader_id.clone(),
        dataset_id: natural.dataset_id.clone(),
        f1_diff: edited.report.mean_f1 - natural.report.mean_f1,
        em_diff: edited.report.mean_em - natural.report.mean_em,
        im_diff: crate::metrics::im_diff(&natural.report, &edited.report)?,
        natural: natural.report.clone(),
        edited: edited.report.clone(),
        per_sample,
        n_misled,
        misled_rate: if n == 0 { 0.0 } else { 100.0 * n_misled as f64 / n as f64 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllabilityReport {
    pub n_samples: usize,
    pub n_incorrect: usize,
    pub n_from_distractor: usize,
    /// Percentages of all samples.
    pub pct_incorrect: f64,
    pub pct_from_distractor: f64,
    /// `n_from_distractor` as a percentage of the incorrect answers.
    pub pct_from_distractor_of_incorrect: f64,
}

fn content_set(text: &str) -> BTreeSet<String> {
    tokenize(text).words().map(|(_, t)| t.folded()).filter(|w| !is_stopword(w)).collect()
}

/// Whether a wrong prediction was drawn from the distractor: it occurs in
/// the distractor, or it uses a word that only the distractor introduced.
pub fn taken_from_distractor(prediction: &str, distractor: &str, original_context: &str) -> bool {
    let pred = normalize(prediction);
    if pred.is_empty() {
        return false;
    }
    if normalize(distractor).contains(&pred) {
        return true;
    }
    let original = content_set(original_context);
    let exclusive: BTreeSet<String> = content_set(distractor).difference(&original).cloned().collect();
    content_set(prediction).iter().any(|w| exclusive.contains(w))
}

pub fn controllability(edited_run: &EvalRun, records: &[EditRecord]) -> ControllabilityReport {
    let by_id: HashMap<&str, &EditRecord> = records.iter().map(|r| (r.sample.id.as_str(), r)).collect();
    let incorrect: Vec<&SampleResult> = edited_run.per_sample.iter().filter(|s| s.scored.im == 0).collect();
    let from_distractor = incorrect
        .iter()
        .filter(|s| {
            let (Some(pred), Some(rec)) = (s.prediction.as_deref(), by_id.get(s.id.as_str())) else { return false };
            rec.trace.distractor_text.as_deref().is_some_and(|d| taken_from_distractor(pred, d, &rec.sample.context))
        })
        .count();
    let n = edited_run.per_sample.len();
    let pct = |k: usize, of: usize| if of == 0 { 0.0 } else { 100.0 * k as f64 / of as f64 };
    ControllabilityReport {
        n_samples: n,
        n_incorrect: incorrect.len(),
        n_from_distractor: from_distractor,
        pct_incorrect: pct(incorrect.len(), n),
        pct_from_distractor: pct(from_distractor, n),
        pct_from_distractor_of_incorrect: pct(from_distractor, incorrect.len()),
    }
}

/// Machine-readable companion of the rendered tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunSummary>,
    pub comparisons: Vec<ComparisonSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<CorpusStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub controllability: Vec<ControllabilityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub reader_id: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub reader_id: String,
    pub dataset_id: String,
    pub f1_diff: f64,
    pub em_diff: f64,
    pub im_diff: f64,
    pub n_misled: usize,
    pub misled_rate: f64,
}

impl Report {
    pub fn new(
        runs: &[EvalRun],
        comparisons: &[Comparison],
        stats: Option<&CorpusStats>,
        controllability: &[ControllabilityReport],
    ) -> Self {
        Report {
            runs: runs.iter().map(|r| RunSummary { reader_id: r.reader_id.clone(), report: r.report.clone() }).collect(),
            comparisons: comparisons
                .iter()
                .map(|c| ComparisonSummary {
                    reader_id: c.reader_id.clone(),
                    dataset_id: c.dataset_id.clone(),
                    f1_diff: c.f1_diff,
                    em_diff: c.em_diff,
                    im_diff: c.im_diff,
                    n_misled: c.n_misled,
                    misled_rate: c.misled_rate,
                })
                .collect(),
            stats: stats.cloned(),
            controllability: controllability.to_vec(),
        }
    }

    /// Fixed-width tables: per-run metrics with the IM difference next to
    /// each compared pair, then corpus statistics when present.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.runs.is_empty() || self.stats.is_none() {
            let _ = writeln!(out, "{:<16} {:<12} {:<8} {:>7} {:>7} {:>7} {:>8}", "Model", "Dataset", "Type", "F1", "EM", "IM", "IM Diff");
        }
        for run in &self.runs {
            let r = &run.report;
            let diff = (r.variant == crate::metrics::Variant::Edited)
                .then(|| self.comparisons.iter().find(|c| c.reader_id == run.reader_id && c.dataset_id == r.dataset_id))
                .flatten()
                .map_or(String::new(), |c| format!("{:.1}", c.im_diff));
            let _ = writeln!(
                out,
                "{:<16} {:<12} {:<8} {:>7.1} {:>7.1} {:>7.1} {:>8}",
                run.reader_id,
                r.dataset_id,
                r.variant.to_string(),
                r.mean_f1,
                r.mean_em,
                r.mean_im,
                diff
            );
        }
        for c in &self.comparisons {
            let _ = writeln!(out, "misled {}/{}: {} samples ({:.1}%)", c.reader_id, c.dataset_id, c.n_misled, c.misled_rate);
        }
        for c in &self.controllability {
            let _ = writeln!(
                out,
                "controllability: {:.1}% incorrect, {:.1}% from distractor ({:.1}% of incorrect)",
                c.pct_incorrect, c.pct_from_distractor, c.pct_from_distractor_of_incorrect
            );
        }
        if let Some(s) = &self.stats {
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.1}"));
            if !out.is_empty() {
                let _ = writeln!(out);
            }
            let _ = writeln!(out, "{:<28} {:>8}", "Statistic", "Value");
            let _ = writeln!(out, "{:<28} {:>8}", "records", s.n_records);
            let _ = writeln!(out, "{:<28} {:>8.1}", "distractor at beginning %", s.pct_distractor_beginning);
            let _ = writeln!(out, "{:<28} {:>8.1}", "distractor at end %", s.pct_distractor_end);
            let _ = writeln!(out, "{:<28} {:>8.1}", "base distractor %", s.pct_base);
            let _ = writeln!(out, "{:<28} {:>8.1}", "extended distractor %", s.pct_extended);
            let _ = writeln!(out, "{:<28} {:>8}", "distance added (tokens)", fmt(s.mean_distance_added));
            let _ = writeln!(out, "{:<28} {:>8}", "jaccard ratio %", fmt(s.mean_jaccard_ratio));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockResponse, MockRule, PromptPattern};

    fn items() -> Vec<EvalItem> {
        ["d", "a", "c", "b"]
            .iter()
            .map(|id| EvalItem {
                id: id.to_string(),
                context: format!("ctx {id} 1913"),
                question: format!("q {id}?"),
                golds: vec!["1913".into()],
            })
            .collect()
    }

    #[test]
    fn echo_gold_reader_is_perfect() {
        let its = items();
        let reader = MockBackend::echo_gold("echo", its.iter().map(|i| (i.context.as_str(), i.question.as_str(), i.golds[0].as_str())));
        let run = evaluate(&reader, "fx", Variant::Natural, &its);
        assert_eq!((run.report.mean_f1, run.report.mean_em, run.report.mean_im), (100.0, 100.0, 100.0));
        let ids: Vec<_> = run.per_sample.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c", "d"]);
    }

    #[test]
    fn empty_answers_score_zero() {
        let reader = MockBackend::new(
            "blank",
            vec![MockRule {
                pattern: PromptPattern::Regex(".".into()),
                responses: vec![MockResponse { text: "".into(), token_logprobs: vec![] }],
            }],
        )
        .unwrap();
        let run = evaluate(&reader, "fx", Variant::Natural, &items());
        assert_eq!((run.report.mean_f1, run.report.mean_em, run.report.mean_im), (0.0, 0.0, 0.0));
    }

    #[test]
    fn one_wrong_of_four() {
        let reader = MockBackend::new(
            "r",
            vec![
                MockRule {
                    pattern: PromptPattern::Regex("Question: q c\\?".into()),
                    responses: vec![MockResponse { text: "1998".into(), token_logprobs: vec![] }],
                },
                MockRule {
                    pattern: PromptPattern::Regex(".".into()),
                    responses: vec![MockResponse { text: "in 1913".into(), token_logprobs: vec![] }],
                },
            ],
        )
        .unwrap();
        let run = evaluate(&reader, "fx", Variant::Edited, &items());
        assert_eq!(run.report.mean_im, 75.0);
    }

    #[test]
    fn failed_calls_score_zero_and_continue() {
        let reader = MockBackend::new(
            "r",
            vec![MockRule {
                pattern: PromptPattern::Regex("q a\\?".into()),
                responses: vec![MockResponse { text: "1913".into(), token_logprobs: vec![] }],
            }],
        )
        .unwrap();
        let run = evaluate(&reader, "fx", Variant::Natural, &items());
        assert_eq!(run.report.n, 4);
        assert_eq!(run.report.mean_im, 25.0);
        assert_eq!(run.per_sample.iter().filter(|s| s.prediction.is_none() && s.error.is_some()).count(), 3);
    }

    fn run(variant: Variant, preds: &[(&str, &str)]) -> EvalRun {
        EvalRun::from_predictions(
            "r",
            "fx",
            variant,
            preds.iter().map(|(id, p)| (id.to_string(), Some(p.to_string()), vec!["1913".to_string()])).collect(),
        )
    }

    #[test]
    fn compare_identical_and_half_misled() {
        let nat = run(Variant::Natural, &[("a", "1913"), ("b", "1913")]);
        let same = compare(&nat, &nat).unwrap();
        assert_eq!((same.im_diff, same.f1_diff, same.em_diff, same.n_misled), (0.0, 0.0, 0.0, 0));
        let ed = run(Variant::Edited, &[("a", "1998"), ("b", "1913")]);
        let c = compare(&nat, &ed).unwrap();
        assert_eq!(c.misled_rate, 50.0);
        assert_eq!(c.im_diff, -50.0);
        let other = run(Variant::Edited, &[("a", "1913"), ("z", "1913")]);
        assert!(matches!(compare(&nat, &other), Err(EvalError::IdMismatch(_))));
    }

    #[test]
    fn distractor_attribution() {
        let d = "In 1998, the V&A received the Picasso collection.";
        let ctx = "In 1913 the V&A received the Talbot Hughes collection.";
        assert!(taken_from_distractor("Picasso collection", d, ctx));
        assert!(taken_from_distractor("the Picasso one", d, ctx));
        assert!(!taken_from_distractor("Talbot Hughes", d, ctx));
        assert!(!taken_from_distractor("autumn", d, ctx));
        assert!(!taken_from_distractor("", d, ctx));
    }

    #[test]
    fn empty_report_is_header_only() {
        let text = Report::default().render();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("Model"));
    }
}
