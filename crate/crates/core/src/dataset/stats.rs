use serde::{Deserialize, Serialize};

use super::records::EditRecord;
use crate::pipeline::Position;

/// Corpus-level description of the chosen edits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_records: usize,
    pub n_with_distractor: usize,
    pub pct_distractor_beginning: f64,
    pub pct_distractor_end: f64,
    pub pct_base: f64,
    pub pct_extended: f64,
    pub n_anchor_edits: usize,
    /// Mean of `anchor_distance_after - anchor_distance_before`, in tokens.
    pub mean_distance_added: Option<f64>,
    pub n_lexical_edits: usize,
    /// Mean of `100 * jaccard_after / jaccard_before` over records whose
    /// answer sentence had some overlap to begin with.
    pub mean_jaccard_ratio: Option<f64>,
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn corpus_stats(records: &[EditRecord]) -> CorpusStats {
    let traces: Vec<_> = records.iter().map(|r| &r.trace).collect();
    let placed: Vec<_> = traces.iter().filter(|t| t.distractor_text.is_some()).collect();
    let at_beginning = placed.iter().filter(|t| t.distractor_position == Some(Position::Beginning)).count();
    let extended = placed.iter().filter(|t| t.distractor_kind.is_some_and(|k| k.is_extended())).count();

    let distances: Vec<f64> =
        traces.iter().filter_map(|t| Some(t.anchor_distance_after? as f64 - t.anchor_distance_before? as f64)).collect();
    let ratios: Vec<f64> = traces
        .iter()
        .filter_map(|t| {
            let (before, after) = (t.jaccard_before?, t.jaccard_after?);
            (before > 0.0).then(|| 100.0 * after / before)
        })
        .collect();

    CorpusStats {
        n_records: records.len(),
        n_with_distractor: placed.len(),
        pct_distractor_beginning: pct(at_beginning, placed.len()),
        pct_distractor_end: pct(placed.len() - at_beginning, placed.len()),
        pct_base: pct(placed.len() - extended, placed.len()),
        pct_extended: pct(extended, placed.len()),
        n_anchor_edits: distances.len(),
        mean_distance_added: mean(&distances),
        n_lexical_edits: ratios.len(),
        mean_jaccard_ratio: mean(&ratios),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{MrcSample, Source};
    use crate::pipeline::{DistractorKind, EditMode, EditTrace};

    fn rec(position: Option<Position>, distances: Option<(usize, usize)>, jaccard: Option<(f64, f64)>) -> EditRecord {
        let sample =
            MrcSample { id: "s".into(), context: "x 1".into(), question: "q".into(), golds: vec!["1".into()], source: Source::Other };
        let trace = EditTrace {
            sample_id: "s".into(),
            mode: EditMode::Full,
            answer: "1".into(),
            original_context: "x 1".into(),
            final_context: "x 1".into(),
            distractor_text: position.map(|_| "d".into()),
            distractor_position: position,
            distractor_kind: position.map(|_| DistractorKind::Base),
            anchor: None,
            anchor_distance_before: distances.map(|d| d.0),
            anchor_distance_after: distances.map(|d| d.1),
            jaccard_before: jaccard.map(|j| j.0),
            jaccard_after: jaccard.map(|j| j.1),
            steps: vec![],
            final_checks: vec![],
        };
        EditRecord::new(sample, trace)
    }

    #[test]
    fn all_at_end() {
        let s = corpus_stats(&[rec(Some(Position::End), None, None), rec(Some(Position::End), None, None)]);
        assert_eq!((s.pct_distractor_end, s.pct_distractor_beginning, s.pct_base), (100.0, 0.0, 100.0));
    }

    #[test]
    fn mean_distance_added() {
        let s = corpus_stats(&[rec(None, Some((1, 6)), None), rec(None, Some((2, 11)), None), rec(None, None, None)]);
        assert_eq!(s.mean_distance_added, Some(7.0));
        assert_eq!(s.n_anchor_edits, 2);
        assert_eq!(s.n_with_distractor, 0);
        assert_eq!(s.pct_distractor_beginning, 0.0);
    }

    #[test]
    fn jaccard_ratio_skips_zero_baselines() {
        let s = corpus_stats(&[rec(None, None, Some((0.5, 0.25))), rec(None, None, Some((0.0, 0.0)))]);
        assert_eq!(s.mean_jaccard_ratio, Some(50.0));
        assert_eq!(s.n_lexical_edits, 1);
    }

    #[test]
    fn empty_corpus() {
        let s = corpus_stats(&[]);
        assert_eq!(s.n_records, 0);
        assert_eq!(s.mean_distance_added, None);
        assert_eq!(s.mean_jaccard_ratio, None);
    }
}
