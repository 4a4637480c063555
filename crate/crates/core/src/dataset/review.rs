use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::records::{EditRecord, Review};
use crate::error::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Discard,
}

/// One line of the review journal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub id: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSummary {
    pub total: usize,
    pub accepted: usize,
    pub discarded: usize,
    pub pending: usize,
    /// Discarded as a percentage of reviewed records.
    pub discard_rate: f64,
}

impl ReviewSummary {
    pub fn of(records: &[EditRecord]) -> Self {
        let count = |r: Review| records.iter().filter(|x| x.review == r).count();
        let (accepted, discarded) = (count(Review::Accepted), count(Review::Discarded));
        let reviewed = accepted + discarded;
        ReviewSummary {
            total: records.len(),
            accepted,
            discarded,
            pending: count(Review::Pending),
            discard_rate: if reviewed == 0 { 0.0 } else { 100.0 * discarded as f64 / reviewed as f64 },
        }
    }
}

/// Applies decisions in order (a later decision for the same id wins) and
/// returns the accepted records. Unknown ids fail before anything changes.
pub fn review_pass(
    records: &mut [EditRecord],
    decisions: impl IntoIterator<Item = ReviewDecision>,
) -> Result<(Vec<EditRecord>, ReviewSummary), DatasetError> {
    let index: HashMap<String, usize> = records.iter().enumerate().map(|(i, r)| (r.sample.id.clone(), i)).collect();
    let decisions: Vec<ReviewDecision> = decisions.into_iter().collect();
    if let Some(d) = decisions.iter().find(|d| !index.contains_key(&d.id)) {
        return Err(DatasetError::UnknownId(d.id.clone()));
    }
    for d in decisions {
        let r = &mut records[index[&d.id]];
        r.review = match d.decision {
            Decision::Accept => Review::Accepted,
            Decision::Discard => Review::Discarded,
        };
        r.review_note = d.note;
    }
    let curated = records.iter().filter(|r| r.review == Review::Accepted).cloned().collect();
    Ok((curated, ReviewSummary::of(records)))
}

pub fn read_journal(path: &Path) -> Result<Vec<ReviewDecision>, DatasetError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            location: format!("line {}", i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn append_journal(path: &Path, decision: &ReviewDecision) -> Result<(), DatasetError> {
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| DatasetError::io(path, e))?;
    let line = serde_json::to_string(decision).expect("decision serializes");
    writeln!(file, "{line}").map_err(|e| DatasetError::io(path, e))
}
