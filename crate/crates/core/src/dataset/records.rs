use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MrcSample;
use crate::error::DatasetError;
use crate::pipeline::EditTrace;

pub const SCHEMA_VERSION: &str = "1";

fn schema_version() -> String {
    SCHEMA_VERSION.to_string()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Review {
    #[default]
    Pending,
    Accepted,
    Discarded,
}

/// One edited sample with its full provenance. Fields this version does not
/// know are kept in `extra` and written back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    #[serde(default = "schema_version")]
    pub schema_version: String,
    pub sample: MrcSample,
    pub edited_context: String,
    pub trace: EditTrace,
    #[serde(default)]
    pub review: Review,
    #[serde(default)]
    pub review_note: Option<String>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl EditRecord {
    pub fn new(sample: MrcSample, trace: EditTrace) -> Self {
        EditRecord {
            schema_version: schema_version(),
            edited_context: trace.final_context.clone(),
            sample,
            trace,
            review: Review::Pending,
            review_note: None,
            extra: serde_json::Map::new(),
        }
    }
}

pub fn write_records(records: &[EditRecord], path: &Path) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            location: format!("record {}", r.sample.id),
            message: e.to_string(),
        })?;
        writeln!(out, "{line}").map_err(|e| DatasetError::io(path, e))?;
    }
    out.flush().map_err(|e| DatasetError::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<EditRecord>, DatasetError> {
    let file = fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            location: format!("line {}", i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Source;
    use crate::pipeline::{EditMode, EditTrace};

    fn record(id: &str) -> EditRecord {
        let sample = MrcSample {
            id: id.into(),
            context: "in 1913".into(),
            question: "When?".into(),
            golds: vec!["1913".into()],
            source: Source::Squad,
        };
        let trace = EditTrace {
            sample_id: id.into(),
            mode: EditMode::Full,
            answer: "1913".into(),
            original_context: "in 1913".into(),
            final_context: "D. in 1913".into(),
            distractor_text: Some("D.".into()),
            distractor_position: None,
            distractor_kind: None,
            anchor: None,
            anchor_distance_before: Some(1),
            anchor_distance_after: Some(4),
            jaccard_before: Some(0.3),
            jaccard_after: Some(0.1),
            steps: vec![],
            final_checks: vec![],
        };
        EditRecord::new(sample, trace)
    }

    #[test]
    fn round_trip_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let recs = vec![record("a"), record("b")];
        write_records(&recs, &path).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back, recs);
        assert_eq!(back[0].review, Review::Pending);
        assert_eq!(back[0].schema_version, "1");
    }

    #[test]
    fn unknown_fields_survive() {
        let mut v = serde_json::to_value(record("a")).unwrap();
        v.as_object_mut().unwrap().insert("annotator".into(), serde_json::json!({"name": "x", "minutes": 3}));
        v.as_object_mut().unwrap().remove("review");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        fs::write(&path, format!("{v}\n")).unwrap();
        let recs = read_records(&path).unwrap();
        assert_eq!(recs[0].review, Review::Pending);
        assert_eq!(recs[0].extra["annotator"]["minutes"], 3);
        write_records(&recs, &path).unwrap();
        let again: serde_json::Value = serde_json::from_str(fs::read_to_string(&path).unwrap().trim()).unwrap();
        assert_eq!(again["annotator"]["name"], "x");
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_records(Path::new("/nonexistent/records.jsonl")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/records.jsonl"));
    }
}
