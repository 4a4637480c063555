//! Sample ingestion (SQuAD v1 files and line-delimited samples), edited
//! record persistence, the human review pass and corpus statistics.

mod records;
mod review;
mod stats;

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;

pub use records::{read_records, write_records, EditRecord, Review, SCHEMA_VERSION};
pub use review::{append_journal, read_journal, review_pass, Decision, ReviewDecision, ReviewSummary};
pub use stats::{corpus_stats, CorpusStats};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Squad,
    Newsqa,
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MrcSample {
    pub id: String,
    pub context: String,
    pub question: String,
    pub golds: Vec<String>,
    #[serde(default)]
    pub source: Source,
}

impl MrcSample {
    /// First gold that occurs verbatim in the context.
    pub fn primary_answer(&self) -> Option<&str> {
        self.golds.iter().map(String::as_str).find(|g| !g.is_empty() && self.context.contains(g))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadWarning {
    /// No gold occurs verbatim in the context; the sample was dropped.
    AnswerMissing { id: String },
    /// `answer_start` disagrees with the verbatim location; the offset is ignored.
    OffsetMismatch { id: String, answer: String, answer_start: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Loaded {
    pub samples: Vec<MrcSample>,
    pub warnings: Vec<LoadWarning>,
}

impl Loaded {
    fn push(&mut self, sample: MrcSample) {
        if sample.primary_answer().is_some() {
            self.samples.push(sample);
        } else {
            log::warn!("sample {}: no gold answer occurs in the context; dropped", sample.id);
            self.warnings.push(LoadWarning::AnswerMissing { id: sample.id });
        }
    }
}

fn dedup(golds: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut seen = HashSet::new();
    golds.into_iter().filter(|g| seen.insert(g.clone())).collect()
}

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    answers: Vec<SquadAnswer>,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
    #[serde(default)]
    answer_start: Option<usize>,
}

pub fn load_squad(path: &Path) -> Result<Loaded, DatasetError> {
    let raw = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    let file: SquadFile = serde_json::from_str(&raw).map_err(|e| DatasetError::Parse {
        path: path.to_path_buf(),
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut out = Loaded::default();
    for para in file.data.into_iter().flat_map(|a| a.paragraphs) {
        for qa in para.qas {
            for a in &qa.answers {
                let Some(start) = a.answer_start else { continue };
                let found = para.context.find(&a.text);
                if found.is_some() && found != Some(start) {
                    log::warn!("sample {}: answer_start {start} disagrees with verbatim location; offset ignored", qa.id);
                    out.warnings.push(LoadWarning::OffsetMismatch { id: qa.id.clone(), answer: a.text.clone(), answer_start: start });
                }
            }
            out.push(MrcSample {
                id: qa.id,
                context: para.context.clone(),
                question: qa.question,
                golds: dedup(qa.answers.into_iter().map(|a| a.text)),
                source: Source::Squad,
            });
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonlAnswer {
    Text(String),
    Object { text: String },
}

#[derive(Deserialize)]
struct JsonlSample {
    id: String,
    context: String,
    question: String,
    answers: Vec<JsonlAnswer>,
    #[serde(default)]
    source: Source,
}

/// One sample per line: `{"id", "context", "question", "answers"}` where
/// answers are strings or `{"text": ...}` objects. Blank lines are skipped.
pub fn load_jsonl(path: &Path) -> Result<Loaded, DatasetError> {
    let file = fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out = Loaded::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlSample = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            location: format!("line {}", i + 1),
            message: e.to_string(),
        })?;
        out.push(MrcSample {
            id: rec.id,
            context: rec.context,
            question: rec.question,
            golds: dedup(rec.answers.into_iter().map(|a| match a {
                JsonlAnswer::Text(t) | JsonlAnswer::Object { text: t } => t,
            })),
            source: rec.source,
        });
    }
    Ok(out)
}

/// Writes samples in the `load_jsonl` layout.
pub fn write_samples_jsonl(samples: &[MrcSample], path: &Path) -> Result<(), DatasetError> {
    let mut file = fs::File::create(path).map_err(|e| DatasetError::io(path, e))?;
    for s in samples {
        let line = serde_json::json!({
            "id": s.id,
            "context": s.context,
            "question": s.question,
            "answers": s.golds,
            "source": s.source,
        });
        writeln!(file, "{line}").map_err(|e| DatasetError::io(path, e))?;
    }
    Ok(())
}

/// Picks the loader from the file extension (`.json` is SQuAD, anything else
/// is line-delimited).
pub fn load_samples(path: &Path) -> Result<Loaded, DatasetError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => load_squad(path),
        _ => load_jsonl(path),
    }
}
