//! Prompt templates. The text lives in `prompts/v1/*.txt` and is embedded at
//! build time; placeholders are `{name}` and are filled in a single pass, so
//! substituted values are never re-expanded.

use std::collections::BTreeSet;

pub const TEMPLATE_VERSION: &str = "v1";

pub const QA: &str = include_str!("../prompts/v1/qa.txt");
pub const BASE_DISTRACTOR: &str = include_str!("../prompts/v1/base_distractor.txt");
pub const DEMONSTRATIONS: &str = include_str!("../prompts/v1/demonstrations.txt");
pub const EXTEND_COREF: &str = include_str!("../prompts/v1/extend_coref.txt");
pub const EXTEND_ELABORATION: &str = include_str!("../prompts/v1/extend_elaboration.txt");
pub const OVERLAP_ANCHOR: &str = include_str!("../prompts/v1/overlap_anchor.txt");
pub const LEXICAL_OVERLAP: &str = include_str!("../prompts/v1/lexical_overlap.txt");
pub const BASELINE_REPHRASE: &str = include_str!("../prompts/v1/baseline_rephrase.txt");
pub const BASELINE_EXTENSION: &str = include_str!("../prompts/v1/baseline_extension.txt");

/// Marker preceding the distractor in the editor's reply.
pub const DISTRACTOR_MARKER: &str = "Distractor:";

/// Fills `{name}` placeholders. Unknown placeholders are left as written.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + vars.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}').and_then(|close| {
            let name = &after[..close];
            vars.iter().find(|(k, _)| *k == name).map(|(_, v)| (close, *v))
        }) {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn qa(question: &str, text: &str) -> String {
    render(QA, &[("question", question), ("text", text)])
}

pub fn base_distractor(question: &str) -> String {
    render(BASE_DISTRACTOR, &[("demonstrations", DEMONSTRATIONS), ("question", question)])
}

pub fn extend_coref(base: &str) -> String {
    render(EXTEND_COREF, &[("base_distractor", base)])
}

pub fn extend_elaboration(base: &str) -> String {
    render(EXTEND_ELABORATION, &[("base_distractor", base)])
}

pub fn overlap_anchor(text: &str, anchor: &str, answer: &str) -> String {
    render(OVERLAP_ANCHOR, &[("text", text), ("anchor", anchor), ("answer", answer)])
}

/// `q_words` are listed in sorted order, comma separated.
pub fn lexical_overlap(q_words: &BTreeSet<String>, answer_sentence: &str, answer: &str) -> String {
    let words = q_words.iter().map(String::as_str).collect::<Vec<_>>().join(", ");
    render(LEXICAL_OVERLAP, &[("q_words", &words), ("ans_sentence", answer_sentence), ("answer", answer)])
}

pub fn baseline_rephrase(text: &str, gold: &str) -> String {
    render(BASELINE_REPHRASE, &[("text", text), ("gold label", gold)])
}

pub fn baseline_extension(text: &str) -> String {
    render(BASELINE_EXTENSION, &[("text", text)])
}

/// Text after the last `Distractor:` marker, first non-empty line, trimmed.
/// Replies without a marker are used whole.
pub fn parse_distractor(reply: &str) -> String {
    let tail = reply.rfind(DISTRACTOR_MARKER).map_or(reply, |i| &reply[i + DISTRACTOR_MARKER.len()..]);
    tail.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("").to_string()
}
