//! Deterministic text mechanics: tokenization with byte offsets, sentence
//! segmentation, answer location, anchor search and lexical overlap.
//!
//! All offsets are byte offsets into the source string and always fall on
//! `char` boundaries.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::TextError;

/// Function words ignored by anchor search and content-word extraction.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "am", "an", "and", "are", "as", "at", "be", "been", "being", "but", "by", "can", "could", "did",
    "do", "does", "for", "from", "had", "has", "have", "he", "her", "his", "how", "i", "if", "in", "into", "is", "it", "its", "not", "of",
    "on", "or", "over", "she", "so", "than", "that", "the", "their", "then", "there", "these", "they", "this", "those", "to", "under",
    "was", "we", "were", "what", "when", "where", "which", "who", "whom", "whose", "why", "will", "with", "would", "you",
];

/// Tokens that end in a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "st", "jr", "sr", "vs", "etc", "inc", "ltd", "co", "corp", "mt", "no", "gen", "col", "lt", "sgt",
    "capt", "rev", "gov", "sen", "rep", "fig", "e.g", "i.e", "u.s", "u.k", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept",
    "oct", "nov", "dec", "approx", "est", "dept", "univ",
];

pub fn is_stopword(folded: &str) -> bool {
    STOPWORDS.binary_search(&folded).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub char_start: usize,
    pub char_end: usize,
    pub is_word: bool,
}

impl Token {
    pub fn span(&self) -> Range<usize> {
        self.char_start..self.char_end
    }

    pub fn folded(&self) -> String {
        self.surface.to_lowercase()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    pub source: String,
    pub tokens: Vec<Token>,
}

impl TokenizedText {
    pub fn words(&self) -> impl Iterator<Item = (usize, &Token)> {
        self.tokens.iter().enumerate().filter(|(_, t)| t.is_word)
    }

    /// Indices of tokens that lie entirely inside `span`.
    pub fn tokens_within(&self, span: &Range<usize>) -> Range<usize> {
        let first = self.tokens.iter().position(|t| t.char_start >= span.start).unwrap_or(self.tokens.len());
        let last = self.tokens.iter().rposition(|t| t.char_end <= span.end).map_or(0, |i| i + 1);
        first..last.max(first)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub char_start: usize,
    pub char_end: usize,
    pub sentence_index: usize,
}

impl AnswerSpan {
    pub fn range(&self) -> Range<usize> {
        self.char_start..self.char_end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub token_surface: String,
    pub char_start: usize,
    pub token_distance_to_answer: usize,
}

impl Anchor {
    pub fn range(&self) -> Range<usize> {
        self.char_start..self.char_start + self.token_surface.len()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '\u{2019}'
}

/// Words are maximal runs of letters, digits and apostrophes. Every other
/// non-whitespace character is its own punctuation token.
pub fn tokenize(text: &str) -> TokenizedText {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            word_start.get_or_insert(i);
            continue;
        }
        if let Some(start) = word_start.take() {
            tokens.push(Token { surface: text[start..i].to_string(), char_start: start, char_end: i, is_word: true });
        }
        if !c.is_whitespace() {
            let end = i + c.len_utf8();
            tokens.push(Token { surface: text[i..end].to_string(), char_start: i, char_end: end, is_word: false });
        }
    }
    if let Some(start) = word_start {
        tokens.push(Token { surface: text[start..].to_string(), char_start: start, char_end: text.len(), is_word: true });
    }
    TokenizedText { source: text.to_string(), tokens }
}

fn is_abbreviation(text: &str, period: usize) -> bool {
    let before = &text[..period];
    let word_start = before.char_indices().rev().find(|&(_, c)| !(c.is_alphanumeric() || c == '.')).map_or(0, |(i, c)| i + c.len_utf8());
    let word = &before[word_start..];
    if word.is_empty() {
        return false;
    }
    let mut chars = word.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        // single-letter initials such as "J. Smith"
        return c.is_uppercase();
    }
    let folded = word.to_lowercase();
    ABBREVIATIONS.contains(&folded.as_str())
}

/// Splits `text` into trimmed sentence spans. A boundary is a `.`, `!` or `?`
/// (optionally followed by closing quotes or brackets) followed by whitespace
/// and an uppercase letter, unless the period closes a known abbreviation.
pub fn split_sentences(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}') {
                j += 1;
            }
            let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let boundary = k > j && k < chars.len() && chars[k].1.is_uppercase() && !(c == '.' && is_abbreviation(text, pos));
            if boundary {
                push_trimmed(text, start..end, &mut spans);
                start = chars[k].0;
                i = k;
                continue;
            }
        }
        i += 1;
    }
    push_trimmed(text, start..text.len(), &mut spans);
    spans
}

fn push_trimmed(text: &str, range: Range<usize>, out: &mut Vec<Range<usize>>) {
    let slice = &text[range.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    if lead + trail < slice.len() {
        out.push(range.start + lead..range.end - trail);
    }
}

fn sentence_index_of(sentences: &[Range<usize>], offset: usize) -> usize {
    sentences.iter().position(|s| offset < s.end).unwrap_or(sentences.len().saturating_sub(1))
}

/// First verbatim, case-sensitive occurrence of `answer` in `context`.
pub fn locate_answer(context: &str, answer: &str) -> Result<AnswerSpan, TextError> {
    if answer.is_empty() {
        return Err(TextError::EmptyAnswer);
    }
    let start = context.find(answer).ok_or_else(|| TextError::AnswerNotFound(answer.to_string()))?;
    let sentences = split_sentences(context);
    Ok(AnswerSpan { char_start: start, char_end: start + answer.len(), sentence_index: sentence_index_of(&sentences, start) })
}

/// Sentence containing the first byte of the answer.
pub fn answer_sentence(context: &str, answer: &AnswerSpan) -> Range<usize> {
    let sentences = split_sentences(context);
    if sentences.is_empty() {
        return 0..context.len();
    }
    sentences[sentence_index_of(&sentences, answer.char_start)].clone()
}

/// Word tokens strictly between two spans; 0 for adjacent or overlapping spans.
pub fn token_distance(context: &TokenizedText, a: &Range<usize>, b: &Range<usize>) -> usize {
    let (lo, hi) = if a.start <= b.start { (a.end, b.start) } else { (b.end, a.start) };
    if hi <= lo {
        return 0;
    }
    context.words().filter(|(_, t)| t.char_start >= lo && t.char_end <= hi).count()
}

fn question_word_set(question: &TokenizedText) -> BTreeSet<String> {
    question.words().map(|(_, t)| t.folded()).filter(|w| !is_stopword(w)).collect()
}

/// Closest context word that also occurs in the question, ignoring stopwords
/// and tokens inside the answer. Ties prefer the token before the answer,
/// then the lower index.
pub fn find_anchor(context: &TokenizedText, question: &TokenizedText, answer: &AnswerSpan) -> Result<Anchor, TextError> {
    let question_words = question_word_set(question);
    let answer_range = answer.range();
    let mut best: Option<((usize, bool, usize), &Token)> = None;
    for (idx, tok) in context.words() {
        let inside = tok.char_start < answer_range.end && tok.char_end > answer_range.start;
        if inside || !question_words.contains(&tok.folded()) {
            continue;
        }
        let distance = token_distance(context, &tok.span(), &answer_range);
        let after = tok.char_start >= answer_range.end;
        let key = (distance, after, idx);
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, tok));
        }
    }
    best.map(|((distance, _, _), tok)| Anchor {
        token_surface: tok.surface.clone(),
        char_start: tok.char_start,
        token_distance_to_answer: distance,
    })
    .ok_or(TextError::NoAnchor)
}

/// Marks tokens that belong to named entities.
pub trait EntityRecognizer: Send + Sync {
    fn entity_mask(&self, text: &TokenizedText) -> Vec<bool>;
}

/// Capitalized words that do not open a sentence, and any token containing a
/// digit, are treated as entity parts.
#[derive(Debug, Default, Clone, Copy)]
pub struct HeuristicEntities;

impl EntityRecognizer for HeuristicEntities {
    fn entity_mask(&self, text: &TokenizedText) -> Vec<bool> {
        let sentences = split_sentences(&text.source);
        let mut seen_word_in = vec![false; sentences.len().max(1)];
        text.tokens
            .iter()
            .map(|t| {
                if !t.is_word {
                    return false;
                }
                let s = sentence_index_of(&sentences, t.char_start);
                let sentence_initial = !std::mem::replace(&mut seen_word_in[s], true);
                let numeric = t.surface.chars().any(|c| c.is_ascii_digit());
                let capitalized = t.surface.chars().next().is_some_and(char::is_uppercase);
                numeric || (capitalized && !sentence_initial)
            })
            .collect()
    }
}

/// Case-folded non-stopword, non-entity words of `text`.
pub fn content_words(text: &str, recognizer: &dyn EntityRecognizer) -> BTreeSet<String> {
    let tokens = tokenize(text);
    let mask = recognizer.entity_mask(&tokens);
    tokens.tokens.iter().zip(mask).filter(|(t, entity)| t.is_word && !entity).map(|(t, _)| t.folded()).filter(|w| !is_stopword(w)).collect()
}

pub fn question_content_words(question: &str, recognizer: &dyn EntityRecognizer) -> BTreeSet<String> {
    content_words(question, recognizer)
}

/// |a ∩ b| / |a ∪ b|, with two empty sets scoring 1.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(t: &TokenizedText) -> Vec<&str> {
        t.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    #[test]
    fn stopwords_sorted_for_binary_search() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, STOPWORDS);
    }

    #[test]
    fn tokenize_examples() {
        assert!(tokenize("").tokens.is_empty());
        let t = tokenize("In 1913.");
        assert_eq!(surfaces(&t), ["In", "1913", "."]);
        assert_eq!(t.tokens.iter().map(|t| t.is_word).collect::<Vec<_>>(), [true, true, false]);
        assert_eq!(surfaces(&tokenize("Xiliang-fu")), ["Xiliang", "-", "fu"]);
        assert_eq!(surfaces(&tokenize("courts' don't")), ["courts'", "don't"]);
    }

    #[test]
    fn sentence_examples() {
        assert_eq!(split_sentences("A b. C d.").len(), 2);
        let text = "Dr. Smith won. He left.";
        let spans = split_sentences(text);
        assert_eq!(spans.len(), 2);
        assert_eq!(&text[spans[0].clone()], "Dr. Smith won.");
        assert_eq!(split_sentences("no terminal punctuation here").len(), 1);
        assert!(split_sentences("   ").is_empty());
        assert_eq!(split_sentences("It cost 3.5 dollars. Then more.").len(), 2);
        assert_eq!(split_sentences("He said \"stop.\" She did.").len(), 2);
    }

    #[test]
    fn locate_answer_cases() {
        let ctx = "came in 1913 when";
        let span = locate_answer(ctx, "1913").unwrap();
        assert_eq!(&ctx[span.range()], "1913");
        assert!(matches!(locate_answer(ctx, "1914"), Err(TextError::AnswerNotFound(_))));
        let twice = "1913 and again 1913";
        assert_eq!(locate_answer(twice, "1913").unwrap().char_start, 0);
        assert!(matches!(locate_answer(ctx, ""), Err(TextError::EmptyAnswer)));
    }

    #[test]
    fn token_distance_cases() {
        let ctx = tokenize("anchor w1 w2 w3 answer");
        assert_eq!(token_distance(&ctx, &(0..6), &(16..22)), 3);
        assert_eq!(token_distance(&ctx, &(16..22), &(0..6)), 3);
        assert_eq!(token_distance(&ctx, &(0..6), &(7..9)), 0);
        assert_eq!(token_distance(&ctx, &(0..9), &(7..12)), 0);
    }

    #[test]
    fn anchor_on_talbot_sample() {
        let context = "One of the first significant gifts of costume came in 1913 when the V&A received the Talbot Hughes collection containing 1,442 costumes.";
        let question = "When did the V&A receive the Talbot Hughes collection?";
        let ctx = tokenize(context);
        let q = tokenize(question);
        let answer = locate_answer(context, "1913").unwrap();
        let anchor = find_anchor(&ctx, &q, &answer).unwrap();
        // brute force over every overlap word
        let q_words: BTreeSet<String> = q.words().map(|(_, t)| t.folded()).filter(|w| !is_stopword(w)).collect();
        let min = ctx
            .words()
            .filter(|(_, t)| q_words.contains(&t.folded()) && t.surface != "1913")
            .map(|(_, t)| token_distance(&ctx, &t.span(), &answer.range()))
            .min()
            .unwrap();
        assert_eq!(anchor.token_distance_to_answer, min);
        // "when" and "the" are stopwords, so the first overlap word is "V"
        assert_eq!(anchor.token_surface, "V");
        assert_eq!(anchor.token_distance_to_answer, 2);
    }

    #[test]
    fn anchor_tie_prefers_preceding_token() {
        let context = "alpha x 1913 x alpha";
        let ctx = tokenize(context);
        let q = tokenize("what alpha?");
        let answer = locate_answer(context, "1913").unwrap();
        assert_eq!(find_anchor(&ctx, &q, &answer).unwrap().char_start, 0);
    }

    #[test]
    fn anchor_errors() {
        let context = "came in 1913 when";
        let answer = locate_answer(context, "1913").unwrap();
        let ctx = tokenize(context);
        assert_eq!(find_anchor(&ctx, &tokenize("Which year?"), &answer), Err(TextError::NoAnchor));
        // "1913" only overlaps inside the answer span
        assert_eq!(find_anchor(&ctx, &tokenize("Was it 1913?"), &answer), Err(TextError::NoAnchor));
    }

    #[test]
    fn content_words_cases() {
        let r = HeuristicEntities;
        assert!(question_content_words("Who is X?", &r).is_empty());
        assert!(question_content_words("", &r).is_empty());
        let words = question_content_words("According to the theory, what does the name Huguenot mean?", &r);
        let expected: BTreeSet<String> = ["according", "theory", "name", "mean"].iter().map(|s| s.to_string()).collect();
        assert_eq!(words, expected);
    }

    #[test]
    fn jaccard_cases() {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
        assert_eq!(jaccard(&set(&["a"]), &set(&["b"])), 0.0);
        assert_eq!(jaccard(&set(&["a", "b", "c"]), &set(&["b", "c", "d"])), 0.5);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 1.0);
    }

    #[test]
    fn answer_sentence_cases() {
        let one = "Only one sentence with 1913 inside";
        let span = locate_answer(one, "1913").unwrap();
        assert_eq!(answer_sentence(one, &span), 0..one.len());
        let three = "First one. Second has 1913 here. Third one.";
        let span = locate_answer(three, "1913").unwrap();
        assert_eq!(span.sentence_index, 1);
        assert_eq!(&three[answer_sentence(three, &span)], "Second has 1913 here.");
        let tail = "First one. Ends with 1913";
        let span = locate_answer(tail, "1913").unwrap();
        assert_eq!(&tail[answer_sentence(tail, &span)], "Ends with 1913");
    }
}
