//! Sequential adversarial editor.
//!
//! A sample goes through five steps, each consuming the context chosen by
//! the previous one:
//!
//! 1. base distractor: a sentence answering a near-miss question,
//! 2. extended distractor: a coreference rephrase and an elaboration,
//! 3. positioning: every distractor at the beginning and at the end,
//! 4. overlap anchor: push the nearest question word away from the answer,
//! 5. lexical overlap: rewrite the answer sentence without question words.
//!
//! Steps 1, 3, 4 and 5 ask the guide model to answer every valid candidate
//! and keep the most misleading one. The gold answer must survive every
//! step verbatim and no distractor may contain it; candidates violating
//! either rule never reach the guide.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::backend::{answer_question, confidence, score_candidate, select_most_misleading, Backend, CallOptions, Candidate};
use crate::dataset::MrcSample;
use crate::error::{BackendError, PipelineError, TextError};
use crate::metrics::normalize;
use crate::prompts;
use crate::text::{
    content_words, find_anchor, jaccard, locate_answer, question_content_words, split_sentences, token_distance, tokenize,
    EntityRecognizer, HeuristicEntities,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Distractor,
    Extend,
    Position,
    Anchor,
    Lexical,
    BaselineExtension,
    BaselineRephrase,
}

impl StepKind {
    pub const PIPELINE: [StepKind; 5] = [StepKind::Distractor, StepKind::Extend, StepKind::Position, StepKind::Anchor, StepKind::Lexical];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Beginning,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorKind {
    Base,
    ExtendedCoref,
    ExtendedElaboration,
}

impl DistractorKind {
    pub fn is_extended(self) -> bool {
        !matches!(self, DistractorKind::Base)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditMode {
    Full,
    DistractorOnly,
    AnswerSentenceOnly,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    DistractorOnly,
    AnswerSentenceOnly,
}

impl AblationVariant {
    pub fn steps(self) -> BTreeSet<StepKind> {
        match self {
            AblationVariant::DistractorOnly => [StepKind::Distractor, StepKind::Position].into(),
            AblationVariant::AnswerSentenceOnly => [StepKind::Anchor, StepKind::Lexical].into(),
        }
    }
}

fn default_three() -> usize {
    3
}

fn all_steps() -> BTreeSet<StepKind> {
    StepKind::PIPELINE.into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_three")]
    pub candidates_per_step: usize,
    #[serde(default = "default_three")]
    pub lexical_overlap_attempts: usize,
    #[serde(default = "default_three")]
    pub max_validator_retries: usize,
    #[serde(default = "all_steps")]
    pub steps_enabled: BTreeSet<StepKind>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { candidates_per_step: 3, lexical_overlap_attempts: 3, max_validator_retries: 3, steps_enabled: all_steps() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    pub passed: bool,
}

impl Check {
    fn new(check: &str, passed: bool) -> Self {
        Check { check: check.to_string(), passed }
    }
}

/// One generated variant: the editor output that was validated, the checks
/// it went through and, when it passed, the guide's verdict on the full
/// edited context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub slot: usize,
    pub variant: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub text: String,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scored: Option<Candidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Attempt {
    fn new(slot: usize, variant: u32) -> Self {
        Attempt { slot, variant, label: None, text: String::new(), checks: Vec::new(), scored: None, error: None }
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.passed)
    }

    fn failed(mut self, e: impl ToString) -> Self {
        self.error = Some(e.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: StepKind,
    pub attempts: Vec<Attempt>,
    /// Index into `attempts` of the kept candidate. Steps that make no
    /// choice (the extension step) leave it empty without being skipped.
    pub chosen_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped_reason: Option<String>,
}

impl StepRecord {
    fn skipped(step: StepKind, reason: impl Into<String>) -> Self {
        StepRecord { step, attempts: Vec::new(), chosen_index: None, skipped_reason: Some(reason.into()) }
    }

    fn with_attempts(step: StepKind, attempts: Vec<Attempt>) -> Self {
        StepRecord { step, attempts, chosen_index: None, skipped_reason: None }
    }

    pub fn is_skipped(&self) -> bool {
        self.skipped_reason.is_some()
    }

    pub fn chosen(&self) -> Option<&Attempt> {
        self.chosen_index.and_then(|i| self.attempts.get(i))
    }

    /// Validator results of the kept candidate.
    pub fn validator_results(&self) -> &[Check] {
        self.chosen().map_or(&[], |a| a.checks.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditTrace {
    pub sample_id: String,
    pub mode: EditMode,
    pub answer: String,
    pub original_context: String,
    pub final_context: String,
    pub distractor_text: Option<String>,
    pub distractor_position: Option<Position>,
    pub distractor_kind: Option<DistractorKind>,
    pub anchor: Option<String>,
    pub anchor_distance_before: Option<usize>,
    pub anchor_distance_after: Option<usize>,
    pub jaccard_before: Option<f64>,
    pub jaccard_after: Option<f64>,
    pub steps: Vec<StepRecord>,
    pub final_checks: Vec<Check>,
}

impl EditTrace {
    pub fn step(&self, kind: StepKind) -> Option<&StepRecord> {
        self.steps.iter().find(|s| s.step == kind)
    }

    pub fn answer_preserved(&self) -> bool {
        self.final_context.contains(&self.answer)
    }
}

/// True when no normalized gold occurs inside the normalized text.
pub fn answer_free<S: AsRef<str>>(text: &str, golds: &[S]) -> bool {
    let norm = normalize(text);
    golds.iter().all(|g| {
        let g = normalize(g.as_ref());
        g.is_empty() || !norm.contains(&g)
    })
}

pub fn place_distractor(context: &str, distractor: &str, position: Position) -> String {
    match position {
        Position::Beginning => format!("{} {}", distractor.trim(), context.trim_start()),
        Position::End => format!("{} {}", context.trim_end(), distractor.trim()),
    }
}

fn splice(context: &str, range: Range<usize>, replacement: &str) -> String {
    format!("{}{}{}", &context[..range.start], replacement, &context[range.end..])
}

fn final_checks(context: &str, answer: &str, distractor: Option<&str>, golds: &[String]) -> Vec<Check> {
    let mut checks = vec![Check::new("answer_preserved", context.contains(answer))];
    if let Some(d) = distractor {
        checks.push(Check::new("distractor_answer_free", answer_free(d, golds)));
    }
    checks
}

fn trimmed_reply(text: &str) -> String {
    text.trim().to_string()
}

/// Editor and guide together with the configuration of one editing run.
pub struct Pipeline<'a> {
    pub editor: &'a dyn Backend,
    pub guide: &'a dyn Backend,
    pub config: PipelineConfig,
    pub recognizer: &'a dyn EntityRecognizer,
}

static HEURISTIC: HeuristicEntities = HeuristicEntities;

impl<'a> Pipeline<'a> {
    pub fn new(editor: &'a dyn Backend, guide: &'a dyn Backend, config: PipelineConfig) -> Self {
        Pipeline { editor, guide, config, recognizer: &HEURISTIC }
    }

    pub fn with_recognizer(mut self, recognizer: &'a dyn EntityRecognizer) -> Self {
        self.recognizer = recognizer;
        self
    }

    fn edit(&self, prompt: &str, variant: u32) -> Result<String, BackendError> {
        let c = self.editor.complete(prompt, &CallOptions { want_logprobs: false, variant })?;
        Ok(c.text)
    }

    fn guide_score(&self, context: &str, sample: &MrcSample) -> Result<Candidate, BackendError> {
        let c = answer_question(self.guide, context, &sample.question)?;
        c.check()?;
        Ok(score_candidate(context, c.text.trim(), &sample.golds, confidence(&c)))
    }

    /// Fills `slots` candidate slots, retrying a slot up to `retries` times
    /// until its attempt validates. Attempts that validate are scored.
    fn sample_candidates(
        &self,
        sample: &MrcSample,
        slots: usize,
        retries: usize,
        mut make: impl FnMut(u32, Attempt) -> (Attempt, Option<String>),
    ) -> Vec<Attempt> {
        let mut attempts = Vec::new();
        for slot in 0..slots {
            for retry in 0..=retries {
                let variant = (retry * slots + slot) as u32;
                let (mut attempt, context) = make(variant, Attempt::new(slot, variant));
                if let (true, Some(ctx)) = (attempt.passed(), context) {
                    match self.guide_score(&ctx, sample) {
                        Ok(c) => attempt.scored = Some(c),
                        Err(e) => attempt.error = Some(format!("guide: {e}")),
                    }
                }
                let ok = attempt.passed();
                attempts.push(attempt);
                if ok {
                    break;
                }
            }
        }
        attempts
    }

    /// Step 1. Returns the step record and the chosen distractor sentence.
    pub fn generate_base_distractor(&self, sample: &MrcSample) -> Result<(StepRecord, String), PipelineError> {
        let prompt = prompts::base_distractor(&sample.question);
        let attempts =
            self.sample_candidates(sample, self.config.candidates_per_step, self.config.max_validator_retries, |variant, mut a| {
                let reply = match self.edit(&prompt, variant) {
                    Ok(r) => r,
                    Err(e) => return (a.failed(e), None),
                };
                a.text = prompts::parse_distractor(&reply);
                a.checks =
                    vec![Check::new("non_empty", !a.text.is_empty()), Check::new("answer_free", answer_free(&a.text, &sample.golds))];
                let ctx = place_distractor(&sample.context, &a.text, Position::Beginning);
                (a, Some(ctx))
            });
        let mut record = StepRecord::with_attempts(StepKind::Distractor, attempts);
        record.chosen_index = choose(&record.attempts);
        match record.chosen() {
            Some(a) => {
                let text = a.text.clone();
                Ok((record, text))
            }
            None => Err(PipelineError::SampleDiscarded { id: sample.id.clone(), reason: "no base distractor passed validation".into() }),
        }
    }

    /// Step 2. Valid extended variants, each tagged with its kind.
    pub fn extend_distractor(&self, base: &str, golds: &[String]) -> (StepRecord, Vec<(DistractorKind, String)>) {
        let mut attempts = Vec::new();
        let mut variants = Vec::new();

        let mut coref = Attempt::new(0, 0);
        coref.label = Some("extended_coref".into());
        coref = match self.edit(&prompts::extend_coref(base), 0) {
            Ok(reply) => {
                coref.text = trimmed_reply(&reply);
                coref.checks = vec![
                    Check::new("non_empty", !coref.text.is_empty()),
                    Check::new("answer_free", answer_free(&coref.text, golds)),
                    Check::new("longer_than_base", coref.text.len() > base.trim().len()),
                ];
                coref
            }
            Err(e) => coref.failed(e),
        };
        if coref.passed() {
            variants.push((DistractorKind::ExtendedCoref, coref.text.clone()));
        }
        attempts.push(coref);

        let mut elab = Attempt::new(1, 0);
        elab.label = Some("extended_elaboration".into());
        elab = match self.edit(&prompts::extend_elaboration(base), 0) {
            Ok(reply) => {
                let follow = trimmed_reply(&reply);
                elab.text = format!("{} {}", base.trim(), follow);
                elab.checks = vec![Check::new("non_empty", !follow.is_empty()), Check::new("answer_free", answer_free(&elab.text, golds))];
                elab
            }
            Err(e) => elab.failed(e),
        };
        if elab.passed() {
            variants.push((DistractorKind::ExtendedElaboration, elab.text.clone()));
        }
        attempts.push(elab);

        (StepRecord::with_attempts(StepKind::Extend, attempts), variants)
    }

    /// Step 3. Every distractor at both ends of the context, guide-scored.
    /// Returns the record, the chosen placement and the new context.
    pub fn position_distractor(
        &self,
        sample: &MrcSample,
        context: &str,
        distractors: &[(DistractorKind, String)],
    ) -> (StepRecord, Option<(String, Position, DistractorKind, String)>) {
        let mut attempts = Vec::new();
        let mut placements = Vec::new();
        for (kind, text) in distractors {
            for position in [Position::Beginning, Position::End] {
                let mut a = Attempt::new(attempts.len(), 0);
                a.label = Some(format!("{}@{}", kind_name(*kind), position_name(position)));
                a.text = text.clone();
                let ctx = place_distractor(context, text, position);
                a.checks = vec![Check::new("answer_free", answer_free(text, &sample.golds))];
                if a.passed() {
                    match self.guide_score(&ctx, sample) {
                        Ok(c) => a.scored = Some(c),
                        Err(e) => a.error = Some(format!("guide: {e}")),
                    }
                }
                attempts.push(a);
                placements.push((text.clone(), position, *kind, ctx));
            }
        }
        let mut record = StepRecord::with_attempts(StepKind::Position, attempts);
        record.chosen_index = choose(&record.attempts);
        match record.chosen_index {
            Some(i) => (record, Some(placements.swap_remove(i))),
            None => {
                let fallback = distractors
                    .iter()
                    .find(|(k, _)| *k == DistractorKind::Base)
                    .or(distractors.first())
                    .map(|(k, t)| (t.clone(), Position::End, *k, place_distractor(context, t, Position::End)));
                record.skipped_reason = Some("no placement could be scored; distractor appended at the end".into());
                (record, fallback)
            }
        }
    }

    /// Step 4. Rewrites the sentences spanning the anchor and the answer so
    /// that more words separate them. Validator retries apply per slot.
    pub fn edit_overlap_anchor(&self, sample: &MrcSample, context: &str, answer: &str) -> (StepRecord, Option<AnchorEdit>) {
        let ctx_tokens = tokenize(context);
        let span = match locate_answer(context, answer) {
            Ok(s) => s,
            Err(e) => return (StepRecord::skipped(StepKind::Anchor, e.to_string()), None),
        };
        let anchor = match find_anchor(&ctx_tokens, &tokenize(&sample.question), &span) {
            Ok(a) => a,
            Err(TextError::NoAnchor) => return (StepRecord::skipped(StepKind::Anchor, "no anchor"), None),
            Err(e) => return (StepRecord::skipped(StepKind::Anchor, e.to_string()), None),
        };
        let sentences = split_sentences(context);
        let sentence_of = |offset: usize| sentences.iter().position(|s| offset < s.end).unwrap_or(sentences.len().saturating_sub(1));
        let (a, b) = (sentence_of(anchor.char_start), sentence_of(span.char_start));
        let window = sentences[a.min(b)].start..sentences[a.max(b)].end;
        let prompt = prompts::overlap_anchor(&context[window.clone()], &anchor.token_surface, answer);
        let before = anchor.token_distance_to_answer;

        let attempts =
            self.sample_candidates(sample, self.config.candidates_per_step, self.config.max_validator_retries, |variant, mut a| {
                let reply = match self.edit(&prompt, variant) {
                    Ok(r) => r,
                    Err(e) => return (a.failed(e), None),
                };
                a.text = trimmed_reply(&reply);
                let anchor_ok = a.text.contains(&anchor.token_surface);
                let answer_ok = a.text.contains(answer);
                a.checks = vec![Check::new("anchor_present", anchor_ok), Check::new("answer_present", answer_ok)];
                if !(anchor_ok && answer_ok) {
                    return (a, None);
                }
                let new_ctx = splice(context, window.clone(), &a.text);
                let after = anchor_distance(&new_ctx, answer, &anchor.token_surface);
                a.checks.push(Check::new("distance_increased", after.is_some_and(|d| d > before)));
                (a, Some(new_ctx))
            });
        let mut record = StepRecord::with_attempts(StepKind::Anchor, attempts);
        record.chosen_index = choose(&record.attempts);
        let Some(chosen) = record.chosen() else {
            record.skipped_reason = Some("no rewrite passed validation".into());
            return (record, None);
        };
        let new_context = splice(context, window, &chosen.text);
        let after = anchor_distance(&new_context, answer, &anchor.token_surface).unwrap_or(before);
        let edit =
            AnchorEdit { context: new_context, anchor: anchor.token_surface.clone(), distance_before: before, distance_after: after };
        (record, Some(edit))
    }

    /// Step 5. Rewrites the answer sentence avoiding the question's content
    /// words. Exactly `lexical_overlap_attempts` attempts, no retries.
    pub fn reduce_lexical_overlap(&self, sample: &MrcSample, context: &str, answer: &str) -> (StepRecord, Option<LexicalEdit>) {
        let span = match locate_answer(context, answer) {
            Ok(s) => s,
            Err(e) => return (StepRecord::skipped(StepKind::Lexical, e.to_string()), None),
        };
        let sentence = crate::text::answer_sentence(context, &span);
        let q_words = question_content_words(&sample.question, self.recognizer);
        if q_words.is_empty() {
            return (StepRecord::skipped(StepKind::Lexical, "question has no content words"), None);
        }
        let before = jaccard(&q_words, &content_words(&context[sentence.clone()], self.recognizer));
        if before == 0.0 {
            return (StepRecord::skipped(StepKind::Lexical, "no lexical overlap"), None);
        }
        let prompt = prompts::lexical_overlap(&q_words, &context[sentence.clone()], answer);
        let attempts = self.sample_candidates(sample, self.config.lexical_overlap_attempts, 0, |variant, mut a| {
            let reply = match self.edit(&prompt, variant) {
                Ok(r) => r,
                Err(e) => return (a.failed(e), None),
            };
            a.text = trimmed_reply(&reply);
            let answer_ok = a.text.contains(answer);
            let after = jaccard(&q_words, &content_words(&a.text, self.recognizer));
            a.checks = vec![Check::new("answer_present", answer_ok), Check::new("overlap_reduced", after < before)];
            let ctx = splice(context, sentence.clone(), &a.text);
            (a, Some(ctx))
        });
        let mut record = StepRecord::with_attempts(StepKind::Lexical, attempts);
        record.chosen_index = choose(&record.attempts);
        let Some(chosen) = record.chosen() else {
            record.skipped_reason = Some("no rewrite passed validation".into());
            return (record, None);
        };
        let after = jaccard(&q_words, &content_words(&chosen.text, self.recognizer));
        let edit = LexicalEdit { context: splice(context, sentence, &chosen.text), jaccard_before: before, jaccard_after: after };
        (record, Some(edit))
    }

    /// Runs the enabled steps in order. Fails only when the base distractor
    /// cannot be produced; every later step degrades to a recorded skip.
    pub fn run(&self, sample: &MrcSample) -> Result<EditTrace, PipelineError> {
        let mode = if self.config.steps_enabled == all_steps() { EditMode::Full } else { mode_for(&self.config.steps_enabled) };
        self.run_as(sample, mode)
    }

    pub fn run_ablation(&self, sample: &MrcSample, variant: AblationVariant) -> Result<EditTrace, PipelineError> {
        let config = PipelineConfig { steps_enabled: variant.steps(), ..self.config.clone() };
        let p = Pipeline { editor: self.editor, guide: self.guide, config, recognizer: self.recognizer };
        p.run_as(
            sample,
            match variant {
                AblationVariant::DistractorOnly => EditMode::DistractorOnly,
                AblationVariant::AnswerSentenceOnly => EditMode::AnswerSentenceOnly,
            },
        )
    }

    fn run_as(&self, sample: &MrcSample, mode: EditMode) -> Result<EditTrace, PipelineError> {
        let answer = sample
            .primary_answer()
            .ok_or_else(|| TextError::AnswerNotFound(sample.golds.first().cloned().unwrap_or_default()))?
            .to_string();
        let enabled = |k: StepKind| self.config.steps_enabled.contains(&k);
        let mut trace = EditTrace {
            sample_id: sample.id.clone(),
            mode,
            answer: answer.clone(),
            original_context: sample.context.clone(),
            final_context: sample.context.clone(),
            distractor_text: None,
            distractor_position: None,
            distractor_kind: None,
            anchor: None,
            anchor_distance_before: None,
            anchor_distance_after: None,
            jaccard_before: None,
            jaccard_after: None,
            steps: Vec::with_capacity(5),
            final_checks: Vec::new(),
        };

        let base = if enabled(StepKind::Distractor) {
            let (record, base) = self.generate_base_distractor(sample)?;
            trace.steps.push(record);
            Some(base)
        } else {
            trace.steps.push(StepRecord::skipped(StepKind::Distractor, "disabled"));
            None
        };

        let mut distractors = Vec::new();
        if let Some(base) = &base {
            distractors.push((DistractorKind::Base, base.clone()));
        }
        match (&base, enabled(StepKind::Extend)) {
            (Some(base), true) => {
                let (record, extended) = self.extend_distractor(base, &sample.golds);
                trace.steps.push(record);
                distractors.extend(extended);
            }
            (None, true) => trace.steps.push(StepRecord::skipped(StepKind::Extend, "no base distractor")),
            (_, false) => trace.steps.push(StepRecord::skipped(StepKind::Extend, "disabled")),
        }

        match (base.is_some(), enabled(StepKind::Position)) {
            (true, true) => {
                let (record, placed) = self.position_distractor(sample, &trace.final_context, &distractors);
                trace.steps.push(record);
                if let Some((text, position, kind, ctx)) = placed {
                    trace.distractor_text = Some(text);
                    trace.distractor_position = Some(position);
                    trace.distractor_kind = Some(kind);
                    trace.final_context = ctx;
                }
            }
            (true, false) => {
                let (kind, text) = distractors[0].clone();
                trace.final_context = place_distractor(&trace.final_context, &text, Position::Beginning);
                trace.distractor_text = Some(text);
                trace.distractor_position = Some(Position::Beginning);
                trace.distractor_kind = Some(kind);
                trace.steps.push(StepRecord::skipped(StepKind::Position, "disabled; distractor placed at the beginning"));
            }
            (false, true) => trace.steps.push(StepRecord::skipped(StepKind::Position, "no distractor")),
            (false, false) => trace.steps.push(StepRecord::skipped(StepKind::Position, "disabled")),
        }

        if enabled(StepKind::Anchor) {
            let (record, edit) = self.edit_overlap_anchor(sample, &trace.final_context, &answer);
            trace.steps.push(record);
            if let Some(edit) = edit {
                trace.anchor = Some(edit.anchor);
                trace.anchor_distance_before = Some(edit.distance_before);
                trace.anchor_distance_after = Some(edit.distance_after);
                trace.final_context = edit.context;
            }
        } else {
            trace.steps.push(StepRecord::skipped(StepKind::Anchor, "disabled"));
        }

        if enabled(StepKind::Lexical) {
            let (record, edit) = self.reduce_lexical_overlap(sample, &trace.final_context, &answer);
            trace.steps.push(record);
            if let Some(edit) = edit {
                trace.jaccard_before = Some(edit.jaccard_before);
                trace.jaccard_after = Some(edit.jaccard_after);
                trace.final_context = edit.context;
            }
        } else {
            trace.steps.push(StepRecord::skipped(StepKind::Lexical, "disabled"));
        }

        trace.final_checks = final_checks(&trace.final_context, &answer, trace.distractor_text.as_deref(), &sample.golds);
        Ok(trace)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorEdit {
    pub context: String,
    pub anchor: String,
    pub distance_before: usize,
    pub distance_after: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalEdit {
    pub context: String,
    pub jaccard_before: f64,
    pub jaccard_after: f64,
}

fn choose(attempts: &[Attempt]) -> Option<usize> {
    let scored: Vec<(usize, Candidate)> =
        attempts.iter().enumerate().filter(|(_, a)| a.passed()).filter_map(|(i, a)| a.scored.clone().map(|c| (i, c))).collect();
    let candidates: Vec<Candidate> = scored.iter().map(|(_, c)| c.clone()).collect();
    select_most_misleading(&candidates).map(|k| scored[k].0)
}

fn mode_for(steps: &BTreeSet<StepKind>) -> EditMode {
    if *steps == AblationVariant::DistractorOnly.steps() {
        EditMode::DistractorOnly
    } else if *steps == AblationVariant::AnswerSentenceOnly.steps() {
        EditMode::AnswerSentenceOnly
    } else {
        EditMode::Full
    }
}

fn kind_name(kind: DistractorKind) -> &'static str {
    match kind {
        DistractorKind::Base => "base",
        DistractorKind::ExtendedCoref => "extended_coref",
        DistractorKind::ExtendedElaboration => "extended_elaboration",
    }
}

fn position_name(position: Position) -> &'static str {
    match position {
        Position::Beginning => "beginning",
        Position::End => "end",
    }
}

/// Smallest token distance between the answer and any occurrence of the
/// anchor word (case-folded) outside the answer.
pub fn anchor_distance(context: &str, answer: &str, anchor: &str) -> Option<usize> {
    let span = locate_answer(context, answer).ok()?;
    let tokens = tokenize(context);
    let folded = anchor.to_lowercase();
    let range = span.range();
    tokens
        .words()
        .filter(|(_, t)| t.folded() == folded && !(t.char_start < range.end && t.char_end > range.start))
        .map(|(_, t)| token_distance(&tokens, &t.span(), &range))
        .min()
}

/// Non-targeted edit: append a free extension, then rephrase the answer
/// sentence keeping the answer verbatim. No guide involvement.
pub fn run_baseline(sample: &MrcSample, editor: &dyn Backend, config: &PipelineConfig) -> Result<EditTrace, PipelineError> {
    let answer =
        sample.primary_answer().ok_or_else(|| TextError::AnswerNotFound(sample.golds.first().cloned().unwrap_or_default()))?.to_string();
    let fail = |reason: &str| PipelineError::BaselineFailed { id: sample.id.clone(), reason: reason.to_string() };
    let call = |prompt: &str, variant: u32| editor.complete(prompt, &CallOptions { want_logprobs: false, variant }).map(|c| c.text);

    let mut ext_attempts = Vec::new();
    let ext_prompt = prompts::baseline_extension(&sample.context);
    for retry in 0..=config.max_validator_retries {
        let mut a = Attempt::new(0, retry as u32);
        a = match call(&ext_prompt, retry as u32) {
            Ok(reply) => {
                a.text = trimmed_reply(&reply);
                a.checks = vec![Check::new("non_empty", !a.text.is_empty())];
                a
            }
            Err(e) => a.failed(e),
        };
        let ok = a.passed();
        ext_attempts.push(a);
        if ok {
            break;
        }
    }
    let mut ext_record = StepRecord::with_attempts(StepKind::BaselineExtension, ext_attempts);
    ext_record.chosen_index = ext_record.attempts.iter().position(Attempt::passed);
    let extension = ext_record.chosen().ok_or_else(|| fail("no usable extension"))?.text.clone();
    let extended = place_distractor(&sample.context, &extension, Position::End);

    let span = locate_answer(&extended, &answer)?;
    let sentence = crate::text::answer_sentence(&extended, &span);
    let re_prompt = prompts::baseline_rephrase(&extended[sentence.clone()], &answer);
    let mut re_attempts = Vec::new();
    for retry in 0..=config.max_validator_retries {
        let mut a = Attempt::new(0, retry as u32);
        a = match call(&re_prompt, retry as u32) {
            Ok(reply) => {
                a.text = trimmed_reply(&reply);
                a.checks = vec![Check::new("answer_present", a.text.contains(&answer))];
                a
            }
            Err(e) => a.failed(e),
        };
        let ok = a.passed();
        re_attempts.push(a);
        if ok {
            break;
        }
    }
    let mut re_record = StepRecord::with_attempts(StepKind::BaselineRephrase, re_attempts);
    re_record.chosen_index = re_record.attempts.iter().position(Attempt::passed);
    let rephrased = re_record.chosen().ok_or_else(|| fail("no rephrase preserved the answer"))?.text.clone();
    let final_context = splice(&extended, sentence, &rephrased);

    Ok(EditTrace {
        sample_id: sample.id.clone(),
        mode: EditMode::Baseline,
        answer: answer.clone(),
        original_context: sample.context.clone(),
        final_checks: final_checks(&final_context, &answer, None, &sample.golds),
        final_context,
        distractor_text: None,
        distractor_position: None,
        distractor_kind: None,
        anchor: None,
        anchor_distance_before: None,
        anchor_distance_after: None,
        jaccard_before: None,
        jaccard_after: None,
        steps: vec![ext_record, re_record],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockResponse, MockRule, PromptPattern, TokenLogprob};
    use crate::dataset::Source;

    fn resp(text: &str, lps: &[f64]) -> MockResponse {
        MockResponse { text: text.into(), token_logprobs: lps.iter().map(|&lp| TokenLogprob { token: "t".into(), logprob: lp }).collect() }
    }

    fn rule(pattern: &str, responses: Vec<MockResponse>) -> MockRule {
        MockRule { pattern: PromptPattern::Regex(pattern.into()), responses }
    }

    fn sample() -> MrcSample {
        MrcSample {
            id: "s1".into(),
            context: "The museum opened long ago. Gifts came in 1913 when the V&A received the Talbot Hughes collection.".into(),
            question: "When did the V&A receive the Talbot Hughes collection?".into(),
            golds: vec!["1913".into()],
            source: Source::Squad,
        }
    }

    #[test]
    fn answer_free_uses_normalization() {
        assert!(!answer_free("It was THE 1913.", &["1913"]));
        assert!(answer_free("In 1998, the V&A received the Picasso collection.", &["1913"]));
    }

    #[test]
    fn placement_rules() {
        assert_eq!(place_distractor("Ctx here.", "D.", Position::Beginning), "D. Ctx here.");
        assert_eq!(place_distractor("Ctx here. ", "D.", Position::End), "Ctx here. D.");
    }

    #[test]
    fn base_distractor_picks_wrong_confident_variant() {
        // variant A leaves the guide right, variant B misleads it with conf 1.2
        let editor = MockBackend::new(
            "editor",
            vec![rule(
                "smart editor",
                vec![resp("Distractor: In 1998, the V&A got A.", &[]), resp("Distractor: In 1998, the V&A got B.", &[])],
            )],
        )
        .unwrap();
        // p1 = 0.7 and sqrt(p2) = 0.5 give confidence 1.2 on B
        let guide = MockBackend::new(
            "guide",
            vec![
                rule("Context: In 1998, the V&A got B", vec![resp("1998", &[0.7f64.ln(), 2.0 * 0.5f64.ln()])]),
                rule("Context: ", vec![resp("1913", &[-0.05])]),
            ],
        )
        .unwrap();
        let cfg = PipelineConfig { candidates_per_step: 2, ..PipelineConfig::default() };
        let p = Pipeline::new(&editor, &guide, cfg);
        let (record, base) = p.generate_base_distractor(&sample()).unwrap();
        // brute force over the two (delta, C) pairs
        let scores: Vec<f64> = record.attempts.iter().map(|a| a.scored.as_ref().unwrap().misleading_score).collect();
        let best = (0..scores.len()).max_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(b.cmp(&a))).unwrap();
        assert_eq!(record.chosen_index, Some(best));
        assert_eq!(base, "In 1998, the V&A got B.");
        let b = record.attempts[1].scored.as_ref().unwrap();
        assert_eq!(b.delta, -1);
        assert!((b.confidence - 1.2).abs() < 1e-12);
    }

    #[test]
    fn distractor_with_gold_is_rejected_and_retried() {
        let editor = MockBackend::new(
            "editor",
            vec![rule("smart editor", vec![resp("Distractor: It happened in 1913.", &[]), resp("Distractor: It happened in 1998.", &[])])],
        )
        .unwrap();
        let guide = MockBackend::new("guide", vec![rule("Context: ", vec![resp("1998", &[-0.1])])]).unwrap();
        let cfg = PipelineConfig { candidates_per_step: 1, ..PipelineConfig::default() };
        let (record, base) = Pipeline::new(&editor, &guide, cfg).generate_base_distractor(&sample()).unwrap();
        assert_eq!(record.attempts.len(), 2);
        assert!(!record.attempts[0].passed());
        assert!(record.attempts[0].checks.iter().any(|c| c.check == "answer_free" && !c.passed));
        assert_eq!(base, "It happened in 1998.");
    }

    #[test]
    fn all_invalid_distractors_discard_sample() {
        let editor = MockBackend::new("editor", vec![rule("smart editor", vec![resp("Distractor: 1913 again", &[])])]).unwrap();
        let guide = MockBackend::new("guide", vec![]).unwrap();
        let p = Pipeline::new(&editor, &guide, PipelineConfig::default());
        let err = p.run(&sample()).unwrap_err();
        assert!(matches!(err, PipelineError::SampleDiscarded { .. }));
    }

    #[test]
    fn positioning_scores_every_placement() {
        let editor = MockBackend::new("editor", vec![]).unwrap();
        let guide = MockBackend::new(
            "guide",
            vec![
                rule("collection\\. Third\\. \\nExtracted", vec![resp("Third", &[-0.01, -0.01])]),
                rule("Context: ", vec![resp("1913", &[-0.2])]),
            ],
        )
        .unwrap();
        let p = Pipeline::new(&editor, &guide, PipelineConfig::default());
        let ds = vec![
            (DistractorKind::Base, "First.".to_string()),
            (DistractorKind::ExtendedCoref, "Second.".to_string()),
            (DistractorKind::ExtendedElaboration, "Third.".to_string()),
        ];
        let s = sample();
        let (record, placed) = p.position_distractor(&s, &s.context, &ds);
        assert_eq!(record.attempts.len(), 6);
        assert!(record.attempts.iter().all(|a| a.scored.is_some()));
        let (text, position, kind, ctx) = placed.unwrap();
        assert_eq!((text.as_str(), position, kind), ("Third.", Position::End, DistractorKind::ExtendedElaboration));
        assert!(ctx.ends_with("collection. Third."));
    }

    #[test]
    fn anchor_step_accepts_only_longer_distance() {
        let s = sample();
        let ctx = s.context.clone();
        let editor = MockBackend::new(
            "editor",
            vec![rule(
                "add words between",
                vec![
                    resp("Gifts came in 1913 when the museum received it.", &[]),
                    resp(
                        "Gifts came in 1913, a landmark year for the whole museum, when the V&A received the Talbot Hughes collection.",
                        &[],
                    ),
                ],
            )],
        )
        .unwrap();
        let guide = MockBackend::new("guide", vec![rule("Context: ", vec![resp("1913", &[-0.3])])]).unwrap();
        let cfg = PipelineConfig { candidates_per_step: 1, ..PipelineConfig::default() };
        let p = Pipeline::new(&editor, &guide, cfg);
        let (record, edit) = p.edit_overlap_anchor(&s, &ctx, "1913");
        assert!(record.skipped_reason.is_none());
        assert!(record.attempts[0].checks.iter().any(|c| c.check == "anchor_present" && !c.passed));
        let edit = edit.unwrap();
        assert_eq!(edit.anchor, "V");
        assert_eq!(edit.distance_before, 2);
        // oracle: words between "1913" and "V" in the accepted rewrite
        let oracle = "a landmark year for the whole museum when the".split_whitespace().count();
        assert_eq!(edit.distance_after, oracle);
        assert!(edit.context.contains("1913"));
    }

    #[test]
    fn anchor_step_skips_without_anchor() {
        let mut s = sample();
        s.question = "Which year?".into();
        let editor = MockBackend::new("editor", vec![]).unwrap();
        let p = Pipeline::new(&editor, &editor, PipelineConfig::default());
        let (record, edit) = p.edit_overlap_anchor(&s, &s.context, "1913");
        assert_eq!(record.skipped_reason.as_deref(), Some("no anchor"));
        assert!(edit.is_none());
    }

    #[test]
    fn lexical_step_all_fail_is_skipped() {
        let s = sample();
        let editor =
            MockBackend::new("editor", vec![rule("Don't use the words", vec![resp("The V&A took the Talbot Hughes collection.", &[])])])
                .unwrap();
        let guide = MockBackend::new("guide", vec![]).unwrap();
        let p = Pipeline::new(&editor, &guide, PipelineConfig::default());
        let (record, edit) = p.reduce_lexical_overlap(&s, &s.context, "1913");
        assert_eq!(record.attempts.len(), 3);
        assert!(record.is_skipped());
        assert!(edit.is_none());
    }

    #[test]
    fn lexical_step_records_jaccard() {
        let s = sample();
        let editor = MockBackend::new(
            "editor",
            vec![rule("Don't use the words", vec![resp("In 1913 the museum was given clothing by a benefactor.", &[])])],
        )
        .unwrap();
        let guide = MockBackend::new("guide", vec![rule("Context: ", vec![resp("1913", &[-0.4])])]).unwrap();
        let p = Pipeline::new(&editor, &guide, PipelineConfig::default());
        let (record, edit) = p.reduce_lexical_overlap(&s, &s.context, "1913");
        let edit = edit.unwrap();
        assert_eq!(record.chosen_index, Some(0));
        // question content words: {receive, collection}; answer sentence adds {gifts, came, received}
        assert!((edit.jaccard_before - 1.0 / 5.0).abs() < 1e-12);
        assert_eq!(edit.jaccard_after, 0.0);
        assert!(edit.context.starts_with("The museum opened long ago. In 1913 the museum"));
    }

    #[test]
    fn baseline_appends_then_rephrases() {
        let s = sample();
        let editor = MockBackend::new(
            "editor",
            vec![
                rule("^Write an extension", vec![resp("It is still on display.", &[])]),
                rule(
                    "^Rephrase the text below",
                    vec![resp("Gifts arrived without a date.", &[]), resp("In 1913 the V&A was given the Talbot Hughes collection.", &[])],
                ),
            ],
        )
        .unwrap();
        let trace = run_baseline(&s, &editor, &PipelineConfig::default()).unwrap();
        assert_eq!(trace.steps[1].attempts.len(), 2);
        assert!(trace.final_context.ends_with("It is still on display."));
        assert!(trace.final_context.contains("In 1913 the V&A was given"));
        assert!(trace.answer_preserved());

        let bad = MockBackend::new(
            "editor",
            vec![rule("^Write an extension", vec![resp("More.", &[])]), rule("^Rephrase", vec![resp("No date here.", &[])])],
        )
        .unwrap();
        assert!(matches!(run_baseline(&s, &bad, &PipelineConfig::default()), Err(PipelineError::BaselineFailed { .. })));
    }
}
