//! Decoding and orchestration for the tagging, count-then-select, iterative
//! and generative answer extractors, plus the count-sentence formats used to
//! fuse answer counting into generation.

use std::collections::HashSet;
use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::client::{query, Mode, ModelClient, ModelRequest, ModelResult, K_MAX};
use crate::error::{ClientError, DecodeError, RunError};
use crate::model::{normalize, Instance, PredictedSpan, PredictionSet, TokenizedText};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MAX_ITERS: usize = K_MAX;

/// Per-token probability of the inside label.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLabeling {
    probs: Vec<f64>,
}

impl TokenLabeling {
    pub fn new(probs: Vec<f64>, passage: &TokenizedText) -> Result<Self, DecodeError> {
        if probs.len() != passage.len() {
            return Err(DecodeError::LengthMismatch { labels: probs.len(), tokens: passage.len() });
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(DecodeError::BadProbability(*p));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Maximal runs of tokens with probability at or above `threshold`, in
/// passage order.
pub fn tagging_decode(labeling: &TokenLabeling, threshold: f64) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, p) in labeling.probs.iter().enumerate() {
        match (start, *p >= threshold) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                spans.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(s..labeling.probs.len());
    }
    spans
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSpan {
    pub token_range: Range<usize>,
    pub score: f64,
}

impl CandidateSpan {
    pub fn new(token_range: Range<usize>, score: f64, passage_len: usize) -> Result<Self, DecodeError> {
        if token_range.start >= token_range.end || token_range.end > passage_len {
            return Err(DecodeError::BadCandidate { start: token_range.start, end: token_range.end, len: passage_len });
        }
        if !score.is_finite() {
            return Err(DecodeError::NonFiniteScore(score));
        }
        Ok(Self { token_range, score })
    }

    pub fn overlaps(&self, other: &CandidateSpan) -> bool {
        self.token_range.start < other.token_range.end && other.token_range.start < self.token_range.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountPrediction {
    k: usize,
}

impl CountPrediction {
    pub fn new(k: usize, k_max: usize) -> Result<Self, DecodeError> {
        if k == 0 || k > k_max {
            return Err(DecodeError::BadCount { k, k_max });
        }
        Ok(Self { k })
    }

    /// Argmax of a distribution over 1..=len; ties go to the smaller count.
    pub fn from_distribution(dist: &[f64]) -> Result<Self, DecodeError> {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, p) in dist.iter().enumerate() {
            if !(0.0..=1.0).contains(p) {
                return Err(DecodeError::BadProbability(*p));
            }
            if *p > best.1 {
                best = (i, *p);
            }
        }
        Self::new(best.0 + 1, dist.len().max(1))
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Greedy top-k selection of non-overlapping candidates: descending score,
/// ties broken by smaller start, then shorter span.
pub fn numpred_select(candidates: &[CandidateSpan], k: usize) -> Vec<CandidateSpan> {
    let mut order: Vec<&CandidateSpan> = candidates.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.token_range.start.cmp(&b.token_range.start))
            .then(a.token_range.len().cmp(&b.token_range.len()))
    });
    let mut kept: Vec<CandidateSpan> = Vec::new();
    for c in order {
        if kept.len() == k {
            break;
        }
        if !kept.iter().any(|s| s.overlaps(c)) {
            kept.push(c.clone());
        }
    }
    kept
}

/// Appends previously found answers to the question after "except".
pub fn iterative_rewrite<S: AsRef<str>>(question: &str, found: &[S]) -> String {
    if found.is_empty() {
        return question.to_owned();
    }
    let joined: Vec<&str> = found.iter().map(AsRef::as_ref).collect();
    format!("{question} except {}", joined.join(", "))
}

#[derive(Debug)]
pub struct IterativeOutcome {
    pub prediction: PredictionSet,
    pub calls: usize,
    /// Set when a client failure cut the loop short; `prediction` then holds
    /// the answers found before the failure.
    pub error: Option<ClientError>,
}

/// Extracts one answer per call, feeding found answers back through
/// [`iterative_rewrite`], until the model returns nothing new or `max_iters`
/// calls have been made.
pub fn iterative_run<C: ModelClient + ?Sized>(client: &C, instance: &Instance, max_iters: usize) -> IterativeOutcome {
    let mut found: Vec<PredictedSpan> = Vec::new();
    let mut seen = HashSet::new();
    let mut calls = 0;
    let mut error = None;
    while calls < max_iters {
        let texts: Vec<&str> = found.iter().map(|s| s.text.as_str()).collect();
        let request = ModelRequest::new(
            format!("{}#{calls}", instance.id),
            Mode::ExtractOne,
            iterative_rewrite(instance.question.raw(), &texts),
            instance.passage.raw(),
        );
        calls += 1;
        let span = match query(client, &request) {
            Ok(ModelResult::Span(s)) => s,
            Ok(_) => unreachable!("query validates the result variant"),
            Err(e) => {
                error = Some(e);
                break;
            }
        };
        let norm = normalize(&span.text);
        if norm.is_empty() || !seen.insert(norm) {
            break;
        }
        found.push(PredictedSpan { text: span.text, score: Some(span.score) });
    }
    let prediction =
        PredictionSet::new(instance.id.clone(), found, "iterative").expect("scores were validated as finite");
    IterativeOutcome { prediction, calls, error }
}

fn request(instance: &Instance, step: usize, mode: Mode, question: String) -> ModelRequest {
    ModelRequest::new(format!("{}#{step}", instance.id), mode, question, instance.passage.raw())
}

/// Tagging paradigm: one `tag` call, maximal runs above `threshold`.
pub fn run_tagging<C: ModelClient + ?Sized>(
    client: &C,
    instance: &Instance,
    threshold: f64,
) -> Result<PredictionSet, RunError> {
    let req = request(instance, 0, Mode::Tag, instance.question.raw().to_owned());
    let ModelResult::Tags(probs) = query(client, &req)? else { unreachable!() };
    let labeling = TokenLabeling::new(probs, &instance.passage)?;
    let spans = tagging_decode(&labeling, threshold)
        .into_iter()
        .map(|r| {
            let mean = labeling.probs[r.clone()].iter().sum::<f64>() / r.len() as f64;
            let text = instance.passage.token_slice(r).expect("decoded span lies in passage").to_owned();
            PredictedSpan { text, score: Some(mean) }
        })
        .collect();
    Ok(PredictionSet::new(instance.id.clone(), spans, "tagging").expect("finite scores"))
}

/// Count-then-select paradigm: a `candidates` call and a `count` call,
/// combined by [`numpred_select`].
pub fn run_numpred<C: ModelClient + ?Sized>(client: &C, instance: &Instance) -> Result<PredictionSet, RunError> {
    let question = instance.question.raw().to_owned();
    let ModelResult::Candidates(raw) = query(client, &request(instance, 0, Mode::Candidates, question.clone()))? else {
        unreachable!()
    };
    let ModelResult::Count(dist) = query(client, &request(instance, 1, Mode::Count, question))? else { unreachable!() };
    let n = instance.passage.len();
    let candidates =
        raw.into_iter().map(|c| CandidateSpan::new(c.start..c.end, c.score, n)).collect::<Result<Vec<_>, _>>()?;
    let count = CountPrediction::from_distribution(&dist)?;
    let spans = numpred_select(&candidates, count.k())
        .into_iter()
        .map(|c| PredictedSpan {
            text: instance.passage.token_slice(c.token_range).expect("validated range").to_owned(),
            score: Some(c.score),
        })
        .collect();
    Ok(PredictionSet::new(instance.id.clone(), spans, "numpred").expect("finite scores"))
}

/// How the generation request is phrased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenInput {
    /// The bare question.
    Plain,
    /// A `count` call first; its count sentence is appended to the question.
    Pipeline,
    /// The one-shot prompt without count prediction.
    VanillaOneshot,
    /// The one-shot prompt that asks for the count first.
    NumpredOneshot,
}

/// Generation paradigm: one `generate` call (two with [`GenInput::Pipeline`]),
/// parsed by [`gen_parse`].
pub fn run_generation<C: ModelClient + ?Sized>(
    client: &C,
    instance: &Instance,
    input: GenInput,
) -> Result<PredictionSet, RunError> {
    let question = match input {
        GenInput::Plain => instance.question.raw().to_owned(),
        GenInput::VanillaOneshot => build_prompt(PromptMode::VanillaOneshot, instance, None)?,
        GenInput::NumpredOneshot => build_prompt(PromptMode::NumpredOneshot, instance, None)?,
        GenInput::Pipeline => {
            let req = request(instance, 0, Mode::Count, instance.question.raw().to_owned());
            let ModelResult::Count(dist) = query(client, &req)? else { unreachable!() };
            build_prompt(PromptMode::PipelineInput, instance, Some(CountPrediction::from_distribution(&dist)?))?
        }
    };
    let ModelResult::Text(text) = query(client, &request(instance, 1, Mode::Generate, question))? else {
        unreachable!()
    };
    let spans = gen_parse(&text).answers.into_iter().map(|text| PredictedSpan { text, score: None }).collect();
    Ok(PredictionSet::new(instance.id.clone(), spans, "generation").expect("unscored"))
}

/// Count sentence placed before the answers in generated output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nps {
    None,
    Count,
    Remaining(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GenOutput {
    pub declared_count: Option<usize>,
    pub remaining_count: Option<usize>,
    pub answers: Vec<String>,
}

fn count_sentence(k: usize) -> String {
    if k == 1 {
        "There is only one answer".to_owned()
    } else {
        format!("There are {k} answers")
    }
}

/// Serializes answers as `a1; a2; ...`, optionally behind a count sentence
/// and ": ". Answers that could not be recovered by [`gen_parse`] (blank,
/// containing ';', padded with whitespace, or otherwise ambiguous) are
/// rejected.
pub fn gen_serialize<S: AsRef<str>>(answers: &[S], nps: Nps) -> Result<String, DecodeError> {
    let answers: Vec<&str> = answers.iter().map(AsRef::as_ref).collect();
    if let Some(bad) = answers.iter().find(|a| a.contains(';') || a.trim().is_empty() || a.trim() != **a) {
        return Err(DecodeError::Unrepresentable((*bad).to_owned()));
    }
    let body = answers.join("; ");
    let out = match nps {
        Nps::None => body.clone(),
        Nps::Count if answers.is_empty() => return Err(DecodeError::EmptyCountedAnswers),
        Nps::Count => format!("{}: {body}", count_sentence(answers.len())),
        Nps::Remaining(0) => return Err(DecodeError::ZeroRemaining),
        Nps::Remaining(r) => format!("The number of remaining answers is {r}: {body}"),
    };
    let parsed = gen_parse(&out);
    let expected_count = match nps {
        Nps::Count => Some(answers.len()),
        _ => None,
    };
    let expected_remaining = match nps {
        Nps::Remaining(r) => Some(r),
        _ => None,
    };
    if parsed.answers != answers
        || parsed.declared_count != expected_count
        || parsed.remaining_count != expected_remaining
    {
        return Err(DecodeError::Unrepresentable(body));
    }
    Ok(out)
}

struct NpsPatterns {
    declared: Regex,
    only_one: Regex,
    remaining: Regex,
    no_answer: Regex,
}

fn patterns() -> &'static NpsPatterns {
    static P: OnceLock<NpsPatterns> = OnceLock::new();
    P.get_or_init(|| NpsPatterns {
        declared: Regex::new(r"(?i)^\s*(?:there are (\d+) answers?|the number of answers is (\d+))\s*[:.]?").unwrap(),
        only_one: Regex::new(r"(?i)^\s*there is only one answer\s*[:.]?").unwrap(),
        remaining: Regex::new(r"(?i)^\s*the number of remaining answers is (\d+)\s*[:.]?").unwrap(),
        no_answer: Regex::new(r"(?i)^\s*no answers?\s*\.?\s*$").unwrap(),
    })
}

/// Best-effort parse of generated text: strips a leading count sentence,
/// splits the rest on ';', trims and drops empties. "No answer" yields no
/// answers. Counts of zero are treated as absent.
pub fn gen_parse(text: &str) -> GenOutput {
    let p = patterns();
    let mut out = GenOutput::default();
    let mut rest = text;
    let positive = |m: Option<regex::Match>| m.and_then(|m| m.as_str().parse::<usize>().ok()).filter(|k| *k > 0);
    if let Some(c) = p.declared.captures(text) {
        out.declared_count = positive(c.get(1).or(c.get(2)));
        rest = &text[c.get(0).unwrap().end()..];
    } else if let Some(m) = p.only_one.find(text) {
        out.declared_count = Some(1);
        rest = &text[m.end()..];
    } else if let Some(c) = p.remaining.captures(text) {
        out.remaining_count = positive(c.get(1));
        rest = &text[c.get(0).unwrap().end()..];
    }
    if p.no_answer.is_match(rest) {
        return out;
    }
    out.answers = rest.split(';').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    VanillaOneshot,
    NumpredOneshot,
    PipelineInput,
}

const VANILLA_ONESHOT: &str = "\
Answer the question based on the given context. Each question has more than one answer. Please give all the answers and separate them with a semicolon.
Context: Laura Horton is a fictional character from the NBC soap opera , Days of Our Lives , a long - running serial drama about working class life in the fictional , United States town of Salem . Created by writer Peggy Phillips , the role was originated by actress Floy Dean on June 30 , 1966 till October 21 , 1966 . Susan Flannery stepped into the role from November 22 , 1966 to May 27 , 1975 .
Question: who played laura horton on days of our lives
Answers: Floy Dean; Susan Flannery; Susan Oliver; Rosemary Forsyth

Following the example above and answer the following multi-answer question. Please give all the answers and separate them with a semicolon.
Context: {context}
Question: {question}
Answers:";

const NUMPRED_ONESHOT: &str = "\
Answer the question based on the given context. Each question has more than one answer. Please predict the number of answers first, then give all the answers and separate them with a semicolon.
Context: Laura Horton is a fictional character from the NBC soap opera , Days of Our Lives , a long - running serial drama about working class life in the fictional , United States town of Salem . Created by writer Peggy Phillips , the role was originated by actress Floy Dean on June 30 , 1966 till October 21 , 1966 . Susan Flannery stepped into the role from November 22 , 1966 to May 27 , 1975 .
Question: who played laura horton on days of our lives
Answers: The number of answers is 4: Floy Dean; Susan Flannery; Susan Oliver; Rosemary Forsyth

Following the example above and answer the following multi-answer question. Please predict the number of answers first, then give all the answers and separate them with a semicolon.
Context: {context}
Question: {question}
Answers:";

/// Substitutes `{context}` and `{question}` in one pass, so placeholder-like
/// text inside the values is left alone.
fn fill(template: &str, context: &str, question: &str) -> String {
    let mut out = String::with_capacity(template.len() + context.len() + question.len());
    let mut rest = template;
    while let Some(i) = rest.find('{') {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if let Some(t) = tail.strip_prefix("{context}") {
            out.push_str(context);
            rest = t;
        } else if let Some(t) = tail.strip_prefix("{question}") {
            out.push_str(question);
            rest = t;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

/// Builds model input text. The one-shot modes fill the prompt templates;
/// `PipelineInput` appends the count sentence for `count` to the question.
pub fn build_prompt(
    mode: PromptMode,
    instance: &Instance,
    count: Option<CountPrediction>,
) -> Result<String, DecodeError> {
    let (context, question) = (instance.passage.raw(), instance.question.raw());
    Ok(match mode {
        PromptMode::VanillaOneshot => fill(VANILLA_ONESHOT, context, question),
        PromptMode::NumpredOneshot => fill(NUMPRED_ONESHOT, context, question),
        PromptMode::PipelineInput => {
            let k = count.ok_or(DecodeError::MissingCount)?.k();
            format!("{question} {}.", count_sentence(k))
        }
    })
}
