//! Shared data model for multi-answer reading comprehension.
//!
//! Everything downstream (loaders, metrics, decoders, reports) consumes these
//! types. All of them are immutable once built; constructors validate the
//! invariants so later stages never have to re-check them.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::taxonomy::TaxonomyLabel;

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// SQuAD-style answer normalization: lowercase, strip ASCII punctuation,
/// drop the articles `a`/`an`/`the`, collapse whitespace.
pub fn normalize(text: &str) -> String {
    normalized_tokens(text).join(" ")
}

/// The whitespace tokens of [`normalize`]`(text)`.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let stripped: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    stripped.split_whitespace().filter(|w| !ARTICLES.contains(w)).map(str::to_owned).collect()
}

/// Raw text split into maximal non-whitespace runs.
///
/// Offsets are half-open ranges counted in Unicode scalar values (the same unit
/// Python-produced datasets use for `answer_start`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedText {
    raw: String,
    tokens: Vec<String>,
    offsets: Vec<Range<usize>>,
    byte_offsets: Vec<Range<usize>>,
}

/// Whitespace tokenization with exact character offsets.
pub fn tokenize(raw: &str) -> TokenizedText {
    let mut tokens = Vec::new();
    let mut offsets = Vec::new();
    let mut byte_offsets = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    let mut char_idx = 0;
    for (byte_idx, ch) in raw.char_indices() {
        if ch.is_whitespace() {
            if let Some((cs, bs)) = start.take() {
                tokens.push(raw[bs..byte_idx].to_owned());
                offsets.push(cs..char_idx);
                byte_offsets.push(bs..byte_idx);
            }
        } else if start.is_none() {
            start = Some((char_idx, byte_idx));
        }
        char_idx += 1;
    }
    if let Some((cs, bs)) = start {
        tokens.push(raw[bs..].to_owned());
        offsets.push(cs..char_idx);
        byte_offsets.push(bs..raw.len());
    }
    TokenizedText { raw: raw.to_owned(), tokens, offsets, byte_offsets }
}

impl TokenizedText {
    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn offsets(&self) -> &[Range<usize>] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of Unicode scalar values in the raw text.
    pub fn char_len(&self) -> usize {
        self.raw.chars().count()
    }

    /// Slice of the raw text covering tokens `range` (including the
    /// whitespace between them). Returns `None` for an empty or out-of-bounds range.
    pub fn token_slice(&self, range: Range<usize>) -> Option<&str> {
        if range.start >= range.end || range.end > self.tokens.len() {
            return None;
        }
        let start = self.byte_offsets[range.start].start;
        let end = self.byte_offsets[range.end - 1].end;
        Some(&self.raw[start..end])
    }

    /// Slice of the raw text by character range.
    pub fn char_slice(&self, range: Range<usize>) -> Option<&str> {
        if range.start > range.end {
            return None;
        }
        let mut start_byte = None;
        let mut end_byte = None;
        for (i, (b, _)) in self.raw.char_indices().enumerate() {
            if i == range.start {
                start_byte = Some(b);
            }
            if i == range.end {
                end_byte = Some(b);
                break;
            }
        }
        let total = self.char_len();
        if range.start == total {
            start_byte = Some(self.raw.len());
        }
        if range.end == total {
            end_byte = Some(self.raw.len());
        }
        Some(&self.raw[start_byte?..end_byte?])
    }

    /// Character range spanned by a token range.
    pub fn char_range_of(&self, tokens: Range<usize>) -> Option<Range<usize>> {
        if tokens.start >= tokens.end || tokens.end > self.tokens.len() {
            return None;
        }
        Some(self.offsets[tokens.start].start..self.offsets[tokens.end - 1].end)
    }

    /// Tokens intersecting a character range.
    pub fn token_range_of(&self, chars: Range<usize>) -> Option<Range<usize>> {
        let first = self.offsets.iter().position(|o| o.end > chars.start && o.start < chars.end)?;
        let last = self.offsets.iter().rposition(|o| o.end > chars.start && o.start < chars.end)?;
        Some(first..last + 1)
    }
}

/// Token range of the first occurrence of `answer_text`'s normalized tokens
/// inside the passage's normalized tokens.
///
/// Passage tokens that normalize to nothing (articles, bare punctuation) are
/// transparent: they may sit inside the returned range but never start or end it.
pub fn ground_span(passage: &TokenizedText, answer_text: &str) -> Option<Range<usize>> {
    let needle = normalized_tokens(answer_text);
    if needle.is_empty() {
        return None;
    }
    // (original token index, normalized piece)
    let mut hay: Vec<(usize, String)> = Vec::with_capacity(passage.len());
    for (i, tok) in passage.tokens().iter().enumerate() {
        for piece in normalized_tokens(tok) {
            hay.push((i, piece));
        }
    }
    if hay.len() < needle.len() {
        return None;
    }
    (0..=hay.len() - needle.len())
        .find(|&s| hay[s..s + needle.len()].iter().zip(&needle).all(|((_, h), n)| h == n))
        .map(|s| hay[s].0..hay[s + needle.len() - 1].0 + 1)
}

/// One grounded (or text-only) answer span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerSpan {
    pub text: String,
    pub char_range: Option<Range<usize>>,
    pub token_range: Option<Range<usize>>,
}

impl AnswerSpan {
    pub fn text_only(text: impl Into<String>) -> Self {
        Self { text: text.into(), char_range: None, token_range: None }
    }

    pub fn normalized(&self) -> String {
        normalize(&self.text)
    }

    /// Builds a span against `passage`. A supplied character range is kept
    /// only if the passage slice normalizes to the same text; otherwise the
    /// span is re-grounded by text search.
    pub fn grounded(passage: &TokenizedText, text: &str, char_range: Option<Range<usize>>) -> Self {
        let norm = normalize(text);
        if let Some(range) = char_range {
            let valid = passage.char_slice(range.clone()).map(normalize).is_some_and(|s| s == norm);
            if valid {
                if let Some(tokens) = passage.token_range_of(range.clone()) {
                    return Self { text: text.to_owned(), char_range: Some(range), token_range: Some(tokens) };
                }
            }
        }
        match ground_span(passage, text) {
            Some(tokens) => Self {
                text: text.to_owned(),
                char_range: passage.char_range_of(tokens.clone()),
                token_range: Some(tokens),
            },
            None => Self::text_only(text),
        }
    }

    /// Span taken directly from passage tokens; text is the raw passage slice.
    pub fn from_tokens(passage: &TokenizedText, tokens: Range<usize>) -> Option<Self> {
        let text = passage.token_slice(tokens.clone())?.to_owned();
        Some(Self { text, char_range: passage.char_range_of(tokens.clone()), token_range: Some(tokens) })
    }
}

/// The complete, unordered gold answer set of a question (n >= 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerSet {
    spans: Vec<AnswerSpan>,
}

impl AnswerSet {
    pub fn new(spans: Vec<AnswerSpan>) -> Result<Self, ModelError> {
        if spans.is_empty() {
            return Err(ModelError::EmptyAnswerSet);
        }
        let mut seen = std::collections::HashSet::new();
        for span in &spans {
            let norm = span.normalized();
            if norm.is_empty() {
                return Err(ModelError::EmptyAnswer(span.text.clone()));
            }
            if !seen.insert(norm) {
                return Err(ModelError::DuplicateAnswer(span.text.clone()));
            }
        }
        Ok(Self { spans })
    }

    /// Drops answers that normalize to nothing or repeat an earlier answer,
    /// then builds the set. Returns the set and the number of dropped spans.
    pub fn dedup(spans: Vec<AnswerSpan>) -> Result<(Self, usize), ModelError> {
        let before = spans.len();
        let mut seen = std::collections::HashSet::new();
        let kept: Vec<_> = spans
            .into_iter()
            .filter(|s| {
                let n = s.normalized();
                !n.is_empty() && seen.insert(n)
            })
            .collect();
        let dropped = before - kept.len();
        Ok((Self::new(kept)?, dropped))
    }

    pub fn spans(&self) -> &[AnswerSpan] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.spans.iter().map(|s| s.text.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dataset {
    #[serde(rename = "DROP")]
    Drop,
    #[serde(rename = "Quoref")]
    Quoref,
    #[serde(rename = "MultiSpanQA")]
    MultiSpanQa,
    #[serde(rename = "Other")]
    Other,
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dataset::Drop => "DROP",
            Dataset::Quoref => "Quoref",
            Dataset::MultiSpanQa => "MultiSpanQA",
            Dataset::Other => "Other",
        })
    }
}

/// Answer input for [`Instance::build`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerInput {
    pub text: String,
    pub char_range: Option<Range<usize>>,
}

impl AnswerInput {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), char_range: None }
    }
}

/// One question / passage / gold answer set triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub id: String,
    pub dataset: Dataset,
    pub question: TokenizedText,
    pub passage: TokenizedText,
    pub gold: AnswerSet,
    pub taxonomy: Option<TaxonomyLabel>,
}

impl Instance {
    /// Tokenizes question and passage and grounds every answer.
    pub fn build(
        id: impl Into<String>,
        dataset: Dataset,
        question: &str,
        passage: &str,
        answers: Vec<AnswerInput>,
    ) -> Result<Self, ModelError> {
        let passage = tokenize(passage);
        let spans = answers.into_iter().map(|a| AnswerSpan::grounded(&passage, &a.text, a.char_range)).collect();
        Ok(Self {
            id: id.into(),
            dataset,
            question: tokenize(question),
            passage,
            gold: AnswerSet::new(spans)?,
            taxonomy: None,
        })
    }

    pub fn is_multi_answer(&self) -> bool {
        self.gold.len() > 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedSpan {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// A model's spans for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub instance_id: String,
    spans: Vec<PredictedSpan>,
    pub producer: String,
}

impl PredictionSet {
    pub fn new(
        instance_id: impl Into<String>,
        spans: Vec<PredictedSpan>,
        producer: impl Into<String>,
    ) -> Result<Self, ModelError> {
        if let Some(bad) = spans.iter().find(|s| s.score.is_some_and(|x| !x.is_finite())) {
            return Err(ModelError::NonFiniteScore(bad.text.clone()));
        }
        Ok(Self { instance_id: instance_id.into(), spans, producer: producer.into() })
    }

    /// Unscored prediction set from plain texts.
    pub fn from_texts<S: Into<String>>(
        instance_id: impl Into<String>,
        texts: impl IntoIterator<Item = S>,
        producer: impl Into<String>,
    ) -> Self {
        let spans = texts.into_iter().map(|t| PredictedSpan { text: t.into(), score: None }).collect();
        Self { instance_id: instance_id.into(), spans, producer: producer.into() }
    }

    pub fn spans(&self) -> &[PredictedSpan] {
        &self.spans
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.spans.iter().map(|s| s.text.as_str())
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}
