//! Answer-count taxonomy: labels, clue words, adjudication and agreement.
//!
//! A question is `question_dependent` when its answer count can be read off the
//! question alone (optionally through explicit clue words), `passage_dependent`
//! when the passage must be consulted, and `bad_annotation` when the gold spans
//! themselves are malformed.

mod clues;

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::TaxonomyError;

pub use clues::{detect_clue_words, recall_stage1, ClueHit, EntryKind, Lexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClueType {
    Cardinal,
    Ordinal,
    #[serde(alias = "comparative_superlative")]
    CompSuper,
    Alternative,
    #[serde(alias = "other", alias = "others")]
    OtherSemantics,
}

impl ClueType {
    pub const ALL: [ClueType; 5] =
        [ClueType::Cardinal, ClueType::Ordinal, ClueType::CompSuper, ClueType::Alternative, ClueType::OtherSemantics];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClueType::Cardinal => "cardinal",
            ClueType::Ordinal => "ordinal",
            ClueType::CompSuper => "comp_super",
            ClueType::Alternative => "alternative",
            ClueType::OtherSemantics => "other_semantics",
        }
    }

    /// Column heading used in rendered tables.
    pub fn title(&self) -> &'static str {
        match self {
            ClueType::Cardinal => "Cardinal",
            ClueType::Ordinal => "Ordinal",
            ClueType::CompSuper => "Comp./Super.",
            ClueType::Alternative => "Alternative",
            ClueType::OtherSemantics => "Other Semantics",
        }
    }
}

impl fmt::Display for ClueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClueType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cardinal" => Ok(ClueType::Cardinal),
            "ordinal" => Ok(ClueType::Ordinal),
            "comp_super" | "comparative_superlative" => Ok(ClueType::CompSuper),
            "alternative" => Ok(ClueType::Alternative),
            "other_semantics" | "other" | "others" => Ok(ClueType::OtherSemantics),
            other => Err(format!("unknown clue type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    PassageDependent,
    QuestionDependent,
    BadAnnotation,
}

impl LabelKind {
    pub const ALL: [LabelKind; 3] =
        [LabelKind::PassageDependent, LabelKind::QuestionDependent, LabelKind::BadAnnotation];

    pub fn as_str(&self) -> &'static str {
        match self {
            LabelKind::PassageDependent => "passage_dependent",
            LabelKind::QuestionDependent => "question_dependent",
            LabelKind::BadAnnotation => "bad_annotation",
        }
    }
}

impl FromStr for LabelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "passage_dependent" => Ok(LabelKind::PassageDependent),
            "question_dependent" => Ok(LabelKind::QuestionDependent),
            "bad_annotation" => Ok(LabelKind::BadAnnotation),
            other => Err(format!("unknown taxonomy label {other:?}")),
        }
    }
}

/// One clue word (or phrase) in a question.
///
/// Released annotation files sometimes list clue types without spans, so the
/// token range and surface text are optional.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Clue {
    #[serde(rename = "type")]
    pub clue_type: ClueType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Range<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl Clue {
    fn sort_key(&self) -> (Option<(usize, usize)>, ClueType, Option<&str>) {
        (self.tokens.as_ref().map(|r| (r.start, r.end)), self.clue_type, self.text.as_deref())
    }

    pub fn at(tokens: Range<usize>, clue_type: ClueType) -> Self {
        Self { clue_type, tokens: Some(tokens), text: None }
    }
}

impl PartialOrd for Clue {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Clue {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyLabel {
    pub kind: LabelKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clues: Vec<Clue>,
}

impl TaxonomyLabel {
    /// Only question-dependent labels may carry clues.
    pub fn new(kind: LabelKind, clues: Vec<Clue>) -> Result<Self, String> {
        if kind != LabelKind::QuestionDependent && !clues.is_empty() {
            return Err(format!("{} labels carry no clue words", kind.as_str()));
        }
        Ok(Self { kind, clues })
    }

    pub fn passage_dependent() -> Self {
        Self { kind: LabelKind::PassageDependent, clues: Vec::new() }
    }

    pub fn question_dependent(clues: Vec<Clue>) -> Self {
        Self { kind: LabelKind::QuestionDependent, clues }
    }

    pub fn bad_annotation() -> Self {
        Self { kind: LabelKind::BadAnnotation, clues: Vec::new() }
    }

    pub fn has_clue_words(&self) -> bool {
        self.kind == LabelKind::QuestionDependent && !self.clues.is_empty()
    }

    /// Distinct clue types present, in enum order.
    pub fn clue_types(&self) -> Vec<ClueType> {
        let mut types: Vec<_> = self.clues.iter().map(|c| c.clue_type).collect();
        types.sort();
        types.dedup();
        types
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Round {
    First,
    Second,
    Adjudication,
}

impl Round {
    pub fn is_initial(&self) -> bool {
        matches!(self, Round::First | Round::Second)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorRecord {
    pub annotator_id: String,
    pub instance_id: String,
    pub label: TaxonomyLabel,
    pub round: Round,
}

/// Resolves one instance's records into a final label.
///
/// Any bad-annotation vote wins outright. Otherwise agreeing initial kinds
/// are final (question-dependent clues are the union of both annotators'
/// clues), and disagreement defers to the adjudication record.
pub fn adjudicate(records: &[AnnotatorRecord]) -> Result<TaxonomyLabel, TaxonomyError> {
    if let Some(first) = records.first() {
        if records.iter().any(|r| r.instance_id != first.instance_id) {
            return Err(TaxonomyError::MixedInstances);
        }
    }
    if records.iter().any(|r| r.label.kind == LabelKind::BadAnnotation) {
        return Ok(TaxonomyLabel::bad_annotation());
    }
    let initial: Vec<_> = records.iter().filter(|r| r.round.is_initial()).collect();
    if initial.len() < 2 {
        return Err(TaxonomyError::TooFewRecords(initial.len()));
    }
    let kind = initial[0].label.kind;
    if initial.iter().all(|r| r.label.kind == kind) {
        let mut clues: Vec<Clue> = initial.iter().flat_map(|r| r.label.clues.iter().cloned()).collect();
        clues.sort();
        clues.dedup();
        return Ok(TaxonomyLabel { kind, clues });
    }
    records
        .iter()
        .rev()
        .find(|r| r.round == Round::Adjudication)
        .map(|r| r.label.clone())
        .ok_or(TaxonomyError::NeedsAdjudication)
}

/// Cohen's kappa between two raters' labels, `(p_o - p_e) / (1 - p_e)`.
///
/// When chance agreement is already certain (`p_e == 1`) the value is 1 for
/// perfect observed agreement and 0 otherwise.
pub fn cohens_kappa<T: Eq + Hash>(pairs: &[(T, T)]) -> Result<f64, TaxonomyError> {
    if pairs.is_empty() {
        return Err(TaxonomyError::EmptyPairs);
    }
    let n = pairs.len() as u64;
    let mut row: HashMap<&T, u64> = HashMap::new();
    let mut col: HashMap<&T, u64> = HashMap::new();
    let mut agree = 0u64;
    for (a, b) in pairs {
        *row.entry(a).or_default() += 1;
        *col.entry(b).or_default() += 1;
        if a == b {
            agree += 1;
        }
    }
    let chance: u64 = row.iter().map(|(k, ca)| ca * col.get(k).copied().unwrap_or(0)).sum();
    if chance == n * n {
        return Ok(if agree == n { 1.0 } else { 0.0 });
    }
    let p_o = agree as f64 / n as f64;
    let p_e = chance as f64 / (n * n) as f64;
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Qualitative band for a kappa value (Landis & Koch).
pub fn interpret_kappa(kappa: f64) -> &'static str {
    match kappa {
        k if k < 0.0 => "poor",
        k if k <= 0.20 => "slight",
        k if k <= 0.40 => "fair",
        k if k <= 0.60 => "moderate",
        k if k <= 0.80 => "substantial",
        _ => "almost perfect",
    }
}
