//! Loaders for DROP, Quoref and MultiSpanQA validation files, the unified
//! JSONL corpus format, and taxonomy annotation files.
//!
//! A malformed container (invalid JSON, wrong top-level shape) is fatal and
//! reported with a byte offset. A bad individual record is skipped and
//! counted, so `loaded + skipped_non_span + skipped_malformed == records`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::IngestError;
use crate::model::{
    ground_span, tokenize, AnswerInput, AnswerSet, AnswerSpan, Dataset, Instance, PredictedSpan, PredictionSet,
};
use crate::taxonomy::{Clue, ClueType, LabelKind, TaxonomyLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Drop,
    Quoref,
    MultiSpanQa,
    Unified,
}

impl FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "drop" => Ok(SourceFormat::Drop),
            "quoref" => Ok(SourceFormat::Quoref),
            "multispanqa" => Ok(SourceFormat::MultiSpanQa),
            "unified" => Ok(SourceFormat::Unified),
            other => Err(format!("unknown format {other:?} (expected drop, quoref, multispanqa or unified)")),
        }
    }
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceFormat::Drop => "drop",
            SourceFormat::Quoref => "quoref",
            SourceFormat::MultiSpanQa => "multispanqa",
            SourceFormat::Unified => "unified",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoaderReport {
    pub source_format: SourceFormat,
    pub records: usize,
    pub loaded: usize,
    pub skipped_non_span: usize,
    pub skipped_malformed: usize,
    /// Gold answers dropped because they repeated another answer's normalized
    /// text or normalized to nothing. Does not affect record accounting.
    pub duplicate_answers_dropped: usize,
}

impl LoaderReport {
    fn new(source_format: SourceFormat) -> Self {
        Self {
            source_format,
            records: 0,
            loaded: 0,
            skipped_non_span: 0,
            skipped_malformed: 0,
            duplicate_answers_dropped: 0,
        }
    }
}

/// Collects instances while enforcing per-record invariants.
struct Collector {
    report: LoaderReport,
    out: Vec<Instance>,
    ids: HashSet<String>,
}

impl Collector {
    fn new(format: SourceFormat) -> Self {
        Self { report: LoaderReport::new(format), out: Vec::new(), ids: HashSet::new() }
    }

    fn malformed(&mut self, why: impl fmt::Display) {
        log::debug!("skipping malformed record: {why}");
        self.report.records += 1;
        self.report.skipped_malformed += 1;
    }

    fn non_span(&mut self) {
        self.report.records += 1;
        self.report.skipped_non_span += 1;
    }

    fn push(
        &mut self,
        id: String,
        dataset: Dataset,
        question: &str,
        passage: &str,
        answers: Vec<AnswerInput>,
        taxonomy: Option<TaxonomyLabel>,
    ) {
        if self.ids.contains(&id) {
            return self.malformed(format!("duplicate id {id:?}"));
        }
        let passage_tokens = tokenize(passage);
        let spans: Vec<AnswerSpan> =
            answers.into_iter().map(|a| AnswerSpan::grounded(&passage_tokens, &a.text, a.char_range)).collect();
        let (gold, dropped) = match AnswerSet::dedup(spans) {
            Ok(v) => v,
            Err(e) => return self.malformed(format!("{id}: {e}")),
        };
        self.report.records += 1;
        self.report.loaded += 1;
        self.report.duplicate_answers_dropped += dropped;
        self.ids.insert(id.clone());
        self.out.push(Instance { id, dataset, question: tokenize(question), passage: passage_tokens, gold, taxonomy });
    }

    fn finish(self) -> (Vec<Instance>, LoaderReport) {
        (self.out, self.report)
    }
}

/// Loads a corpus file in one of the supported formats.
pub fn load(format: SourceFormat, bytes: &[u8]) -> Result<(Vec<Instance>, LoaderReport), IngestError> {
    match format {
        SourceFormat::Drop => load_drop(bytes),
        SourceFormat::Quoref => load_quoref(bytes),
        SourceFormat::MultiSpanQa => load_multispanqa(bytes),
        SourceFormat::Unified => load_unified(bytes),
    }
}

fn parse_container(bytes: &[u8]) -> Result<Value, IngestError> {
    serde_json::from_slice(bytes).map_err(|e| json_error(bytes, 0, &e))
}

/// Converts serde_json's line/column into a byte offset from `base`.
fn json_error(bytes: &[u8], base: usize, e: &serde_json::Error) -> IngestError {
    let mut offset = 0;
    for (i, line) in bytes.split(|b| *b == b'\n').enumerate() {
        if i + 1 == e.line() {
            offset += e.column().saturating_sub(1).min(line.len());
            break;
        }
        offset += line.len() + 1;
    }
    IngestError::Parse { offset: base + offset.min(bytes.len()), message: e.to_string() }
}

/// Syntax error inside one JSONL line; `base` is the line's byte offset.
fn jsonl_error(line: usize, raw: &[u8], base: usize, e: &serde_json::Error) -> IngestError {
    let IngestError::Parse { offset, .. } = json_error(raw, base, e) else { unreachable!() };
    let full = e.to_string();
    let message = full.rfind(" at line ").map_or(full.as_str(), |i| &full[..i]).to_owned();
    IngestError::JsonLine { line, offset, message }
}

fn container_error(message: &str) -> IngestError {
    IngestError::Parse { offset: 0, message: message.to_owned() }
}

fn str_field<'a>(v: &'a Value, key: &str) -> Option<&'a str> {
    v.get(key).and_then(Value::as_str)
}

fn load_drop(bytes: &[u8]) -> Result<(Vec<Instance>, LoaderReport), IngestError> {
    let root = parse_container(bytes)?;
    let passages =
        root.as_object().ok_or_else(|| container_error("DROP file must be an object keyed by passage id"))?;
    let mut c = Collector::new(SourceFormat::Drop);
    for (pid, entry) in passages {
        let qa_pairs = entry.get("qa_pairs").and_then(Value::as_array);
        let (Some(passage), Some(qa_pairs)) = (str_field(entry, "passage"), qa_pairs) else {
            let n = qa_pairs.map_or(1, Vec::len).max(1);
            for _ in 0..n {
                c.malformed(format!("passage {pid} lacks passage text or qa_pairs"));
            }
            continue;
        };
        for (i, qa) in qa_pairs.iter().enumerate() {
            let id = str_field(qa, "query_id").map_or_else(|| format!("{pid}-{i}"), str::to_owned);
            let (Some(question), Some(answer)) = (str_field(qa, "question"), qa.get("answer")) else {
                c.malformed(format!("{id}: missing question or answer"));
                continue;
            };
            match drop_answer(answer) {
                DropAnswer::Spans(spans) => {
                    let answers = spans.into_iter().map(AnswerInput::new).collect();
                    c.push(id, Dataset::Drop, question, passage, answers, None);
                }
                DropAnswer::NonSpan => c.non_span(),
                DropAnswer::Invalid => c.malformed(format!("{id}: answer has no number, date or spans")),
            }
        }
    }
    Ok(c.finish())
}

enum DropAnswer {
    Spans(Vec<String>),
    NonSpan,
    Invalid,
}

fn drop_answer(answer: &Value) -> DropAnswer {
    let number = str_field(answer, "number").is_some_and(|n| !n.trim().is_empty())
        || answer.get("number").is_some_and(Value::is_number);
    let date = answer.get("date").and_then(Value::as_object).is_some_and(|d| {
        d.values().any(|v| match v {
            Value::String(s) => !s.trim().is_empty(),
            Value::Number(_) => true,
            _ => false,
        })
    });
    if number || date {
        return DropAnswer::NonSpan;
    }
    let spans: Vec<String> = answer
        .get("spans")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).filter(|s| !s.trim().is_empty()).map(str::to_owned).collect())
        .unwrap_or_default();
    if spans.is_empty() {
        DropAnswer::Invalid
    } else {
        DropAnswer::Spans(spans)
    }
}

fn load_quoref(bytes: &[u8]) -> Result<(Vec<Instance>, LoaderReport), IngestError> {
    let root = parse_container(bytes)?;
    let data =
        root.get("data").and_then(Value::as_array).ok_or_else(|| container_error("expected {\"data\": [...]}"))?;
    let mut c = Collector::new(SourceFormat::Quoref);
    for article in data {
        for para in article.get("paragraphs").and_then(Value::as_array).into_iter().flatten() {
            let qas = para.get("qas").and_then(Value::as_array);
            let (Some(context), Some(qas)) = (str_field(para, "context"), qas) else {
                for _ in 0..qas.map_or(1, Vec::len).max(1) {
                    c.malformed("paragraph lacks context or qas");
                }
                continue;
            };
            for qa in qas {
                let (Some(id), Some(question)) = (str_field(qa, "id"), str_field(qa, "question")) else {
                    c.malformed("question lacks id or text");
                    continue;
                };
                let answers: Vec<AnswerInput> = qa
                    .get("answers")
                    .and_then(Value::as_array)
                    .into_iter()
                    .flatten()
                    .filter_map(|a| {
                        let text = str_field(a, "text")?;
                        let char_range = a
                            .get("answer_start")
                            .and_then(Value::as_u64)
                            .map(|s| s as usize..s as usize + text.chars().count());
                        Some(AnswerInput { text: text.to_owned(), char_range })
                    })
                    .collect();
                if answers.is_empty() {
                    c.malformed(format!("{id}: no answers"));
                    continue;
                }
                c.push(id.to_owned(), Dataset::Quoref, question, context, answers, None);
            }
        }
    }
    Ok(c.finish())
}

/// Decodes BIO (or IO) labels into half-open token ranges. An `I` with no
/// open span starts one.
pub fn bio_spans<S: AsRef<str>>(labels: &[S]) -> Result<Vec<std::ops::Range<usize>>, String> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, l) in labels.iter().enumerate() {
        match l.as_ref() {
            "B" => {
                if let Some(s) = open.take() {
                    spans.push(s..i);
                }
                open = Some(i);
            }
            "I" => {
                if open.is_none() {
                    open = Some(i);
                }
            }
            "O" => {
                if let Some(s) = open.take() {
                    spans.push(s..i);
                }
            }
            other => return Err(format!("unknown BIO label {other:?} at token {i}")),
        }
    }
    if let Some(s) = open {
        spans.push(s..labels.len());
    }
    Ok(spans)
}

fn token_list(v: Option<&Value>) -> Option<Vec<String>> {
    match v? {
        Value::String(s) => Some(s.split_whitespace().map(str::to_owned).collect()),
        Value::Array(a) => a.iter().map(|t| t.as_str().map(str::to_owned)).collect(),
        _ => None,
    }
}

fn load_multispanqa(bytes: &[u8]) -> Result<(Vec<Instance>, LoaderReport), IngestError> {
    let root = parse_container(bytes)?;
    let data =
        root.get("data").and_then(Value::as_array).ok_or_else(|| container_error("expected {\"data\": [...]}"))?;
    let mut c = Collector::new(SourceFormat::MultiSpanQa);
    for rec in data {
        let id = str_field(rec, "id").map(str::to_owned);
        let question = token_list(rec.get("question"));
        let context = token_list(rec.get("context"));
        let labels = token_list(rec.get("label"));
        let (Some(id), Some(question), Some(context), Some(labels)) = (id, question, context, labels) else {
            c.malformed("record lacks id, question, context or label");
            continue;
        };
        if labels.len() != context.len() {
            c.malformed(format!("{id}: {} labels for {} tokens", labels.len(), context.len()));
            continue;
        }
        let passage = context.join(" ");
        let passage_tokens = tokenize(&passage);
        if passage_tokens.len() != context.len() {
            c.malformed(format!("{id}: context tokens contain whitespace"));
            continue;
        }
        let spans = match bio_spans(&labels) {
            Ok(s) if !s.is_empty() => s,
            Ok(_) => {
                c.malformed(format!("{id}: no answer spans"));
                continue;
            }
            Err(e) => {
                c.malformed(format!("{id}: {e}"));
                continue;
            }
        };
        let answers = spans
            .into_iter()
            .map(|r| AnswerInput {
                text: passage_tokens.token_slice(r.clone()).unwrap_or_default().to_owned(),
                char_range: passage_tokens.char_range_of(r),
            })
            .collect();
        c.push(id, Dataset::MultiSpanQa, &question.join(" "), &passage, answers, None);
    }
    Ok(c.finish())
}

/// One line of the unified corpus format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnifiedRecord {
    pub id: String,
    pub dataset: Dataset,
    pub question: String,
    pub passage: String,
    pub answers: Vec<UnifiedAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<TaxonomyLabel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnifiedAnswer {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_end: Option<usize>,
}

impl From<&Instance> for UnifiedRecord {
    fn from(inst: &Instance) -> Self {
        UnifiedRecord {
            id: inst.id.clone(),
            dataset: inst.dataset,
            question: inst.question.raw().to_owned(),
            passage: inst.passage.raw().to_owned(),
            answers: inst
                .gold
                .spans()
                .iter()
                .map(|s| UnifiedAnswer {
                    text: s.text.clone(),
                    char_start: s.char_range.as_ref().map(|r| r.start),
                    char_end: s.char_range.as_ref().map(|r| r.end),
                })
                .collect(),
            taxonomy: inst.taxonomy.clone(),
        }
    }
}

/// Splits JSONL bytes into (1-based line number, byte offset, line) for
/// non-blank lines.
pub(crate) fn jsonl_lines(bytes: &[u8]) -> impl Iterator<Item = (usize, usize, &[u8])> {
    let mut offset = 0;
    bytes.split(|b| *b == b'\n').enumerate().filter_map(move |(i, line)| {
        let start = offset;
        offset += line.len() + 1;
        let trimmed = line.strip_suffix(b"\r").unwrap_or(line);
        (!trimmed.iter().all(u8::is_ascii_whitespace)).then_some((i + 1, start, trimmed))
    })
}

fn load_unified(bytes: &[u8]) -> Result<(Vec<Instance>, LoaderReport), IngestError> {
    let mut c = Collector::new(SourceFormat::Unified);
    for (line_no, offset, line) in jsonl_lines(bytes) {
        let value: Value = serde_json::from_slice(line).map_err(|e| jsonl_error(line_no, line, offset, &e))?;
        let rec: UnifiedRecord = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => {
                c.malformed(format!("line {line_no}: {e}"));
                continue;
            }
        };
        let answers = rec
            .answers
            .into_iter()
            .map(|a| AnswerInput {
                text: a.text,
                char_range: match (a.char_start, a.char_end) {
                    (Some(s), Some(e)) if s <= e => Some(s..e),
                    _ => None,
                },
            })
            .collect();
        if let Some(label) = &rec.taxonomy {
            if label.kind != LabelKind::QuestionDependent && !label.clues.is_empty() {
                c.malformed(format!("line {line_no}: clues on a {} label", label.kind.as_str()));
                continue;
            }
        }
        c.push(rec.id, rec.dataset, &rec.question, &rec.passage, answers, rec.taxonomy);
    }
    Ok(c.finish())
}

/// Serializes a corpus as unified JSONL, one instance per line.
pub fn export(corpus: &[Instance]) -> Vec<u8> {
    let mut out = Vec::new();
    for inst in corpus {
        serde_json::to_writer(&mut out, &UnifiedRecord::from(inst)).expect("in-memory serialization");
        out.push(b'\n');
    }
    out
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationLine {
    id: String,
    label: String,
    #[serde(default)]
    clue: Option<ClueField>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClueField {
    #[serde(default)]
    spans: Vec<String>,
    #[serde(default)]
    types: Vec<String>,
}

fn parse_label(s: &str) -> Option<LabelKind> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "passage_dependent" | "p_dep" => Some(LabelKind::PassageDependent),
        "question_dependent" | "q_dep" => Some(LabelKind::QuestionDependent),
        "bad_annotation" | "bad" => Some(LabelKind::BadAnnotation),
        _ => None,
    }
}

/// Parses a taxonomy annotation file.
///
/// Each JSONL line is `{"id", "label", "clue"?: {"spans"?: [...], "types": [...]}}`.
/// When both `spans` and `types` are present they are parallel lists. Clue
/// token ranges are resolved later against the question by [`attach_labels`].
pub fn load_annotations(bytes: &[u8]) -> Result<BTreeMap<String, TaxonomyLabel>, IngestError> {
    let mut out = BTreeMap::new();
    for (line, offset, raw) in jsonl_lines(bytes) {
        let rec: AnnotationLine = serde_json::from_slice(raw).map_err(|e| match e.classify() {
            serde_json::error::Category::Data => IngestError::Line { line, message: e.to_string() },
            _ => jsonl_error(line, raw, offset, &e),
        })?;
        let kind = parse_label(&rec.label).ok_or(IngestError::UnknownLabel { line, label: rec.label.clone() })?;
        let mut clues = Vec::new();
        if let Some(clue) = rec.clue {
            if !clue.spans.is_empty() && clue.spans.len() != clue.types.len() {
                return Err(IngestError::Line {
                    line,
                    message: format!("{} clue spans but {} clue types", clue.spans.len(), clue.types.len()),
                });
            }
            for (i, t) in clue.types.iter().enumerate() {
                let clue_type: ClueType = t.parse().map_err(|message| IngestError::Line { line, message })?;
                clues.push(Clue { clue_type, tokens: None, text: clue.spans.get(i).cloned() });
            }
        }
        let label = TaxonomyLabel::new(kind, clues).map_err(|message| IngestError::Line { line, message })?;
        if out.insert(rec.id.clone(), label).is_some() {
            return Err(IngestError::DuplicateId { line, id: rec.id });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AttachReport {
    pub attached: usize,
    /// Annotated ids with no instance in the corpus.
    pub unknown_ids: Vec<String>,
    /// Instances left without a label.
    pub unlabeled: usize,
}

/// Attaches labels to a corpus by id, resolving clue surface text to
/// question token ranges (first occurrence).
pub fn attach_labels(corpus: &mut [Instance], labels: &BTreeMap<String, TaxonomyLabel>) -> AttachReport {
    let mut report = AttachReport::default();
    let mut seen = HashSet::new();
    for inst in corpus.iter_mut() {
        let Some(label) = labels.get(&inst.id) else {
            if inst.taxonomy.is_none() {
                report.unlabeled += 1;
            }
            continue;
        };
        seen.insert(inst.id.as_str().to_owned());
        let mut label = label.clone();
        for clue in &mut label.clues {
            if clue.tokens.is_none() {
                if let Some(text) = &clue.text {
                    clue.tokens = ground_span(&inst.question, text);
                }
            }
        }
        inst.taxonomy = Some(label);
        report.attached += 1;
    }
    report.unknown_ids = labels.keys().filter(|k| !seen.contains(*k)).cloned().collect();
    report
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum PredEntry {
    Text(String),
    Scored(PredictedSpan),
}

#[derive(Debug, Serialize, Deserialize)]
struct PredLine {
    instance_id: String,
    spans: Vec<PredEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    producer: Option<String>,
}

/// Reads a predictions JSONL file: `{"instance_id", "spans": [...], "producer"?}`
/// where each span is a string or `{"text", "score"?}`. `default_producer`
/// names sets whose line carries no producer.
pub fn load_predictions(bytes: &[u8], default_producer: &str) -> Result<Vec<PredictionSet>, IngestError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (line, offset, raw) in jsonl_lines(bytes) {
        let rec: PredLine = serde_json::from_slice(raw).map_err(|e| match e.classify() {
            serde_json::error::Category::Data => IngestError::Line { line, message: e.to_string() },
            _ => jsonl_error(line, raw, offset, &e),
        })?;
        if !ids.insert(rec.instance_id.clone()) {
            return Err(IngestError::DuplicateId { line, id: rec.instance_id });
        }
        let spans = rec
            .spans
            .into_iter()
            .map(|e| match e {
                PredEntry::Text(text) => PredictedSpan { text, score: None },
                PredEntry::Scored(s) => s,
            })
            .collect();
        let producer = rec.producer.unwrap_or_else(|| default_producer.to_owned());
        let set = PredictionSet::new(rec.instance_id, spans, producer)
            .map_err(|e| IngestError::Line { line, message: e.to_string() })?;
        out.push(set);
    }
    Ok(out)
}

/// Writes prediction sets as JSONL. Unscored spans are written as plain strings.
pub fn write_predictions(sets: &[PredictionSet]) -> Vec<u8> {
    let mut out = Vec::new();
    for set in sets {
        let line = PredLine {
            instance_id: set.instance_id.clone(),
            spans: set
                .spans()
                .iter()
                .map(|s| match s.score {
                    None => PredEntry::Text(s.text.clone()),
                    Some(_) => PredEntry::Scored(s.clone()),
                })
                .collect(),
            producer: Some(set.producer.clone()),
        };
        serde_json::to_writer(&mut out, &line).expect("in-memory serialization");
        out.push(b'\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const DROP: &str = r#"{
      "nfl_1": {
        "passage": "The Bears beat the Lions . Smith and Jones scored 7 points .",
        "qa_pairs": [
          {"question": "How many points?", "query_id": "q-num",
           "answer": {"number": "7", "date": {"day": "", "month": "", "year": ""}, "spans": []}},
          {"question": "Who scored?", "query_id": "q-spans",
           "answer": {"number": "", "date": {"day": "", "month": "", "year": ""}, "spans": ["Smith", "Jones"]}},
          {"question": "When?", "query_id": "q-date",
           "answer": {"number": "", "date": {"day": "1", "month": "May", "year": "1999"}, "spans": []}},
          {"question": "Broken?", "query_id": "q-bad",
           "answer": {"number": "", "date": {"day": "", "month": "", "year": ""}, "spans": []}}
        ]
      }
    }"#;

    #[test]
    fn drop_skips_number_and_date_answers() {
        let (corpus, report) = load(SourceFormat::Drop, DROP.as_bytes()).unwrap();
        assert_eq!(report.records, 4);
        assert_eq!(report.loaded, 1);
        assert_eq!(report.skipped_non_span, 2);
        assert_eq!(report.skipped_malformed, 1);
        assert_eq!(corpus[0].id, "q-spans");
        assert_eq!(corpus[0].gold.len(), 2);
        assert_eq!(corpus[0].gold.spans()[1].token_range, Some(8..9));
    }

    #[test]
    fn quoref_multiple_answers_form_one_set() {
        let src = r#"{"version": "0.1", "data": [{"title": "t", "paragraphs": [{
            "context": "They speak English and French here.",
            "qas": [{"id": "qr1", "question": "What languages do they speak?",
                     "answers": [{"text": "English", "answer_start": 11}, {"text": "French", "answer_start": 23}]},
                    {"id": "qr2", "question": "Nothing?", "answers": []}]}]}]}"#;
        let (corpus, report) = load(SourceFormat::Quoref, src.as_bytes()).unwrap();
        assert_eq!((report.loaded, report.skipped_malformed), (1, 1));
        let gold = &corpus[0].gold;
        assert_eq!(gold.len(), 2);
        assert_eq!(gold.spans()[0].char_range, Some(11..18));
        assert_eq!(gold.spans()[1].token_range, Some(4..5));
    }

    #[test]
    fn multispanqa_bio_labels_become_spans() {
        let src = r#"{"data": [{"id": "m1", "question": ["which", "ones", "?"],
            "context": ["x", "New", "York", "y", "Paris"], "label": ["O", "B", "I", "O", "B"]}]}"#;
        let (corpus, report) = load(SourceFormat::MultiSpanQa, src.as_bytes()).unwrap();
        assert_eq!(report.loaded, 1);
        let ranges: Vec<_> = corpus[0].gold.spans().iter().map(|s| s.token_range.clone().unwrap()).collect();
        assert_eq!(ranges, vec![1..3, 4..5]);
        assert_eq!(corpus[0].gold.spans()[0].text, "New York");
        assert_eq!(corpus[0].question.raw(), "which ones ?");
    }

    #[test]
    fn multispanqa_rejects_bad_records() {
        let src = r#"{"data": [
            {"id": "a", "question": ["q"], "context": ["x", "y"], "label": ["O"]},
            {"id": "b", "question": ["q"], "context": ["x", "y"], "label": ["O", "O"]},
            {"id": "c", "question": ["q"], "context": ["x", "y"], "label": ["O", "X"]},
            {"id": "d", "question": ["q"], "context": ["x", "y"], "label": ["I", "I"]}
        ]}"#;
        let (corpus, report) = load(SourceFormat::MultiSpanQa, src.as_bytes()).unwrap();
        assert_eq!((report.records, report.loaded, report.skipped_malformed), (4, 1, 3));
        assert_eq!(corpus[0].gold.spans()[0].token_range, Some(0..2));
    }

    #[test]
    fn bio_decoding() {
        assert_eq!(bio_spans(&["O", "B", "I", "O", "B"]).unwrap(), vec![1..3, 4..5]);
        assert_eq!(bio_spans(&["B", "B", "I"]).unwrap(), vec![0..1, 1..3]);
        assert_eq!(bio_spans(&["O", "I", "I"]).unwrap(), vec![1..3]);
        assert!(bio_spans::<&str>(&[]).unwrap().is_empty());
    }

    #[test]
    fn malformed_container_reports_byte_offset() {
        let err = load(SourceFormat::Quoref, b"{\"data\": [1, }").unwrap_err();
        match err {
            IngestError::Parse { offset, .. } => assert_eq!(offset, 13),
            other => panic!("{other:?}"),
        }
        let err = load(SourceFormat::Unified, b"\n{\"id\": }\n").unwrap_err();
        assert!(matches!(err, IngestError::JsonLine { line: 2, offset: 8, .. }), "{err:?}");
        assert_eq!(err.to_string(), "line 2 (byte 8): invalid JSON: expected value");
        assert!(matches!(load(SourceFormat::Drop, b"[]"), Err(IngestError::Parse { .. })));
    }

    #[test]
    fn unified_round_trip_and_duplicate_ids() {
        let (corpus, _) = load(SourceFormat::Drop, DROP.as_bytes()).unwrap();
        let bytes = export(&corpus);
        assert_eq!(bytes.iter().filter(|b| **b == b'\n').count(), 1);
        let (back, report) = load(SourceFormat::Unified, &bytes).unwrap();
        assert_eq!(back, corpus);
        assert_eq!(report.loaded, 1);

        let mut twice = bytes.clone();
        twice.extend_from_slice(&bytes);
        let (back, report) = load(SourceFormat::Unified, &twice).unwrap();
        assert_eq!((back.len(), report.skipped_malformed), (1, 1));

        assert!(export(&[]).is_empty());
    }

    #[test]
    fn unified_schema_violations_are_skipped() {
        let src = concat!(
            r#"{"id":"a","dataset":"DROP","question":"q","passage":"p x","answers":[{"text":"x"}],"extra":1}"#,
            "\n",
            r#"{"id":"b","dataset":"DROP","question":"q","passage":"p x","answers":[]}"#,
            "\n",
            r#"{"id":"c","dataset":"Other","question":"q","passage":"p x","answers":[{"text":"x","char_start":2,"char_end":3}]}"#,
            "\n"
        );
        let (corpus, report) = load(SourceFormat::Unified, src.as_bytes()).unwrap();
        assert_eq!((report.records, report.loaded, report.skipped_malformed), (3, 1, 2));
        assert_eq!(corpus[0].gold.spans()[0].token_range, Some(1..2));
    }

    #[test]
    fn annotations_load_and_attach() {
        let src = concat!(
            r#"{"id":"q1","label":"question_dependent","clue":{"spans":["two"],"types":["cardinal"]}}"#,
            "\n",
            r#"{"id":"q2","label":"bad_annotation"}"#,
            "\n",
            r#"{"id":"zz","label":"passage_dependent"}"#,
            "\n"
        );
        let labels = load_annotations(src.as_bytes()).unwrap();
        assert_eq!(labels["q2"], TaxonomyLabel::bad_annotation());
        assert_eq!(labels["q1"].clues[0].clue_type, ClueType::Cardinal);

        let mut corpus = vec![
            Instance::build("q1", Dataset::Other, "Which two players scored?", "X and Y", vec![AnswerInput::new("X")])
                .unwrap(),
            Instance::build("q2", Dataset::Other, "Who?", "X", vec![AnswerInput::new("X")]).unwrap(),
            Instance::build("q3", Dataset::Other, "Who?", "X", vec![AnswerInput::new("X")]).unwrap(),
        ];
        let report = attach_labels(&mut corpus, &labels);
        assert_eq!(report, AttachReport { attached: 2, unknown_ids: vec!["zz".into()], unlabeled: 1 });
        assert_eq!(corpus[0].taxonomy.as_ref().unwrap().clues[0].tokens, Some(1..2));
    }

    #[test]
    fn annotation_errors_are_fatal() {
        let e = load_annotations(b"{\"id\":\"a\",\"label\":\"maybe\"}\n").unwrap_err();
        assert!(matches!(e, IngestError::UnknownLabel { line: 1, .. }));
        let e = load_annotations(
            b"{\"id\":\"a\",\"label\":\"bad_annotation\"}\n{\"id\":\"a\",\"label\":\"bad_annotation\"}",
        )
        .unwrap_err();
        assert!(matches!(e, IngestError::DuplicateId { line: 2, .. }));
        let e = load_annotations(b"{\"id\":\"a\",\"label\":\"passage_dependent\",\"clue\":{\"types\":[\"ordinal\"]}}")
            .unwrap_err();
        assert!(matches!(e, IngestError::Line { line: 1, .. }));
    }

    #[test]
    fn predictions_round_trip() {
        let src = concat!(
            r#"{"instance_id":"q1","spans":["English", {"text":"French","score":0.5}]}"#,
            "\n\n",
            r#"{"instance_id":"q2","spans":[],"producer":"m2"}"#,
            "\n"
        );
        let sets = load_predictions(src.as_bytes(), "m1").unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].producer, "m1");
        assert_eq!(sets[0].spans()[1].score, Some(0.5));
        assert!(sets[1].is_empty());
        assert_eq!(load_predictions(&write_predictions(&sets), "x").unwrap(), sets);
        let dup = b"{\"instance_id\":\"a\",\"spans\":[]}\n{\"instance_id\":\"a\",\"spans\":[]}";
        assert!(matches!(load_predictions(dup, "m"), Err(IngestError::DuplicateId { line: 2, .. })));
    }
}
