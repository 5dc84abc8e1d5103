//! Deterministic in-process clients for tests and CI.

use std::collections::HashMap;
use std::ops::Range;

use serde_json::Value;

use super::{protocol, Mode, ModelClient, ModelRequest, ModelResponse, ModelResult, WireCandidate, WireSpan, K_MAX};
use crate::error::ClientError;
use crate::model::{tokenize, Instance};
use crate::paradigms::{gen_serialize, Nps};

struct OracleEntry {
    question: String,
    golds: Vec<String>,
    token_ranges: Vec<Range<usize>>,
}

/// Answers every request from the gold corpus.
///
/// Instances are looked up by passage, then by the longest stored question
/// that the request question equals or extends. A question of the form
/// `<question> except a, b` excludes the golds that make up the
/// comma-separated tail. When a passage has a single instance, any question
/// text (for example a full prompt) resolves to it.
///
/// * `extract_one`: first non-excluded gold, score 1; empty span when none remain.
/// * `tag`: probability 1 on grounded gold tokens, 0 elsewhere.
/// * `candidates`: grounded golds with scores decreasing in gold order.
/// * `count`: one-hot at the gold count (capped at 8).
/// * `generate`: golds serialized with the count sentence.
pub struct OracleClient {
    by_passage: HashMap<String, Vec<OracleEntry>>,
}

impl OracleClient {
    pub fn new(corpus: &[Instance]) -> Self {
        let mut by_passage: HashMap<String, Vec<OracleEntry>> = HashMap::new();
        for inst in corpus {
            by_passage.entry(inst.passage.raw().to_owned()).or_default().push(OracleEntry {
                question: inst.question.raw().to_owned(),
                golds: inst.gold.texts().map(str::to_owned).collect(),
                token_ranges: inst.gold.spans().iter().filter_map(|s| s.token_range.clone()).collect(),
            });
        }
        Self { by_passage }
    }

    fn lookup(&self, req: &ModelRequest) -> Option<&OracleEntry> {
        let entries = self.by_passage.get(&req.passage)?;
        let q = req.question.as_str();
        entries
            .iter()
            .filter(|e| {
                q.strip_prefix(e.question.as_str()).is_some_and(|rest| rest.is_empty() || rest.starts_with(' '))
            })
            .max_by_key(|e| e.question.len())
            .or(if entries.len() == 1 { entries.first() } else { None })
    }
}

/// Splits an exclusion tail into gold answers joined by ", ". Returns the
/// gold indices of the first complete segmentation found.
fn segment_tail(tail: &str, golds: &[String]) -> Option<Vec<usize>> {
    fn go(rest: &str, golds: &[String], used: &mut Vec<usize>) -> bool {
        for (i, g) in golds.iter().enumerate() {
            if g.is_empty() || used.contains(&i) {
                continue;
            }
            let Some(after) = rest.strip_prefix(g.as_str()) else { continue };
            used.push(i);
            if after.is_empty() {
                return true;
            }
            if let Some(next) = after.strip_prefix(", ") {
                if go(next, golds, used) {
                    return true;
                }
            }
            used.pop();
        }
        false
    }
    let mut used = Vec::new();
    go(tail, golds, &mut used).then_some(used)
}

/// Golds excluded by a tail: an exact segmentation when one exists, otherwise
/// any gold appearing as a whole comma-separated element.
fn excluded(tail: &str, golds: &[String]) -> Vec<bool> {
    if let Some(idx) = segment_tail(tail, golds) {
        return (0..golds.len()).map(|i| idx.contains(&i)).collect();
    }
    let elems: Vec<&str> = tail.split(", ").collect();
    golds.iter().map(|g| elems.contains(&g.as_str())).collect()
}

impl ModelClient for OracleClient {
    fn send(&self, req: &ModelRequest) -> Result<ModelResponse, ClientError> {
        let entry = self
            .lookup(req)
            .ok_or_else(|| protocol("oracle has no instance for this question/passage", &req.to_line()))?;
        let tail = req.question.strip_prefix(entry.question.as_str()).and_then(|t| t.strip_prefix(" except "));
        let result = match req.mode {
            Mode::ExtractOne => {
                let skip = tail.map_or_else(|| vec![false; entry.golds.len()], |t| excluded(t, &entry.golds));
                let next = entry.golds.iter().zip(skip).find(|(_, s)| !s).map(|(g, _)| g);
                ModelResult::Span(match next {
                    Some(g) => WireSpan { text: g.clone(), score: 1.0 },
                    None => WireSpan { text: String::new(), score: 0.0 },
                })
            }
            Mode::Tag => {
                let mut probs = vec![0.0; tokenize(&req.passage).len()];
                for r in &entry.token_ranges {
                    probs[r.clone()].iter_mut().for_each(|p| *p = 1.0);
                }
                ModelResult::Tags(probs)
            }
            Mode::Candidates => ModelResult::Candidates(
                entry
                    .token_ranges
                    .iter()
                    .enumerate()
                    .map(|(i, r)| WireCandidate { start: r.start, end: r.end, score: 1.0 - i as f64 * 1e-3 })
                    .collect(),
            ),
            Mode::Count => {
                let mut dist = vec![0.0; K_MAX];
                dist[entry.golds.len().clamp(1, K_MAX) - 1] = 1.0;
                ModelResult::Count(dist)
            }
            Mode::Generate => ModelResult::Text(
                gen_serialize(&entry.golds, Nps::Count).map_err(|e| protocol(e.to_string(), &req.to_line()))?,
            ),
        };
        Ok(ModelResponse { id: req.id.clone(), result })
    }
}

/// Replays fixed results looked up by question text, falling back to the
/// instance id (the request id up to its first `#`).
pub struct ScriptedClient {
    fixtures: HashMap<String, ModelResult>,
}

impl ScriptedClient {
    pub fn new(fixtures: HashMap<String, ModelResult>) -> Self {
        Self { fixtures }
    }

    /// Parses a JSON object mapping keys to either a string (a `generate`
    /// result) or a result object such as `{"count": [...]}`.
    pub fn from_json(bytes: &[u8]) -> Result<Self, ClientError> {
        let payload = String::from_utf8_lossy(bytes);
        let map: HashMap<String, Value> =
            serde_json::from_slice(bytes).map_err(|e| protocol(format!("scripted fixtures: {e}"), &payload))?;
        let mut fixtures = HashMap::new();
        for (key, value) in map {
            let result = match value {
                Value::String(s) => ModelResult::Text(s),
                other => serde_json::from_value(other)
                    .map_err(|e| protocol(format!("scripted fixture {key:?}: {e}"), &payload))?,
            };
            fixtures.insert(key, result);
        }
        Ok(Self { fixtures })
    }
}

impl ModelClient for ScriptedClient {
    fn send(&self, req: &ModelRequest) -> Result<ModelResponse, ClientError> {
        let instance_id = req.id.split('#').next().unwrap_or_default();
        let result = self
            .fixtures
            .get(&req.question)
            .or_else(|| self.fixtures.get(instance_id))
            .ok_or_else(|| protocol("scripted client has no fixture for this request", &req.to_line()))?;
        Ok(ModelResponse { id: req.id.clone(), result: result.clone() })
    }
}

/// Predicts nothing: empty span, all-zero tags, no candidates, count 1,
/// and "No answer".
pub struct DegenerateClient;

impl ModelClient for DegenerateClient {
    fn send(&self, req: &ModelRequest) -> Result<ModelResponse, ClientError> {
        let result = match req.mode {
            Mode::ExtractOne => ModelResult::Span(WireSpan { text: String::new(), score: 0.0 }),
            Mode::Tag => ModelResult::Tags(vec![0.0; tokenize(&req.passage).len()]),
            Mode::Candidates => ModelResult::Candidates(Vec::new()),
            Mode::Count => {
                let mut dist = vec![0.0; K_MAX];
                dist[0] = 1.0;
                ModelResult::Count(dist)
            }
            Mode::Generate => ModelResult::Text("No answer".into()),
        };
        Ok(ModelResponse { id: req.id.clone(), result })
    }
}
