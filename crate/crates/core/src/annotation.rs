//! Two-stage taxonomy annotation workflow with an append-only event log.
//!
//! Instances whose question has detected clue words start in the
//! `verify_recalled` stage, where two annotators confirm (question-dependent)
//! or reject (passage-dependent) the automatic recall, or flag a bad
//! annotation. Rejected instances move to the `full` stage for two fresh
//! labels. Everything else starts in `full`. Two conflicting labels in either
//! stage send the instance to `adjudication`, where one adjudicator decides.
//! A bad-annotation label finalizes the instance at once.
//!
//! All state is a fold over the log, so restarting and replaying the log
//! rebuilds it exactly.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::AnnotationError;
use crate::model::Instance;
use crate::taxonomy::{adjudicate, cohens_kappa, AnnotatorRecord, LabelKind, Round, TaxonomyLabel};
use crate::taxonomy::{detect_clue_words, ClueHit, Lexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    VerifyRecalled,
    Full,
    Adjudication,
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "verify_recalled" => Ok(Stage::VerifyRecalled),
            "full" => Ok(Stage::Full),
            "adjudication" => Ok(Stage::Adjudication),
            other => Err(format!("unknown stage {other:?} (expected verify_recalled, full or adjudication)")),
        }
    }
}

/// Source of event timestamps (milliseconds since the Unix epoch).
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorConfig {
    pub id: String,
    #[serde(default)]
    pub adjudicator: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub annotators: Vec<AnnotatorConfig>,
    /// Seeds task assignment.
    #[serde(default)]
    pub seed: u64,
}

/// One line of the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Assigned { at: u64, annotator: String, instance: String, stage: Stage },
    Labeled { at: u64, annotator: String, instance: String, stage: Stage, label: TaxonomyLabel },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub annotator: String,
    pub round: Round,
    pub label: TaxonomyLabel,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstanceState {
    /// Current stage; for finalized instances, the stage that finalized them.
    pub stage: Stage,
    pub final_label: Option<TaxonomyLabel>,
    pub records: Vec<StageRecord>,
}

impl InstanceState {
    fn initial_in(&self, stage: Stage) -> impl Iterator<Item = &StageRecord> {
        self.records.iter().filter(move |r| r.stage == stage && r.round.is_initial())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentStatus {
    Open,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Assignment {
    pub at: u64,
    pub status: AssignmentStatus,
}

/// Complete service state, derived from the log.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct State {
    pub instances: BTreeMap<String, InstanceState>,
    /// Keyed by (stage, annotator, instance).
    pub assignments: BTreeMap<(Stage, String, String), Assignment>,
    pub events: usize,
}

impl State {
    fn initial(corpus: &[Instance], recalled: &HashMap<String, Vec<ClueHit>>) -> Self {
        let instances = corpus
            .iter()
            .map(|i| {
                let stage = if recalled.contains_key(&i.id) { Stage::VerifyRecalled } else { Stage::Full };
                (i.id.clone(), InstanceState { stage, final_label: None, records: Vec::new() })
            })
            .collect();
        State { instances, assignments: BTreeMap::new(), events: 0 }
    }

    fn apply(&mut self, event: &Event) -> Result<(), String> {
        self.events += 1;
        match event {
            Event::Assigned { at, annotator, instance, stage } => {
                if !self.instances.contains_key(instance) {
                    return Err(format!("unknown instance {instance:?}"));
                }
                let key = (*stage, annotator.clone(), instance.clone());
                if self.assignments.contains_key(&key) {
                    return Err(format!("{annotator:?} assigned {instance:?} twice in {stage:?}"));
                }
                self.assignments.insert(key, Assignment { at: *at, status: AssignmentStatus::Open });
            }
            Event::Labeled { at, annotator, instance, stage, label } => {
                let key = (*stage, annotator.clone(), instance.clone());
                match self.assignments.get_mut(&key) {
                    Some(a) if a.status == AssignmentStatus::Open => a.status = AssignmentStatus::Done,
                    _ => return Err(format!("label from {annotator:?} for {instance:?} without an open assignment")),
                }
                let inst = self.instances.get_mut(instance).ok_or_else(|| format!("unknown instance {instance:?}"))?;
                let round = match stage {
                    Stage::Adjudication => Round::Adjudication,
                    s if inst.initial_in(*s).next().is_none() => Round::First,
                    _ => Round::Second,
                };
                inst.records.push(StageRecord {
                    stage: *stage,
                    annotator: annotator.clone(),
                    round,
                    label: label.clone(),
                    at: *at,
                });
                if inst.final_label.is_none() && inst.stage == *stage {
                    transition(instance, inst);
                }
            }
        }
        Ok(())
    }
}

fn transition(id: &str, inst: &mut InstanceState) {
    let latest = inst.records.last().expect("just pushed");
    if inst.stage == Stage::Adjudication {
        inst.final_label = Some(latest.label.clone());
        return;
    }
    if latest.label.kind == LabelKind::BadAnnotation {
        inst.final_label = Some(TaxonomyLabel::bad_annotation());
        return;
    }
    let stage = inst.stage;
    let records: Vec<AnnotatorRecord> = inst
        .initial_in(stage)
        .map(|r| AnnotatorRecord {
            annotator_id: r.annotator.clone(),
            instance_id: id.to_owned(),
            label: r.label.clone(),
            round: r.round,
        })
        .collect();
    if records.len() < 2 {
        return;
    }
    match adjudicate(&records) {
        Ok(label) if stage == Stage::VerifyRecalled && label.kind == LabelKind::PassageDependent => {
            inst.stage = Stage::Full;
        }
        Ok(label) => inst.final_label = Some(label),
        Err(_) => inst.stage = Stage::Adjudication,
    }
}

/// What an annotator sees for one task.
///
/// `steps` lists the sub-steps in order. The answer check shows passage and
/// gold answers; the classification step must show `question_tokens` only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskView {
    pub instance_id: String,
    pub stage: Stage,
    pub steps: Vec<&'static str>,
    pub question: String,
    pub question_tokens: Vec<String>,
    pub answer_check: AnswerCheck,
    /// Automatically detected clue words (verify stage).
    pub detected_clues: Vec<ClueHit>,
    /// Earlier labels (adjudication stage only).
    pub prior_labels: Vec<StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerCheck {
    pub passage: String,
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ack {
    pub instance_id: String,
    /// True when this exact label had already been recorded.
    pub duplicate: bool,
    pub stage: Stage,
    pub final_label: Option<TaxonomyLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueDepths {
    pub verify_recalled: usize,
    pub full: usize,
    pub adjudication: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementStats {
    /// Absent when no instance has two initial labels in one stage.
    pub kappa: Option<f64>,
    pub insufficient_data: bool,
    pub pairs: usize,
    /// Final labels by kind, with question-dependent split by clue presence.
    pub final_counts: BTreeMap<String, usize>,
    pub finalized: usize,
    pub instances: usize,
    pub queues: QueueDepths,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conflict {
    pub instance_id: String,
    pub records: Vec<StageRecord>,
}

struct LogWriter {
    path: PathBuf,
    file: File,
}

pub struct AnnotationService {
    config: ServiceConfig,
    corpus: BTreeMap<String, Instance>,
    detected: HashMap<String, Vec<ClueHit>>,
    state: State,
    log: Option<LogWriter>,
    clock: Box<dyn Clock>,
}

impl AnnotationService {
    /// In-memory service without persistence.
    pub fn new(config: ServiceConfig, corpus: Vec<Instance>, lexicon: &Lexicon, clock: Box<dyn Clock>) -> Self {
        let detected: HashMap<String, Vec<ClueHit>> = corpus
            .iter()
            .filter_map(|i| {
                let hits = detect_clue_words(&i.question, lexicon);
                (!hits.is_empty()).then(|| (i.id.clone(), hits))
            })
            .collect();
        let state = State::initial(&corpus, &detected);
        let corpus = corpus.into_iter().map(|i| (i.id.clone(), i)).collect();
        Self { config, corpus, detected, state, log: None, clock }
    }

    /// Service backed by a JSONL log at `path`, replaying any existing
    /// events first. A torn final line (from a crash mid-write) is dropped.
    pub fn open(
        config: ServiceConfig,
        corpus: Vec<Instance>,
        lexicon: &Lexicon,
        clock: Box<dyn Clock>,
        path: &Path,
    ) -> Result<Self, AnnotationError> {
        let mut svc = Self::new(config, corpus, lexicon, clock);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut good_len = 0u64;
        {
            let mut reader = BufReader::new(&mut file);
            let mut line = String::new();
            let mut line_no = 0;
            loop {
                line.clear();
                let n = reader.read_line(&mut line)?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                let complete = line.ends_with('\n');
                if line.trim().is_empty() {
                    good_len += n as u64;
                    continue;
                }
                let parsed = serde_json::from_str::<Event>(line.trim_end());
                let event = match parsed {
                    Ok(e) => e,
                    Err(_) if !complete => {
                        log::warn!("{}: dropping torn final log line {line_no}", path.display());
                        break;
                    }
                    Err(e) => return Err(AnnotationError::Log { line: line_no, message: e.to_string() }),
                };
                svc.check_event(&event).map_err(|message| AnnotationError::Log { line: line_no, message })?;
                svc.state.apply(&event).map_err(|message| AnnotationError::Log { line: line_no, message })?;
                good_len += n as u64;
            }
        }
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
        }
        file.seek(SeekFrom::End(0))?;
        svc.log = Some(LogWriter { path: path.to_owned(), file });
        Ok(svc)
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log.as_ref().map(|l| l.path.as_path())
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn check_event(&self, event: &Event) -> Result<(), String> {
        let (Event::Assigned { annotator, .. } | Event::Labeled { annotator, .. }) = event;
        if self.annotator(annotator).is_none() {
            return Err(format!("unknown annotator {annotator:?}"));
        }
        Ok(())
    }

    fn annotator(&self, id: &str) -> Option<&AnnotatorConfig> {
        self.config.annotators.iter().find(|a| a.id == id)
    }

    fn commit(&mut self, event: Event) -> Result<(), AnnotationError> {
        if let Some(log) = &mut self.log {
            let mut line = serde_json::to_string(&event).expect("event serializes");
            line.push('\n');
            log.file.write_all(line.as_bytes())?;
            log.file.flush()?;
        }
        self.state.apply(&event).expect("live events are validated before commit");
        Ok(())
    }

    fn view(&self, id: &str, stage: Stage) -> TaskView {
        let inst = &self.corpus[id];
        let steps = match stage {
            Stage::VerifyRecalled => vec!["verify_answers", "confirm_clues"],
            Stage::Full => vec!["verify_answers", "classify_question_only", "extract_clues"],
            Stage::Adjudication => vec!["adjudicate"],
        };
        TaskView {
            instance_id: id.to_owned(),
            stage,
            steps,
            question: inst.question.raw().to_owned(),
            question_tokens: inst.question.tokens().to_vec(),
            answer_check: AnswerCheck {
                passage: inst.passage.raw().to_owned(),
                answers: inst.gold.texts().map(str::to_owned).collect(),
            },
            detected_clues: self.detected.get(id).cloned().unwrap_or_default(),
            prior_labels: match stage {
                Stage::Adjudication => self.state.instances[id].records.clone(),
                _ => Vec::new(),
            },
        }
    }

    fn eligible(&self, annotator: &str, stage: Stage) -> Vec<&str> {
        self.state
            .instances
            .iter()
            .filter(|(id, inst)| {
                if inst.final_label.is_some() || inst.stage != stage {
                    return false;
                }
                let taken = self.state.assignments.keys().filter(|(s, _, i)| *s == stage && i == *id);
                let (mine, total) = taken.fold((false, 0), |(m, n), (_, a, _)| (m || a == annotator, n + 1));
                match stage {
                    Stage::Adjudication => total == 0 && !inst.records.iter().any(|r| r.annotator == annotator),
                    _ => total < 2 && !mine,
                }
            })
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Returns the annotator's open task in `stage`, or assigns a random
    /// eligible instance. `None` when nothing is left.
    pub fn next_task(&mut self, annotator: &str, stage: Stage) -> Result<Option<TaskView>, AnnotationError> {
        let cfg = self.annotator(annotator).ok_or_else(|| AnnotationError::UnknownAnnotator(annotator.to_owned()))?;
        if stage == Stage::Adjudication && !cfg.adjudicator {
            return Err(AnnotationError::NotAdjudicator(annotator.to_owned()));
        }
        let open = self.state.assignments.iter().find(|((s, a, i), asg)| {
            *s == stage
                && a == annotator
                && asg.status == AssignmentStatus::Open
                && self.state.instances[i].final_label.is_none()
                && self.state.instances[i].stage == stage
        });
        if let Some(((_, _, id), _)) = open {
            return Ok(Some(self.view(&id.clone(), stage)));
        }
        let eligible = self.eligible(annotator, stage);
        if eligible.is_empty() {
            return Ok(None);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.config.seed ^ (self.state.events as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        let id = eligible[rng.random_range(0..eligible.len())].to_owned();
        let at = self.clock.now_ms();
        self.commit(Event::Assigned { at, annotator: annotator.to_owned(), instance: id.clone(), stage })?;
        Ok(Some(self.view(&id, stage)))
    }

    fn validate_label(&self, instance: &Instance, label: &TaxonomyLabel) -> Result<(), AnnotationError> {
        if label.kind != LabelKind::QuestionDependent && !label.clues.is_empty() {
            return Err(AnnotationError::InvalidLabel(format!("{} labels carry no clues", label.kind.as_str())));
        }
        let n = instance.question.len();
        if let Some(c) = label.clues.iter().find(|c| c.tokens.as_ref().is_some_and(|r| r.start >= r.end || r.end > n)) {
            return Err(AnnotationError::InvalidLabel(format!(
                "clue tokens {:?} outside a {n}-token question",
                c.tokens.as_ref().unwrap()
            )));
        }
        Ok(())
    }

    /// Records a label for an open assignment. Re-submitting the same label
    /// is acknowledged without a new record; a different label is refused.
    pub fn submit_label(
        &mut self,
        annotator: &str,
        instance: &str,
        label: TaxonomyLabel,
    ) -> Result<Ack, AnnotationError> {
        if self.annotator(annotator).is_none() {
            return Err(AnnotationError::UnknownAnnotator(annotator.to_owned()));
        }
        let inst = self.corpus.get(instance).ok_or_else(|| AnnotationError::UnknownInstance(instance.to_owned()))?;
        self.validate_label(inst, &label)?;
        let open_stage = self
            .state
            .assignments
            .iter()
            .find(|((_, a, i), asg)| a == annotator && i == instance && asg.status == AssignmentStatus::Open)
            .map(|((s, _, _), _)| *s);
        let state = &self.state.instances[instance];
        let Some(stage) = open_stage else {
            return match state.records.iter().rev().find(|r| r.annotator == annotator) {
                Some(r) if r.label == label => Ok(Ack {
                    instance_id: instance.to_owned(),
                    duplicate: true,
                    stage: state.stage,
                    final_label: state.final_label.clone(),
                }),
                Some(_) => Err(AnnotationError::ConflictingResubmit {
                    annotator: annotator.to_owned(),
                    instance: instance.to_owned(),
                }),
                None => {
                    Err(AnnotationError::NotAssigned { annotator: annotator.to_owned(), instance: instance.to_owned() })
                }
            };
        };
        let at = self.clock.now_ms();
        self.commit(Event::Labeled {
            at,
            annotator: annotator.to_owned(),
            instance: instance.to_owned(),
            stage,
            label,
        })?;
        let state = &self.state.instances[instance];
        Ok(Ack {
            instance_id: instance.to_owned(),
            duplicate: false,
            stage: state.stage,
            final_label: state.final_label.clone(),
        })
    }

    /// Label pairs from the two initial annotators, one per (instance, stage)
    /// that has both.
    pub fn first_round_pairs(&self) -> Vec<(LabelKind, LabelKind)> {
        let mut pairs = Vec::new();
        for inst in self.state.instances.values() {
            for stage in [Stage::VerifyRecalled, Stage::Full] {
                let recs: Vec<&StageRecord> = inst.initial_in(stage).collect();
                if let [a, b] = recs[..] {
                    pairs.push((a.label.kind, b.label.kind));
                }
            }
        }
        pairs
    }

    pub fn agreement_stats(&self) -> AgreementStats {
        let pairs = self.first_round_pairs();
        let kappa = cohens_kappa(&pairs).ok();
        let mut final_counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut queues = QueueDepths { verify_recalled: 0, full: 0, adjudication: 0 };
        for inst in self.state.instances.values() {
            match &inst.final_label {
                Some(l) => {
                    let key = match l.kind {
                        LabelKind::QuestionDependent if l.has_clue_words() => "question_dependent_with_clue",
                        LabelKind::QuestionDependent => "question_dependent_without_clue",
                        k => k.as_str(),
                    };
                    *final_counts.entry(key.to_owned()).or_default() += 1;
                }
                None => match inst.stage {
                    Stage::VerifyRecalled => queues.verify_recalled += 1,
                    Stage::Full => queues.full += 1,
                    Stage::Adjudication => queues.adjudication += 1,
                },
            }
        }
        AgreementStats {
            kappa,
            insufficient_data: kappa.is_none(),
            pairs: pairs.len(),
            finalized: final_counts.values().sum(),
            final_counts,
            instances: self.state.instances.len(),
            queues,
        }
    }

    /// Instances waiting for adjudication.
    pub fn conflicts(&self) -> Vec<Conflict> {
        self.state
            .instances
            .iter()
            .filter(|(_, i)| i.stage == Stage::Adjudication && i.final_label.is_none())
            .map(|(id, i)| Conflict { instance_id: id.clone(), records: i.records.clone() })
            .collect()
    }

    /// Final labels of all finalized instances.
    pub fn final_labels(&self) -> BTreeMap<String, TaxonomyLabel> {
        self.state.instances.iter().filter_map(|(id, i)| i.final_label.clone().map(|l| (id.clone(), l))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnswerInput, Dataset};
    use crate::taxonomy::{Clue, ClueType};
    use std::sync::atomic::{AtomicU64, Ordering};

    pub struct TickClock(AtomicU64);

    impl Clock for TickClock {
        fn now_ms(&self) -> u64 {
            self.0.fetch_add(1, Ordering::SeqCst)
        }
    }

    fn corpus() -> Vec<Instance> {
        let mk =
            |id: &str, q: &str| Instance::build(id, Dataset::Other, q, "x y z", vec![AnswerInput::new("x")]).unwrap();
        vec![mk("clue", "Which two players scored?"), mk("plain", "Who scored?")]
    }

    fn service() -> AnnotationService {
        let config = ServiceConfig {
            annotators: vec![
                AnnotatorConfig { id: "a".into(), adjudicator: false },
                AnnotatorConfig { id: "b".into(), adjudicator: false },
                AnnotatorConfig { id: "judge".into(), adjudicator: true },
            ],
            seed: 7,
        };
        AnnotationService::new(config, corpus(), Lexicon::builtin(), Box::new(TickClock(AtomicU64::new(0))))
    }

    fn pd() -> TaxonomyLabel {
        TaxonomyLabel::passage_dependent()
    }

    #[test]
    fn recalled_instances_start_in_verify_stage() {
        let mut s = service();
        assert_eq!(s.state().instances["clue"].stage, Stage::VerifyRecalled);
        assert_eq!(s.state().instances["plain"].stage, Stage::Full);
        let t = s.next_task("a", Stage::VerifyRecalled).unwrap().unwrap();
        assert_eq!(t.instance_id, "clue");
        assert_eq!(t.detected_clues[0].text, "two");
        // Asking again returns the same open task.
        assert_eq!(s.next_task("a", Stage::VerifyRecalled).unwrap().unwrap().instance_id, "clue");
    }

    #[test]
    fn agreement_finalizes_and_conflict_routes_to_adjudication() {
        let mut s = service();
        s.next_task("a", Stage::Full).unwrap();
        s.next_task("b", Stage::Full).unwrap();
        s.submit_label("a", "plain", pd()).unwrap();
        let ack = s.submit_label("b", "plain", pd()).unwrap();
        assert_eq!(ack.final_label, Some(pd()));
        assert!(s.next_task("a", Stage::Full).unwrap().is_none());

        s.next_task("a", Stage::VerifyRecalled).unwrap();
        s.next_task("b", Stage::VerifyRecalled).unwrap();
        let qd = TaxonomyLabel::question_dependent(vec![Clue::at(1..2, ClueType::Cardinal)]);
        s.submit_label("a", "clue", qd.clone()).unwrap();
        let ack = s.submit_label("b", "clue", pd()).unwrap();
        assert_eq!((ack.stage, ack.final_label), (Stage::Adjudication, None));
        assert_eq!(s.conflicts().len(), 1);
        assert!(matches!(s.next_task("a", Stage::Adjudication), Err(AnnotationError::NotAdjudicator(_))));
        let t = s.next_task("judge", Stage::Adjudication).unwrap().unwrap();
        assert_eq!(t.prior_labels.len(), 2);
        let ack = s.submit_label("judge", "clue", qd.clone()).unwrap();
        assert_eq!(ack.final_label, Some(qd));
        assert!(s.conflicts().is_empty());
    }

    #[test]
    fn bad_annotation_finalizes_immediately() {
        let mut s = service();
        s.next_task("a", Stage::Full).unwrap();
        let ack = s.submit_label("a", "plain", TaxonomyLabel::bad_annotation()).unwrap();
        assert_eq!(ack.final_label, Some(TaxonomyLabel::bad_annotation()));
        assert!(s.next_task("b", Stage::Full).unwrap().is_none());
    }

    #[test]
    fn rejected_recall_moves_to_full_stage() {
        let mut s = service();
        s.next_task("a", Stage::VerifyRecalled).unwrap();
        s.next_task("b", Stage::VerifyRecalled).unwrap();
        s.submit_label("a", "clue", pd()).unwrap();
        let ack = s.submit_label("b", "clue", pd()).unwrap();
        assert_eq!((ack.stage, ack.final_label), (Stage::Full, None));
        let mut got: Vec<String> = Vec::new();
        while let Some(t) = s.next_task("a", Stage::Full).unwrap() {
            got.push(t.instance_id.clone());
            s.submit_label("a", &t.instance_id, pd()).unwrap();
        }
        got.sort();
        assert_eq!(got, ["clue", "plain"]);
    }

    #[test]
    fn submit_errors_and_idempotence() {
        let mut s = service();
        assert!(matches!(s.submit_label("a", "plain", pd()), Err(AnnotationError::NotAssigned { .. })));
        assert!(matches!(s.submit_label("zz", "plain", pd()), Err(AnnotationError::UnknownAnnotator(_))));
        assert!(matches!(s.submit_label("a", "nope", pd()), Err(AnnotationError::UnknownInstance(_))));
        s.next_task("a", Stage::Full).unwrap();
        let bad_clue = TaxonomyLabel::question_dependent(vec![Clue::at(5..9, ClueType::Cardinal)]);
        assert!(matches!(s.submit_label("a", "plain", bad_clue), Err(AnnotationError::InvalidLabel(_))));
        s.submit_label("a", "plain", pd()).unwrap();
        let events = s.state().events;
        assert!(s.submit_label("a", "plain", pd()).unwrap().duplicate);
        assert_eq!(s.state().events, events);
        let qd = TaxonomyLabel::question_dependent(vec![]);
        assert!(matches!(s.submit_label("a", "plain", qd), Err(AnnotationError::ConflictingResubmit { .. })));
    }

    #[test]
    fn stats() {
        let mut s = service();
        let st = s.agreement_stats();
        assert!(st.insufficient_data);
        assert_eq!((st.queues.verify_recalled, st.queues.full), (1, 1));
        s.next_task("a", Stage::Full).unwrap();
        s.next_task("b", Stage::Full).unwrap();
        s.submit_label("a", "plain", pd()).unwrap();
        s.submit_label("b", "plain", pd()).unwrap();
        let st = s.agreement_stats();
        assert_eq!((st.kappa, st.pairs, st.finalized), (Some(1.0), 1, 1));
        assert_eq!(st.final_counts["passage_dependent"], 1);
    }

    #[test]
    fn log_replay_and_torn_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let cfg = service().config().clone();
        let clock = || Box::new(TickClock(AtomicU64::new(0)));
        let mut s = AnnotationService::open(cfg.clone(), corpus(), Lexicon::builtin(), clock(), &path).unwrap();
        s.next_task("a", Stage::Full).unwrap();
        s.submit_label("a", "plain", pd()).unwrap();
        let before = s.state().clone();
        drop(s);

        std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{\"event\":\"assi").unwrap();
        let s = AnnotationService::open(cfg.clone(), corpus(), Lexicon::builtin(), clock(), &path).unwrap();
        assert_eq!(s.state(), &before);
        assert!(std::fs::read_to_string(&path).unwrap().ends_with('\n'));

        std::fs::write(&path, "not json\n").unwrap();
        let err = AnnotationService::open(cfg, corpus(), Lexicon::builtin(), clock(), &path).err().unwrap();
        assert!(matches!(err, AnnotationError::Log { line: 1, .. }));
    }
}
