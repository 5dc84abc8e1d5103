#![allow(dead_code)]

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use multiqa::annotation::{AnnotationService, AnnotatorConfig, AssignmentStatus, Clock, ServiceConfig, Stage};
use multiqa::taxonomy::{Clue, Lexicon};
use multiqa::{AnswerInput, ClueType, Dataset, Instance, TaxonomyLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone)]
pub struct SharedClock(pub Arc<AtomicU64>);

impl Clock for SharedClock {
    fn now_ms(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst)
    }
}

pub fn annotation_corpus() -> Vec<Instance> {
    let questions = [
        "Which two cities hosted the games?",
        "Who scored touchdowns?",
        "What was the first team to score?",
        "Which players scored more than once?",
        "Was it Monday or Tuesday?",
        "Where did they travel?",
        "Name both coaches.",
        "Which teams played?",
    ];
    (0..16)
        .map(|i| {
            let q = questions[i % questions.len()];
            Instance::build(format!("q{i:02}"), Dataset::Other, q, "x y z w", vec![AnswerInput::new("x")]).unwrap()
        })
        .collect()
}

pub fn annotation_config(seed: u64) -> ServiceConfig {
    let mut annotators: Vec<AnnotatorConfig> =
        ["a", "b", "c"].iter().map(|id| AnnotatorConfig { id: (*id).into(), adjudicator: false }).collect();
    annotators.push(AnnotatorConfig { id: "judge".into(), adjudicator: true });
    ServiceConfig { annotators, seed }
}

fn random_label(rng: &mut ChaCha8Rng) -> TaxonomyLabel {
    match rng.random_range(0..5) {
        0 => TaxonomyLabel::bad_annotation(),
        1 | 2 => TaxonomyLabel::passage_dependent(),
        3 => TaxonomyLabel::question_dependent(vec![]),
        _ => TaxonomyLabel::question_dependent(vec![Clue::at(1..2, ClueType::Cardinal)]),
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct TrialStats {
    pub restarts: usize,
    pub events: usize,
    pub finalized: usize,
    pub adjudicated: usize,
}

/// Drives one service continuously and a second one through the log with
/// random restarts (and torn trailing writes), then compares their states.
pub fn crash_replay_trial(seed: u64, steps: usize, dir: &Path) -> Result<TrialStats, String> {
    let mut restarts = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path = dir.join(format!("log-{seed}.jsonl"));
    let _ = std::fs::remove_file(&path);
    let config = annotation_config(seed);
    let lexicon = Lexicon::builtin();
    let live_clock = SharedClock(Arc::new(AtomicU64::new(0)));
    let logged_clock = SharedClock(Arc::new(AtomicU64::new(0)));
    let mut live = AnnotationService::new(config.clone(), annotation_corpus(), lexicon, Box::new(live_clock));
    let reopen = |clock: &SharedClock| {
        AnnotationService::open(config.clone(), annotation_corpus(), lexicon, Box::new(clock.clone()), &path)
            .map_err(|e| format!("seed {seed}: reopen failed: {e}"))
    };
    let mut logged = reopen(&logged_clock)?;
    let annotators = ["a", "b", "c", "judge"];
    let stages = [Stage::VerifyRecalled, Stage::Full, Stage::Adjudication];
    for step in 0..steps {
        match rng.random_range(0..10) {
            0 => {
                if rng.random_bool(0.3) {
                    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
                    f.write_all(b"{\"event\":\"labeled\",\"at\":").unwrap();
                }
                drop(logged);
                logged = reopen(&logged_clock)?;
                restarts += 1;
                if logged.state() != live.state() {
                    return Err(format!("seed {seed}: state diverged after restart at step {step}"));
                }
            }
            1..=4 => {
                let who = annotators[rng.random_range(0..annotators.len())];
                let stage = stages[rng.random_range(0..stages.len())];
                let a = live.next_task(who, stage).map(|t| t.map(|t| t.instance_id));
                let b = logged.next_task(who, stage).map(|t| t.map(|t| t.instance_id));
                if format!("{a:?}") != format!("{b:?}") {
                    return Err(format!("seed {seed}: next_task differs at step {step}: {a:?} vs {b:?}"));
                }
            }
            _ => {
                let who = annotators[rng.random_range(0..annotators.len())];
                let open: Vec<String> = live
                    .state()
                    .assignments
                    .iter()
                    .filter(|((_, a, _), asg)| a == who && asg.status == AssignmentStatus::Open)
                    .map(|((_, _, i), _)| i.clone())
                    .collect();
                let id = if !open.is_empty() && rng.random_bool(0.8) {
                    open[rng.random_range(0..open.len())].clone()
                } else {
                    format!("q{:02}", rng.random_range(0..16))
                };
                let label = random_label(&mut rng);
                let a = live.submit_label(who, &id, label.clone());
                let b = logged.submit_label(who, &id, label);
                if format!("{a:?}") != format!("{b:?}") {
                    return Err(format!("seed {seed}: submit differs at step {step}: {a:?} vs {b:?}"));
                }
            }
        }
    }
    drop(logged);
    let logged = reopen(&logged_clock)?;
    if logged.state() != live.state() {
        return Err(format!("seed {seed}: final replayed state differs"));
    }
    if logged.agreement_stats() != live.agreement_stats() || logged.final_labels() != live.final_labels() {
        return Err(format!("seed {seed}: derived views differ"));
    }
    let state = logged.state();
    Ok(TrialStats {
        restarts,
        events: state.events,
        finalized: state.instances.values().filter(|i| i.final_label.is_some()).count(),
        adjudicated: state
            .instances
            .values()
            .filter(|i| i.final_label.is_some() && i.stage == Stage::Adjudication)
            .count(),
    })
}

pub const VOCAB: [&str; 12] =
    ["river", "city", "team", "player", "coach", "season", "bridge", "tower", "market", "harbor", "valley", "island"];

/// Random corpus with unique passages and distinct grounded gold answers.
pub fn random_corpus(rng: &mut ChaCha8Rng, max_instances: usize) -> Vec<Instance> {
    let n = rng.random_range(1..=max_instances);
    (0..n)
        .map(|i| {
            let len = rng.random_range(4..20);
            let mut words: Vec<String> = vec![format!("doc{i}")];
            words.extend((0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_owned()));
            let passage = words.join(" ");
            let want = rng.random_range(1..=6);
            let mut golds: Vec<String> = Vec::new();
            for _ in 0..want * 3 {
                if golds.len() == want {
                    break;
                }
                let start = rng.random_range(1..words.len());
                let end = rng.random_range(start + 1..=words.len().min(start + 3));
                let text = words[start..end].join(" ");
                if !golds.contains(&text) {
                    golds.push(text);
                }
            }
            let answers = golds.iter().map(|g| AnswerInput::new(g.as_str())).collect();
            let question = format!("Which {} items appear?", VOCAB[rng.random_range(0..VOCAB.len())]);
            Instance::build(format!("r{i}"), Dataset::Other, &question, &passage, answers).unwrap()
        })
        .collect()
}

/// Noisy predictions: some gold texts, some passage fragments, some
/// duplicates, sometimes nothing.
pub fn random_predictions(rng: &mut ChaCha8Rng, corpus: &[Instance]) -> Vec<multiqa::PredictionSet> {
    corpus
        .iter()
        .map(|inst| {
            let tokens = inst.passage.tokens();
            let mut spans: Vec<String> = Vec::new();
            for _ in 0..rng.random_range(0..6) {
                let text = match rng.random_range(0..4) {
                    0 | 1 => {
                        let golds: Vec<&str> = inst.gold.texts().collect();
                        golds[rng.random_range(0..golds.len())].to_owned()
                    }
                    2 => {
                        let s = rng.random_range(0..tokens.len());
                        let e = rng.random_range(s + 1..=tokens.len().min(s + 4));
                        tokens[s..e].join(" ")
                    }
                    _ => VOCAB[rng.random_range(0..VOCAB.len())].to_uppercase(),
                };
                spans.push(text);
            }
            if !spans.is_empty() && rng.random_bool(0.2) {
                spans.push(spans[0].clone());
            }
            multiqa::PredictionSet::from_texts(&inst.id, spans, "fuzz")
        })
        .collect()
}

/// Exact predictions: every gold text once.
pub fn gold_predictions(corpus: &[Instance]) -> Vec<multiqa::PredictionSet> {
    corpus.iter().map(|i| multiqa::PredictionSet::from_texts(&i.id, i.gold.texts(), "gold")).collect()
}

/// Longest common contiguous run by enumerating every substring of `a`.
pub fn brute_force_lcs<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut best = 0;
    for i in 0..a.len() {
        for j in i + 1..=a.len() {
            let sub = &a[i..j];
            if sub.len() > best && b.windows(sub.len()).any(|w| w == sub) {
                best = sub.len();
            }
        }
    }
    best
}

/// Random corpus whose gold answers are disjoint, non-adjacent token runs
/// over unique tokens, so span-based decoders can recover them exactly.
pub fn disjoint_corpus(rng: &mut ChaCha8Rng, max_instances: usize) -> Vec<Instance> {
    let n = rng.random_range(1..=max_instances);
    (0..n)
        .map(|i| {
            let len = rng.random_range(6..24);
            let words: Vec<String> =
                (0..len).map(|t| format!("{}{t}", VOCAB[rng.random_range(0..VOCAB.len())])).collect();
            let mut golds = Vec::new();
            let mut pos = rng.random_range(0..3);
            while pos < len && golds.len() < 6 {
                let end = (pos + rng.random_range(1..=3)).min(len);
                golds.push(words[pos..end].join(" "));
                pos = end + rng.random_range(1..4);
            }
            let passage = words.join(" ");
            let answers = golds.iter().map(|g| AnswerInput::new(g.as_str())).collect();
            Instance::build(format!("d{i}"), Dataset::Other, "Which items appear?", &passage, answers).unwrap()
        })
        .collect()
}
