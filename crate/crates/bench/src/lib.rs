//! Synthetic inputs for the criterion benchmarks in `benches/`.

use multiqa::paradigms::CandidateSpan;
use multiqa::{AnswerSet, AnswerSpan, PredictionSet};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const WORDS: &[&str] =
    &["river", "valley", "north", "county", "Germany", "Austria", "league", "season", "bridge", "1914", "tower", "bay"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn phrase(rng: &mut impl Rng, words: usize) -> String {
    (0..words).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// `n` question pairs, each with up to `k` gold answers and `k` predictions.
pub fn scored_questions(seed: u64, n: usize, k: usize) -> Vec<(PredictionSet, AnswerSet)> {
    let mut rng = rng(seed);
    (0..n)
        .map(|q| {
            let golds: Vec<String> = (0..k).map(|i| format!("{} {i}", phrase(&mut rng, 3))).collect();
            let preds: Vec<String> =
                golds.iter().map(|g| if rng.random_bool(0.5) { g.clone() } else { phrase(&mut rng, 2) }).collect();
            let gold = AnswerSet::new(golds.into_iter().map(AnswerSpan::text_only).collect()).unwrap();
            (PredictionSet::from_texts(format!("q{q}"), preds, "bench"), gold)
        })
        .collect()
}

/// Random scored candidate spans over a passage of `passage_len` tokens.
pub fn candidates(seed: u64, n: usize, passage_len: usize) -> Vec<CandidateSpan> {
    let mut rng = rng(seed);
    (0..n)
        .map(|_| {
            let start = rng.random_range(0..passage_len - 4);
            let len = rng.random_range(1..=4);
            CandidateSpan::new(start..start + len, rng.random(), passage_len).unwrap()
        })
        .collect()
}
