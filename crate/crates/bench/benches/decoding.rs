use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use multiqa::paradigms::{gen_parse, gen_serialize, numpred_select, tagging_decode, Nps, TokenLabeling};
use multiqa::taxonomy::{detect_clue_words, Lexicon};
use multiqa::tokenize;
use multiqa_bench::{candidates, phrase, rng};
use rand::Rng;

fn numpred(c: &mut Criterion) {
    let mut group = c.benchmark_group("numpred_select");
    for n in [20usize, 200, 2000] {
        let cands = candidates(n as u64, n, 400);
        group.bench_with_input(BenchmarkId::from_parameter(n), &cands, |b, cands| b.iter(|| numpred_select(cands, 8)));
    }
    group.finish();
}

fn tagging(c: &mut Criterion) {
    let mut r = rng(3);
    let passage = tokenize(&phrase(&mut r, 400));
    let probs: Vec<f64> = (0..passage.len()).map(|_| r.random()).collect();
    let labeling = TokenLabeling::new(probs, &passage).unwrap();
    c.bench_function("tagging_decode/400", |b| b.iter(|| tagging_decode(&labeling, 0.5)));
}

fn generation(c: &mut Criterion) {
    let mut r = rng(5);
    let answers: Vec<String> = (0..8).map(|_| phrase(&mut r, 3)).collect();
    let text = gen_serialize(&answers, Nps::Count).unwrap();
    c.bench_function("gen_parse/8", |b| b.iter(|| gen_parse(&text)));
}

fn clues(c: &mut Criterion) {
    let questions: Vec<_> = [
        "Which two teams scored the first touchdown of the game?",
        "How many yards longer was the longest field goal than the shortest?",
        "What are the names of the rivers that flow through both countries?",
        "Who scored more points, Smith or Jones?",
    ]
    .iter()
    .map(|q| tokenize(q))
    .collect();
    let lexicon = Lexicon::builtin();
    c.bench_function("detect_clue_words", |b| {
        b.iter(|| questions.iter().map(|q| detect_clue_words(q, lexicon).len()).sum::<usize>())
    });
}

criterion_group!(benches, numpred, tagging, generation, clues);
criterion_main!(benches);
