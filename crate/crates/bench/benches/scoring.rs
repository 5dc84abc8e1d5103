use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use multiqa::{corpus_report, lcs_len, partial_scores, score_question, LcsMode};
use multiqa_bench::{phrase, rng, scored_questions};
use std::hint::black_box;

fn lcs(c: &mut Criterion) {
    let mut group = c.benchmark_group("lcs_len");
    for n in [8usize, 64, 512] {
        let mut r = rng(n as u64);
        let a: Vec<char> = phrase(&mut r, n / 4 + 1).chars().take(n).collect();
        let b: Vec<char> = phrase(&mut r, n / 4 + 1).chars().take(n).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &(a, b), |bch, (a, b)| bch.iter(|| lcs_len(a, b)));
    }
    group.finish();
}

fn partial(c: &mut Criterion) {
    let mut r = rng(7);
    let (p, g) = (phrase(&mut r, 6), phrase(&mut r, 6));
    for (name, mode) in [("token", LcsMode::Token), ("char", LcsMode::Char)] {
        c.bench_function(&format!("partial_scores/{name}"), |b| {
            b.iter(|| partial_scores(black_box(&p), black_box(&g), mode))
        });
    }
}

fn corpus(c: &mut Criterion) {
    let mut group = c.benchmark_group("score_corpus");
    for k in [1usize, 4, 8] {
        let questions = scored_questions(k as u64, 1000, k);
        group.bench_with_input(BenchmarkId::new("answers", k), &questions, |b, qs| {
            b.iter(|| {
                let scores: Vec<_> = qs.iter().map(|(p, g)| score_question(p, g, LcsMode::Token)).collect();
                corpus_report(&scores)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, lcs, partial, corpus);
criterion_main!(benches);
