use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use listk_core::algorithms::{
    lmpq_select, lmpq_sort, lt_filter, lt_topk, FilterConfig, PivotConfig,
};
use listk_core::{Corpus, Oracle, Query};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus(n: usize) -> Corpus {
    Corpus::random_permutation(n, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
}

fn operators(c: &mut Criterion) {
    let q = Query::new("q", "relevance");
    let oracle = Oracle::perfect(20).unwrap();
    let mut group = c.benchmark_group("operators");
    for n in [1000, 5000] {
        let corpus = corpus(n);
        let docs = corpus.doc_refs();
        group.bench_with_input(BenchmarkId::new("lt_topk_k10", n), &n, |b, _| {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            b.iter(|| lt_topk(black_box(&docs), &q, 10, &oracle, &mut rng).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("lmpq_select_k10_p4", n), &n, |b, _| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let cfg = PivotConfig::new(4);
            b.iter(|| lmpq_select(black_box(&docs), &q, 10, &cfg, &oracle, None, &mut rng).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("lmpq_sort_p6", n), &n, |b, _| {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let cfg = PivotConfig::new(6);
            b.iter(|| lmpq_sort(black_box(&docs), &q, &cfg, &oracle, None, &mut rng).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("lt_filter_s5", n), &n, |b, _| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let cfg = FilterConfig::new(5);
            b.iter(|| lt_filter(black_box(&docs), &q, &cfg, &oracle, &mut rng).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, operators);
criterion_main!(benches);
