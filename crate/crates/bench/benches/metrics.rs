use std::hint::black_box;

use codesum_bench::sentence_pairs;
use codesum_core::metrics::{bleu4, lcs_length, meteor_default, rouge_l};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics");
    for len in [10, 30] {
        let pairs = sentence_pairs(1, 64, len);
        group.bench_with_input(BenchmarkId::new("lcs", len), &pairs, |b, pairs| {
            b.iter(|| pairs.iter().map(|(r, g)| lcs_length(black_box(r), black_box(g))).sum::<usize>())
        });
        group.bench_with_input(BenchmarkId::new("bleu4", len), &pairs, |b, pairs| {
            b.iter(|| pairs.iter().map(|(r, g)| bleu4(black_box(r), black_box(g)).unwrap()).sum::<f64>())
        });
        group.bench_with_input(BenchmarkId::new("rouge_l", len), &pairs, |b, pairs| {
            b.iter(|| pairs.iter().map(|(r, g)| rouge_l(black_box(r), black_box(g), 1.2).unwrap()).sum::<f64>())
        });
        group.bench_with_input(BenchmarkId::new("meteor", len), &pairs, |b, pairs| {
            b.iter(|| pairs.iter().map(|(r, g)| meteor_default(black_box(r), black_box(g)).unwrap()).sum::<f64>())
        });
    }
    group.finish();
}

criterion_group!(benches, metrics);
criterion_main!(benches);
