use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use entorder::catalog::build;
use entorder::invariants::{invariant_vector, tensor_rank};
use entorder::structure::partition;
use entorder::SearchBudget;

fn ranks(c: &mut Criterion) {
    let mut g = c.benchmark_group("tensor_rank");
    for name in ["GHZ3", "W", "Psi1", "Psi4", "Psi6", "incomp224", "GHZ2sq"] {
        let s = build(name).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(name), &s, |b, s| b.iter(|| tensor_rank(black_box(s), &SearchBudget::default())));
    }
    g.finish();
}

fn analysis(c: &mut Criterion) {
    let s = build("fig1").unwrap();
    c.bench_function("partition/fig1", |b| b.iter(|| partition(black_box(&s))));
    c.bench_function("invariant_vector/fig1", |b| b.iter(|| invariant_vector(black_box(&s), &SearchBudget::low())));
}

criterion_group!(benches, ranks, analysis);
criterion_main!(benches);
