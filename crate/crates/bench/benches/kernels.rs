use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use woods_bench::{score_set, Fixture};
use woods_core::alm::{batch_lagrangian, AlmState, ConstraintSpec};
use woods_core::eval::{auroc, fpr_at_tpr};

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_backward");
    for hidden in [32, 128] {
        let f = Fixture::new(hidden, 256);
        let x = f.id.features()[0].clone();
        group.bench_with_input(BenchmarkId::from_parameter(hidden), &hidden, |b, _| {
            b.iter(|| {
                let (logits, trace) = f.model.forward(black_box(&x)).unwrap();
                f.model.backward(&trace, &logits).unwrap()
            })
        });
    }
    group.finish();
}

fn lagrangian(c: &mut Criterion) {
    let f = Fixture::new(32, 512);
    let spec = ConstraintSpec { alpha: 0.05, tau: 0.3, tol: 0.05 };
    let mut state = AlmState::new(1.0, 1.0, 1.5, 1.0).unwrap();
    state.lambda1 = 0.5;
    let mut group = c.benchmark_group("batch_lagrangian");
    for b in [32, 128] {
        let id = f.id_batch(b);
        let wild = f.wild_batch(b);
        group.bench_with_input(BenchmarkId::from_parameter(b), &b, |bench, _| {
            bench.iter(|| batch_lagrangian(&f.model, black_box(&id), black_box(&wild), &spec, &state).unwrap())
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics");
    for n in [1_000, 10_000] {
        let scores = score_set(n);
        group.bench_with_input(BenchmarkId::new("auroc", n), &n, |b, _| b.iter(|| auroc(black_box(&scores)).unwrap()));
        group.bench_with_input(BenchmarkId::new("fpr_at_95tpr", n), &n, |b, _| {
            b.iter(|| fpr_at_tpr(black_box(&scores), 0.95).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward_backward, lagrangian, metrics);
criterion_main!(benches);
