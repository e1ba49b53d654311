use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use twinkit_bench::{problem, processed, raw};
use twinkit_core::apply_transform;
use twinkit_core::evalstats::{canonical_response, hamming_similarity, wilcoxon_with, Alternative, Method};
use twinkit_core::metalearn::{build_meta_dataset, hessian_vector, loss_and_grad, sample_task, Dims, TaskConfig};

fn gradients(c: &mut Criterion) {
    let d = Dims {
        input: 24,
        hidden: 32,
        output: 3,
    };
    let (p, rows, ys) = problem(d, 256, 1);
    let xs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let mut g = vec![0.0; p.len()];
    c.bench_function("loss_and_grad 256x24", |b| {
        b.iter(|| black_box(loss_and_grad(black_box(&p), d, &xs, &ys, None, &mut g)))
    });
    let v: Vec<f64> = (0..p.len()).map(|i| ((i % 7) as f64 - 3.0) * 0.1).collect();
    let mut out = vec![0.0; p.len()];
    c.bench_function("hessian_vector 256x24", |b| {
        b.iter(|| hessian_vector(black_box(&p), d, &xs, &ys, None, &v, &mut out))
    });
}

fn tasks(c: &mut Criterion) {
    let data = processed("pillmate", 3000);
    let meta = build_meta_dataset(&data).unwrap();
    let cfg = TaskConfig::train_defaults();
    let mut rng = twinkit_core::seed::rng(3);
    c.bench_function("sample_task 2-way 1-shot", |b| {
        b.iter(|| black_box(sample_task(&meta, &cfg, &mut rng).unwrap()))
    });
}

fn preprocessing(c: &mut Criterion) {
    let data = processed("dosepod", 2000);
    let rows = raw("dosepod", 500);
    c.bench_function("apply_transform x500", |b| {
        b.iter(|| {
            for r in &rows.records {
                black_box(apply_transform(&data.manifest, r));
            }
        })
    });
}

fn statistics(c: &mut Criterion) {
    let x = canonical_response(200, &serde_json::json!({"volume": 7, "language": "EN", "alarm_enabled": true}));
    let y = canonical_response(200, &serde_json::json!({"volume": 9, "language": "NO", "alarm_enabled": true}));
    c.bench_function("hamming_similarity", |b| {
        b.iter(|| black_box(hamming_similarity(black_box(&x), black_box(&y)).unwrap()))
    });
    for n in [20usize, 200] {
        let a: Vec<f64> = (0..n).map(|i| ((i * 37) % 101) as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| ((i * 53) % 97) as f64).collect();
        let method = if n <= 25 { Method::Exact } else { Method::NormalApproximation };
        c.bench_function(&format!("wilcoxon n={n}"), |bn| {
            bn.iter_batched(
                || (a.clone(), b.clone()),
                |(a, b)| black_box(wilcoxon_with(&a, &b, Alternative::TwoSided, method).unwrap()),
                BatchSize::SmallInput,
            )
        });
    }
}

criterion_group!(benches, gradients, tasks, preprocessing, statistics);
criterion_main!(benches);
