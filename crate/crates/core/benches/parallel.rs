//! Sequential vs parallel throughput for the data-parallel sections.
//!
//! Every parallel loop in the crate goes through `exec::ordered_map`, so
//! flipping `exec::set_parallel` benchmarks identical work under both
//! execution models. Run with `cargo bench --bench parallel`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statepipe_core::exec;
use statepipe_core::metrics::{evaluate_states, Pooling};
use statepipe_core::models::{ModelHyper, TcnModel};
use statepipe_core::nn::tensor::Tensor2;

const MODES: [(&str, bool); 2] = [("seq", false), ("par", true)];

fn bench_tcn_forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let hyper = ModelHyper::tcn(32, 4, 64, 2, 6, 0.0);
    let model = TcnModel::<f32>::new(&hyper, &mut rng).unwrap();
    let batch: Vec<Tensor2<f32>> = (0..16)
        .map(|_| {
            let data: Vec<f32> = (0..128 * 32).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Tensor2::from_flat(128, 32, data)
        })
        .collect();
    let mut group = c.benchmark_group("tcn_forward_batch");
    for (name, parallel) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &parallel, |b, &p| {
            exec::set_parallel(p);
            b.iter(|| {
                exec::ordered_map(batch.len(), |i| model.forward(&batch[i]).unwrap().len())
            });
        });
    }
    group.finish();
    exec::set_parallel(true);
}

fn bench_evaluate_states(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (videos, frames, states) = (8, 512, 24);
    let per_video: Vec<(Vec<f64>, Vec<bool>)> = (0..videos)
        .map(|_| {
            let scores: Vec<f64> = (0..frames * states).map(|_| rng.gen()).collect();
            let labels: Vec<bool> = (0..frames * states).map(|_| rng.gen_bool(0.3)).collect();
            (scores, labels)
        })
        .collect();
    let names: Vec<String> = (0..states).map(|k| format!("state{k}")).collect();
    let mut group = c.benchmark_group("evaluate_states");
    for (name, parallel) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &parallel, |b, &p| {
            exec::set_parallel(p);
            b.iter(|| {
                evaluate_states("widget", &names, &per_video, states, Pooling::PerCategory)
                    .unwrap()
                    .map
            });
        });
    }
    group.finish();
    exec::set_parallel(true);
}

fn bench_ordered_map_overhead(c: &mut Criterion) {
    let mut group = c.benchmark_group("ordered_map_sum_of_squares");
    for (name, parallel) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &parallel, |b, &p| {
            exec::set_parallel(p);
            b.iter(|| {
                exec::ordered_map(64, |i| {
                    let mut acc = 0.0f64;
                    for j in 0..20_000 {
                        acc += ((i * 20_000 + j) as f64).sqrt();
                    }
                    acc
                })
                .iter()
                .sum::<f64>()
            });
        });
    }
    group.finish();
    exec::set_parallel(true);
}

criterion_group!(
    benches,
    bench_tcn_forward,
    bench_evaluate_states,
    bench_ordered_map_overhead
);
criterion_main!(benches);
