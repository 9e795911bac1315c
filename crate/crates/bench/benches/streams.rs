use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use etch_bench::{bind, rows_matrix, spread_vector};
use etch_core::codegen::{lower, run_prog};
use etch_core::combinators::{eval_nested, mul_values, NestedStream};
use etch_core::expr::{compile, interpret, Bindings};
use etch_core::formats::{stream_of_compressed, CompressedTensor};
use etch_core::{Integer, StreamCtx, TensorFormat, DEFAULT_STATE_BUDGET};

fn skipping(c: &mut Criterion) {
    let mut g = c.benchmark_group("sparse_times_large_vector");
    let len = 100_000;
    let small = CompressedTensor::from_coo(&spread_vector(len, 10), 0);
    let large = CompressedTensor::from_coo(&spread_vector(len, len / 2), 0);
    let u = etch_core::IndexUniverse::new([("i".to_string(), len)]).unwrap();
    for skip in [false, true] {
        g.bench_function(BenchmarkId::from_parameter(if skip { "skip" } else { "advance" }), |b| {
            b.iter(|| {
                let ctx = StreamCtx::new(Integer, skip, DEFAULT_STATE_BUDGET);
                let a = stream_of_compressed(&small).unwrap();
                let big = stream_of_compressed(&large).unwrap();
                let q = NestedStream::new(vec![0], mul_values(&ctx, a, big));
                black_box(eval_nested(&ctx, &u, q).unwrap())
            })
        });
    }
    g.finish();
}

fn matmul(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul");
    g.sample_size(20);
    let expr = "sum(j, A(i,j) * B(j,k))";
    for n in [64usize, 256] {
        let b: Bindings<i64> = bind(vec![
            ("A", rows_matrix(1, n, 4), TensorFormat::Dcsr),
            ("B", rows_matrix(2, n, 4), TensorFormat::Dcsr),
        ]);
        let formats = b.iter().map(|(k, v)| (k.clone(), v.format)).collect();
        for order in [["i", "j", "k"], ["i", "k", "j"]] {
            let order: Vec<String> = order.iter().map(|s| s.to_string()).collect();
            let sorted = compile(expr, &b, Some(&order)).unwrap();
            let label = order.concat();
            g.bench_with_input(BenchmarkId::new(format!("streams_{label}"), n), &n, |bench, _| {
                bench.iter(|| {
                    let ctx = StreamCtx::new(Integer, true, DEFAULT_STATE_BUDGET);
                    let q = interpret(&ctx, &sorted, &b).unwrap();
                    black_box(eval_nested(&ctx, &sorted.universe, q).unwrap())
                })
            });
            let kernel = lower(&sorted, &formats).unwrap();
            g.bench_with_input(BenchmarkId::new(format!("kernel_{label}"), n), &n, |bench, _| {
                bench.iter(|| black_box(run_prog(&kernel, &b, &Integer).unwrap()))
            });
        }
    }
    g.finish();
}

criterion_group!(benches, skipping, matmul);
criterion_main!(benches);
