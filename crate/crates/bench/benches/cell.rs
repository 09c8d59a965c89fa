use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use petnn_bench::{model, sequence};
use petnn_core::train::{backward_sequence, forward_sequence};
use petnn_core::{CellState, UpdateVariant, Vector};

fn step(c: &mut Criterion) {
    let mut g = c.benchmark_group("cell_step");
    for h in [16, 32, 64] {
        let m = model(8, h, UpdateVariant::SelfSelective);
        let x = sequence(1, 8, 1).remove(0);
        let state = CellState::zeros(h);
        g.bench_with_input(BenchmarkId::from_parameter(h), &h, |b, _| {
            b.iter(|| m.step(black_box(&state), black_box(&x)).unwrap())
        });
    }
    g.finish();
}

fn bptt(c: &mut Criterion) {
    let mut g = c.benchmark_group("bptt_len100_h32");
    g.sample_size(20);
    for variant in UpdateVariant::ALL {
        let m = model(2, 32, variant);
        let seq = sequence(100, 2, 2);
        g.bench_function(variant.name(), |b| {
            b.iter(|| {
                let fwd = forward_sequence(&m, &seq, &CellState::zeros(32)).unwrap();
                let mut grads = m.zeros_like();
                backward_sequence(&m, &fwd, &Vector::filled(1, 1.0), None, None, &mut grads).unwrap();
                grads
            })
        });
    }
    g.finish();
}

criterion_group!(benches, step, bptt);
criterion_main!(benches);
