use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use impactfit_core::simulator::{sample_observations, simulate, two_box_scene, TwoBoxOptions};
use impactfit_core::solver::{reconstruct, SolveConfig};

fn solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("reconstruct");
    g.sample_size(10);
    for interval in [5.0, 10.0, 19.0] {
        let gt = simulate(&two_box_scene(2, &TwoBoxOptions::default()).unwrap()).unwrap();
        let obs = sample_observations(&gt, interval, 2.0 * interval).unwrap();
        let cfg = SolveConfig::default();
        g.bench_function(format!("noise_free/interval_{interval}"), |b| {
            b.iter(|| reconstruct(black_box(&obs), &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, solve);
criterion_main!(benches);
