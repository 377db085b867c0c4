use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hfur_bench::overfit_clip;
use hfur_core::nn::{enhance_frames, init_params, train, NetworkConfig, TrainConfig};
use hfur_core::verify::random;

fn forward(c: &mut Criterion) {
    let cfg = NetworkConfig::test_profile();
    let (net, store) = init_params(&cfg, 0).unwrap();
    let x = random(&[1, cfg.temporal_window, 1, 64, 64], 1);
    c.bench_function("test profile forward 64x64", |b| {
        b.iter(|| {
            let mut t = net.tape();
            let xv = t.constant(x.clone());
            black_box(net.forward(&mut t, &store, xv).unwrap());
        })
    });
}

fn train_steps(c: &mut Criterion) {
    let cfg = NetworkConfig::test_profile();
    let clip = overfit_clip();
    let tc = TrainConfig { steps: 5, batch: 1, crop: 32, val_every: usize::MAX, ..TrainConfig::default() };
    c.bench_function("test profile 5 train steps crop 32", |b| {
        b.iter(|| {
            let (net, mut store) = init_params(&cfg, 0).unwrap();
            black_box(train(&net, &mut store, std::slice::from_ref(&clip), &tc).unwrap());
        })
    });
}

fn enhance(c: &mut Criterion) {
    let cfg = NetworkConfig::test_profile();
    let (net, store) = init_params(&cfg, 0).unwrap();
    let clip = overfit_clip();
    c.bench_function("enhance 5x64x64 clip", |b| {
        b.iter(|| black_box(enhance_frames(&net, &store, &clip.degraded).unwrap()))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = forward, train_steps, enhance
}
criterion_main!(benches);
