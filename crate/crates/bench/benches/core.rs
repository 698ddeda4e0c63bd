use std::hint::black_box;

use ampf_bench::{gaussian_matrix, scored, synthetic};
use ampf_core::data::batch_iter;
use ampf_core::geometry::center_stats;
use ampf_core::losses::loss_mpf;
use ampf_core::metrics::{auroc, oscr};
use ampf_core::sampling::sample_error_vector;
use ampf_core::training::train;
use ampf_core::{ErrorVectorSpec, Graph, HyperParams, Mlp, PrototypeSet, SeededRng, Strategy, TrainConfig};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn autodiff(c: &mut Criterion) {
    let mut rng = SeededRng::new(0);
    let a = gaussian_matrix(&mut rng, 64, 64);
    let b = gaussian_matrix(&mut rng, 64, 64);
    c.bench_function("matmul 64x64 forward+backward", |bench| {
        bench.iter(|| {
            let mut g = Graph::new();
            let (x, y) = (g.param(a.clone()), g.param(b.clone()));
            let p = g.matmul(x, y).unwrap();
            let s = g.sum(p).unwrap();
            g.backward(s).unwrap();
            black_box(g.grad(x).unwrap().data()[0])
        })
    });
}

fn objective(c: &mut Criterion) {
    let mut rng = SeededRng::new(1);
    let net = Mlp::classifier(2, 64, 8, &mut rng).unwrap();
    let protos = PrototypeSet::random(4, 8, 1.0, &mut rng).unwrap();
    let split = synthetic(200);
    let batch = batch_iter(&split.train, &mut rng, 64).unwrap().remove(0);
    let h = HyperParams::default();
    c.bench_function("classifier mpf loss and gradient, batch 64", |bench| {
        bench.iter(|| {
            let mut g = Graph::new();
            let bound = net.bind(&mut g, true);
            let bp = protos.bind(&mut g, true);
            let x = g.constant(batch.features.clone());
            let f = bound.forward(&mut g, x).unwrap();
            let obj = loss_mpf(&mut g, f, &batch.labels, &bp, &h).unwrap();
            g.backward(obj.total).unwrap();
            black_box(obj.breakdown.total)
        })
    });
}

fn sampling(c: &mut Criterion) {
    let mut rng = SeededRng::new(2);
    let protos = PrototypeSet::random(10, 128, 1.0, &mut rng).unwrap();
    let spec = ErrorVectorSpec::from_stats(&center_stats(&protos), 10).unwrap();
    c.bench_function("error vectors 64x128", |bench| {
        bench.iter(|| black_box(sample_error_vector(&mut rng, &spec, 64)))
    });
}

fn metrics(c: &mut Criterion) {
    let samples = scored(10_000);
    c.bench_function("auroc 10k", |b| b.iter(|| black_box(auroc(&samples).unwrap())));
    c.bench_function("oscr 10k", |b| b.iter(|| black_box(oscr(&samples).unwrap())));
}

fn training(c: &mut Criterion) {
    let split = synthetic(200);
    let mut group = c.benchmark_group("training, 1 epoch of the default benchmark");
    group.sample_size(10);
    for strategy in [Strategy::Mpf, Strategy::Ampf, Strategy::AmpfPlusPlus] {
        let cfg = TrainConfig {
            strategy,
            max_epoch: 1,
            ..TrainConfig::default()
        };
        group.bench_function(strategy.to_string(), |b| {
            b.iter_batched(
                || cfg.clone(),
                |cfg| black_box(train(&cfg, &split.train).unwrap()),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, autodiff, objective, sampling, metrics, training);
criterion_main!(benches);
