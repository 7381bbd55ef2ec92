use criterion::{black_box, criterion_group, criterion_main, Criterion};
use emogan_core::data::{make_toy_corpus, ToyCorpusConfig};
use emogan_core::linalg::Matrix;
use emogan_core::metrics::{fid, GaussianStats};
use emogan_core::models::{GanModel, ModelKind, ScaleProfile};
use emogan_core::nn::{loss_mse, Activation, Mlp};
use emogan_core::priors::MixturePrior;
use emogan_core::rng::seeded;
use emogan_core::train::{train, TrainPlan};
use rand::Rng as _;

fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seeded(seed);
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

fn matmul(c: &mut Criterion) {
    let (a, b) = (random(256, 256, 1), random(256, 256, 2));
    c.bench_function("matmul 256x256", |bench| {
        bench.iter(|| black_box(a.dot(&b)))
    });
    let x = random(64, 1582, 3);
    let w = random(1582, 1000, 4);
    c.bench_function("matmul 64x1582 by 1582x1000", |bench| {
        bench.iter(|| black_box(x.dot(&w)))
    });
}

fn forward_backward(c: &mut Criterion) {
    let dims = [64, 40, 20, 8, 2];
    let acts = [
        Activation::Relu,
        Activation::Relu,
        Activation::Relu,
        Activation::Linear,
    ];
    let net = Mlp::new(&dims, &acts, &mut seeded(5)).unwrap();
    let x = random(64, 64, 6);
    let target = random(64, 2, 7);
    c.bench_function("mlp forward+backward batch 64", |bench| {
        bench.iter(|| {
            let (out, cache) = net.forward(&x).unwrap();
            let (_, up) = loss_mse(&out, &target).unwrap();
            black_box(net.backward(&cache, &up).unwrap())
        })
    });
}

fn frechet(c: &mut Criterion) {
    let a = GaussianStats::from_samples(&random(500, 64, 8)).unwrap();
    let b = GaussianStats::from_samples(&random(500, 64, 9)).unwrap();
    c.bench_function("fid 64-d", |bench| {
        bench.iter(|| black_box(fid(&a, &b).unwrap()))
    });
}

fn training_epoch(c: &mut Criterion) {
    let corpus = make_toy_corpus(&ToyCorpusConfig::default()).unwrap();
    let mixture = MixturePrior::orthogonal(1.0, 0.25).unwrap();
    let mut group = c.benchmark_group("one epoch on the default toy corpus");
    group.sample_size(10);
    for kind in ModelKind::ALL {
        let mut plan = TrainPlan::defaults_for(kind);
        plan.epochs = 1;
        group.bench_function(kind.name(), |bench| {
            bench.iter(|| {
                let mut model =
                    GanModel::build(kind, 64, ScaleProfile::Proportional, mixture.clone(), 1)
                        .unwrap();
                black_box(train(&mut model, &corpus, &corpus, &plan).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, matmul, forward_backward, frechet, training_epoch);
criterion_main!(benches);
