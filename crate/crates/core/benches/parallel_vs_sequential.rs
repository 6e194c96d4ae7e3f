use bilateral_core::demo::{episode_setups, mop_length_grid, run_demonstrations, DemoSetup};
use bilateral_core::learn::{loss_and_gradients, LstmModel, ModelShape};
use bilateral_core::parallel::Exec;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn modes() -> Vec<(&'static str, Exec)> {
    let mut out = vec![("sequential", Exec::Sequential)];
    if Exec::is_parallel_available() {
        out.push(("parallel", Exec::Parallel));
    }
    out
}

fn batch_gradients(c: &mut Criterion) {
    let shape = ModelShape {
        layers: 2,
        hidden: 32,
        input: 9,
        output: 9,
    };
    let model = LstmModel::init(shape, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut rows = |n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..9).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect()
    };
    let seqs: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = (0..32).map(|_| (rows(100), rows(100))).collect();
    let batch: Vec<(&[Vec<f64>], &[Vec<f64>])> =
        seqs.iter().map(|(x, y)| (&x[..], &y[..])).collect();

    let mut group = c.benchmark_group("bptt_batch_32x100");
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| loss_and_gradients(&model, &batch, exec).unwrap())
        });
    }
    group.finish();
}

fn demonstrations(c: &mut Criterion) {
    let mut base = DemoSetup::default();
    base.script.episode_duration = 6.0;
    let setups = episode_setups(&base, &mop_length_grid(8, 0.43, 0.01), 0.05, 3);

    let mut group = c.benchmark_group("demos_8x6s");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_demonstrations(&setups, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, batch_gradients, demonstrations);
criterion_main!(benches);
