use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::Rng as _;
use sparse_pr::combinatorial::{self, ComplexSparseSignal};
use sparse_pr::conic::{project_psd, solve_weighted_l1_sdp, SolverSettings, WeightMatrix};
use sparse_pr::retrieval::{algorithm1, gerchberg_saxton, GsConfig, RetrievalConfig};
use sparse_pr::rng::rng_from_seed;
use sparse_pr::{autocorrelation, psd, random_sparse_signal};

fn psd_projection(c: &mut Criterion) {
    let mut group = c.benchmark_group("project_psd");
    for n in [16, 32, 64] {
        let mut rng = rng_from_seed(n as u64);
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let m = (&m + m.transpose()) * 0.5;
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| b.iter(|| project_psd(black_box(m))));
    }
    group.finish();
}

fn autocorrelation_fft(c: &mut Criterion) {
    let x = random_sparse_signal(4096, 32, 1).unwrap();
    c.bench_function("autocorrelation n=4096", |b| b.iter(|| autocorrelation(black_box(&x))));
}

fn lifted_solve(c: &mut Criterion) {
    let x = random_sparse_signal(16, 3, 2).unwrap();
    let a = autocorrelation(&x);
    let v = WeightMatrix::uniform(16, 1.0);
    let settings = SolverSettings::default();
    let mut group = c.benchmark_group("lifted");
    group.sample_size(10);
    group.bench_function("weighted_l1 n=16", |b| b.iter(|| solve_weighted_l1_sdp(&a, &v, &settings)));
    let p = psd(&x);
    let cfg = RetrievalConfig::default();
    group.bench_function("algorithm1 n=16 k=3", |b| b.iter(|| algorithm1(&p, &cfg, None)));
    group.finish();
}

fn gs(c: &mut Criterion) {
    let x = random_sparse_signal(64, 4, 3).unwrap();
    let p = psd(&x);
    let gs = GsConfig::default();
    c.bench_function("gerchberg_saxton n=64 k=4", |b| b.iter(|| gerchberg_saxton(&p, 4, &gs, 0, None)));
}

fn decode(c: &mut Criterion) {
    let mut group = c.benchmark_group("combinatorial");
    for n in [256, 1024] {
        let k = 8;
        let m = (8.0 * k as f64 * (n as f64).ln()).ceil() as usize;
        let x = ComplexSparseSignal::random(n, k, 4).unwrap();
        let e = combinatorial::design_measurements(n, k, m, 5).unwrap();
        let obs = combinatorial::measure(&x, &e).unwrap();
        group.bench_with_input(BenchmarkId::new("recover", n), &(obs, e), |b, (obs, e)| {
            b.iter(|| combinatorial::recover(black_box(obs), e))
        });
    }
    group.finish();
}

criterion_group!(benches, psd_projection, autocorrelation_fft, lifted_solve, gs, decode);
criterion_main!(benches);
