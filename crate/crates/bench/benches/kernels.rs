use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use optdiff::fft::Fft2d;
use optdiff::optimal::{nnls_small, optimal_step};
use optdiff::priors::Prior;
use optdiff::sampler::{self, LambdaMode, SamplerConfig, StepSize};
use optdiff::schedule::build_schedule;
use optdiff::spectral::{periodogram, Image};
use optdiff_bench::{deblur_problem, gmm_prior, noise, random_basis, smooth_image, wss_prior};

fn fft(c: &mut Criterion) {
    let mut g = c.benchmark_group("fft");
    for n in [32usize, 64, 128] {
        let fft = Fft2d::new(n, n);
        let x = noise(n * n, 1);
        g.bench_with_input(BenchmarkId::new("forward_unitary", n), &x, |b, x| {
            b.iter(|| fft.forward_real_unitary(black_box(x)))
        });
        let img = Image::new(n, n, x.clone()).unwrap();
        g.bench_with_input(BenchmarkId::new("periodogram", n), &img, |b, img| {
            b.iter(|| periodogram(black_box(img)))
        });
    }
    g.finish();
}

fn denoisers(c: &mut Criterion) {
    let (h, w) = (32, 32);
    let x = smooth_image(h, w);
    let wss = wss_prior(h, w);
    let mut g = c.benchmark_group("denoise");
    g.bench_function("wss_gaussian", |b| b.iter(|| wss.denoise(black_box(&x), 0.1).unwrap()));
    for k in [4usize, 16] {
        let gmm = gmm_prior(h, w, k);
        g.bench_with_input(BenchmarkId::new("gmm", k), &gmm, |b, p| {
            b.iter(|| p.denoise(black_box(&x), 0.1).unwrap())
        });
    }
    g.finish();
}

fn nnls(c: &mut Criterion) {
    let n = 1024;
    let mut g = c.benchmark_group("nnls");
    for p in [2usize, 3] {
        let u = random_basis(n, p, 3);
        let t = noise(n, 4);
        g.bench_with_input(BenchmarkId::new("small", p), &p, |b, _| {
            b.iter(|| nnls_small(&u, black_box(&t)).unwrap())
        });
        let mu = noise(n, 5);
        g.bench_with_input(BenchmarkId::new("oracle_step", p), &p, |b, _| {
            b.iter(|| optimal_step(Some(black_box(&t)), &mu, &u).unwrap())
        });
    }
    g.finish();
}

fn sampler_runs(c: &mut Criterion) {
    let (h, w) = (32, 32);
    let problem = deblur_problem(h, w);
    let prior = wss_prior(h, w);
    let schedule = build_schedule(2.0, 0.01, 20, 7.0).unwrap();
    let cfg = SamplerConfig {
        n_steps: 20,
        lambda_mode: LambdaMode::Invariant(1.0),
        alpha: StepSize::Constant(0.05),
        ..SamplerConfig::default()
    };
    c.bench_function("sampler/run_20_steps", |b| {
        b.iter(|| sampler::run(black_box(&problem), &prior, &schedule, &cfg).unwrap())
    });
    let oracle = SamplerConfig {
        policy: sampler::WeightPolicy::Oracle,
        ..cfg.clone()
    };
    c.bench_function("sampler/run_20_oracle_steps", |b| {
        b.iter(|| sampler::run(black_box(&problem), &prior, &schedule, &oracle).unwrap())
    });
}

criterion_group!(benches, fft, denoisers, nnls, sampler_runs);
criterion_main!(benches);
