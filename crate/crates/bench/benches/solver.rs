use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sgpca::prelude::*;
use sgpca::sim::Setting;
use sgpca::solver::{inner_loop, xi_update};
use sgpca::threshold::{keep_top_entries, keep_top_rows};
use sgpca_bench::{config, fixture};

fn thresholding(c: &mut Criterion) {
    let (_, truth) = fixture(Setting::B, Family::Gaussian, 100, 2000, 1);
    let s = &truth.q + Mat::from_fn(2000, 4, |i, j| (((i * 31 + j * 17) % 97) as f64 - 48.0) * 1e-3);
    let mut g = c.benchmark_group("threshold");
    g.bench_function("entries_2000x4", |b| {
        b.iter(|| {
            let mut m = s.clone();
            keep_top_entries(&mut m, 640);
            m
        })
    });
    g.bench_function("rows_2000x4", |b| {
        b.iter(|| {
            let mut m = s.clone();
            keep_top_rows(&mut m, 400);
            m
        })
    });
    g.finish();
}

fn inner(c: &mut Criterion) {
    let mut g = c.benchmark_group("inner_loop");
    for p in [200, 800] {
        let (data, _) = fixture(Setting::B, Family::Gaussian, 100, p, 2);
        let cfg = config(Setting::B, Family::Gaussian);
        let init = random_init(100, p, 4, 3).unwrap();
        let xi = xi_update(&data, Family::Gaussian, &init.theta(), 1.0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(p), &xi, |b, xi| {
            b.iter(|| inner_loop(xi, &init, &cfg).unwrap())
        });
    }
    g.finish();
}

fn solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_setting_c");
    g.sample_size(10);
    for family in [Family::Gaussian, Family::Bernoulli, Family::Poisson] {
        let (data, _) = fixture(Setting::C, family, 100, 200, 4);
        let cfg = SolverConfig {
            max_outer: 50,
            ..config(Setting::C, family)
        };
        let acc = AccelConfig::default();
        let init = random_init(100, 200, 4, 5).unwrap();
        g.bench_function(BenchmarkId::new("basic", family), |b| {
            b.iter(|| fit(&data, family, &cfg, init.clone()).unwrap())
        });
        g.bench_function(BenchmarkId::new("accelerated", family), |b| {
            b.iter(|| fit_accelerated(&data, family, &cfg, &acc, init.clone()).unwrap())
        });
        let sched = ScreenSchedule::new(0.05, ScreenMode::Outer, cfg.sparsity.q(), 200).unwrap();
        g.bench_function(BenchmarkId::new("progressive", family), |b| {
            b.iter(|| fit_progressive(&data, family, &cfg, &acc, &sched, init.clone()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, thresholding, inner, solvers);
criterion_main!(benches);
