//! Kernel and pipeline benchmarks on a synthetic cohort (5 attributes, 20 days, 30% MCAR).

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mtsk_core::cluster::{kmeans, kpca_fit};
use mtsk_core::cohort::{
    apply_missingness, generate_synthetic_cohort, Mechanism, MissingnessSpec, SynthConfig,
};
use mtsk_core::impute::{fit_imputer, impute};
use mtsk_core::kernels::{fit_gak_params, gram_matrix, log_gak, BaselineKernel};
use mtsk_core::lps::{lps_gram, lps_train, LpsConfig};
use mtsk_core::tck::{tck_train, TckConfig};
use mtsk_core::Cohort;

fn cohort(n: usize) -> Cohort {
    let c = generate_synthetic_cohort(&SynthConfig::new(n / 4, n - n / 4, 5, 20, 1.5, 1)).unwrap();
    apply_missingness(
        &c,
        &MissingnessSpec {
            mechanism: Mechanism::Mcar,
            rate: 0.3,
            seed: 2,
        },
    )
    .unwrap()
}

fn bench_gak(c: &mut Criterion) {
    let data = cohort(40);
    let filled = impute(&fit_imputer(&data, "mean".parse().unwrap()).unwrap(), &data).unwrap();
    let params = fit_gak_params(&filled).unwrap();
    let (x, y) = (&filled.samples()[0], &filled.samples()[1]);
    c.bench_function("log_gak_pair_5x20", |b| {
        b.iter(|| log_gak(black_box(x), black_box(y), &params).unwrap())
    });
    c.bench_function("gak_gram_n40", |b| {
        b.iter(|| gram_matrix(&BaselineKernel::Gak(params), black_box(&filled), None).unwrap())
    });
}

fn bench_tck(c: &mut Criterion) {
    let mut group = c.benchmark_group("tck_train");
    group.sample_size(10);
    for n in [50, 100] {
        let data = cohort(n);
        let cfg = TckConfig {
            n_init: 5,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(n), &data, |b, d| {
            b.iter(|| tck_train(d, &cfg, 1).unwrap())
        });
    }
    group.finish();
}

fn bench_lps(c: &mut Criterion) {
    let mut group = c.benchmark_group("lps");
    group.sample_size(10);
    let data = cohort(100);
    let cfg = LpsConfig::default();
    group.bench_function("train_n100", |b| {
        b.iter(|| lps_train(black_box(&data), &cfg, 1).unwrap())
    });
    let forest = lps_train(&data, &cfg, 1).unwrap();
    group.bench_function("gram_n100", |b| {
        b.iter(|| lps_gram(&forest, black_box(&data), None).unwrap())
    });
    group.finish();
}

fn bench_head(c: &mut Criterion) {
    let data = cohort(160);
    let filled = impute(&fit_imputer(&data, "zero".parse().unwrap()).unwrap(), &data).unwrap();
    let km = gram_matrix(&BaselineKernel::Linear { c: 0.0 }, &filled, None).unwrap();
    c.bench_function("kpca_n160_d10", |b| {
        b.iter(|| kpca_fit(black_box(&km), 10, None).unwrap())
    });
    let (_, emb) = kpca_fit(&km, 10, None).unwrap();
    c.bench_function("kmeans_n160_20_restarts", |b| {
        b.iter(|| kmeans(black_box(&emb.points), 2, 20, 1).unwrap())
    });
}

criterion_group!(benches, bench_gak, bench_tck, bench_lps, bench_head);
criterion_main!(benches);
