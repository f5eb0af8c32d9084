use criterion::{black_box, criterion_group, criterion_main, Criterion};
use latentfire::nmf::{nmf_solve, Loss, NmfConfig};
use latentfire::ntf::{ncpd_solve, ntucker_solve, NtfConfig};
use latentfire::selection::{select_k, PerturbConfig, SelectionRule};
use latentfire::signal::{mel_spectrogram, AudioClip};
use latentfire::tensor::{khatri_rao, unfold};
use latentfire_bench::{planted_matrix, ramp_tensor};

fn tensor_algebra(c: &mut Criterion) {
    let x = ramp_tensor(&[30, 40, 50]);
    c.bench_function("unfold 30x40x50 mode 1", |b| b.iter(|| unfold(black_box(&x), 1).unwrap()));
    let a = planted_matrix(200, 8, 4);
    let bm = planted_matrix(150, 8, 4);
    c.bench_function("khatri_rao 200x8 (.) 150x8", |b| b.iter(|| khatri_rao(black_box(&a), black_box(&bm)).unwrap()));
}

fn nmf(c: &mut Criterion) {
    let x = planted_matrix(100, 200, 4);
    for loss in [Loss::Kl, Loss::Frobenius] {
        let cfg = NmfConfig::new(4).with_loss(loss).with_max_iters(50).with_tol(0.0);
        c.bench_function(&format!("nmf {loss:?} 100x200 k=4 50 iters"), |b| {
            b.iter(|| nmf_solve(black_box(&x), &cfg).unwrap())
        });
    }
}

fn nmfk(c: &mut Criterion) {
    let x = planted_matrix(40, 60, 3);
    let cfg = NmfConfig::new(1).with_max_iters(100).with_tol(1e-5);
    let perturb = PerturbConfig::default();
    let mut group = c.benchmark_group("select_k");
    group.sample_size(10);
    group.bench_function("40x60 k in 1..=4, 10 replicas", |b| {
        b.iter(|| select_k(black_box(&x), (1, 4), &cfg, &perturb, &SelectionRule::default()).unwrap())
    });
    group.finish();
}

fn ntf(c: &mut Criterion) {
    let x = ramp_tensor(&[20, 20, 20]);
    let cfg = NtfConfig::default().with_max_iters(20).with_tol(0.0);
    c.bench_function("ncpd 20^3 rank 3 20 iters", |b| b.iter(|| ncpd_solve(black_box(&x), 3, &cfg).unwrap()));
    c.bench_function("ntucker 20^3 ranks (2,3,2) 20 iters", |b| {
        b.iter(|| ntucker_solve(black_box(&x), &[2, 3, 2], &cfg).unwrap())
    });
}

fn spectra(c: &mut Criterion) {
    let samples = (0..16000).map(|i| 0.5 * (i as f64 * 0.07).sin()).collect();
    let clip = AudioClip::new(samples, 16000).unwrap();
    c.bench_function("mel 1 s @ 16 kHz, 64 bands", |b| {
        b.iter(|| mel_spectrogram(black_box(&clip), 64, 400, 160).unwrap())
    });
}

criterion_group!(benches, tensor_algebra, nmf, nmfk, ntf, spectra);
criterion_main!(benches);
