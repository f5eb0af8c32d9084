#![allow(dead_code)]

use std::f64::consts::PI;

use latentfire::salient::SpatioTemporalTensor;
use latentfire::seed;
use latentfire::signal::AudioClip;
use latentfire::tensor::{DenseMatrix, DenseTensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// `X = W·H` with sparse planted factors: each entry is zero with
/// probability 0.4 and uniform(0, 1) otherwise.
pub fn planted_sparse(rows: usize, cols: usize, k: usize, seed: u64) -> DenseMatrix {
    let mut rng = seed::rng(seed);
    let mut draw = |r: usize, c: usize| {
        DenseMatrix::from_fn(r, c, |_, _| if rng.gen::<f64>() < 0.4 { 0.0 } else { rng.gen() })
    };
    let w = draw(rows, k);
    let h = draw(k, cols);
    w.matmul(&h).unwrap()
}

/// A tone burst on top of uniform broadband noise.
pub struct Burst {
    pub freq: f64,
    pub start: f64,
    pub end: f64,
}

pub fn burst_clip(sample_rate: u32, seconds: f64, bursts: &[Burst], seed: u64) -> AudioClip {
    let mut rng = seed::rng(seed);
    let n = (sample_rate as f64 * seconds) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            let mut s = 0.05 * (2.0 * rng.gen::<f64>() - 1.0);
            for b in bursts {
                if t >= b.start && t < b.end {
                    s += 0.3 * (2.0 * PI * b.freq * t).sin();
                }
            }
            s
        })
        .collect();
    AudioClip::new(samples, sample_rate).unwrap()
}

pub fn iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = a.1.max(b.1) - a.0.min(b.0);
    inter / union
}

/// `(t, 8, 8)` video with a unit background plus `f(t, x, y)`.
pub fn video(t: usize, f: impl Fn(usize, usize, usize) -> f64) -> SpatioTemporalTensor {
    SpatioTemporalTensor::new(DenseTensor::from_fn(&[t, 8, 8], |i| 1.0 + f(i[0], i[1], i[2])).unwrap()).unwrap()
}

/// Spatiotemporal tensor with one planted spike frame per feature plus
/// Gaussian noise at the given SNR, clipped at zero. Returns the tensor and
/// the planted peak frame of the dominant feature.
pub fn spike_tensor(t: usize, space: [usize; 3], snr_db: f64, seed: u64) -> (SpatioTemporalTensor, usize) {
    let mut rng = seed::rng(seed);
    let peak = rng.gen_range(0..t);
    let profile: Vec<f64> = (0..t)
        .map(|i| {
            let d = i as f64 - peak as f64;
            0.1 + (-d * d / 8.0).exp()
        })
        .collect();
    let volume: Vec<f64> = (0..space.iter().product()).map(|_| 0.2 + rng.gen::<f64>()).collect();
    let clean: Vec<f64> = profile
        .iter()
        .flat_map(|p| volume.iter().map(move |v| p * v))
        .collect();
    let power = clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let noise = Normal::new(0.0, sigma).unwrap();
    let data = clean.iter().map(|v| (v + noise.sample(&mut rng)).max(0.0)).collect();
    let shape = vec![t, space[0], space[1], space[2]];
    (SpatioTemporalTensor::new(DenseTensor::new(shape, data).unwrap()).unwrap(), peak)
}
