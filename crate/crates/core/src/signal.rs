//! Spectral front ends: Hann-windowed STFT magnitudes, HTK mel filterbank
//! projection, and sliding-window temporal DFT magnitudes for video tensors.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::salient::SpatioTemporalTensor;
use crate::tensor::{DenseMatrix, DenseTensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::param("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::param("audio clip is empty"));
        }
        if let Some(pos) = samples.iter().position(|s| !(s.abs() <= 1.0)) {
            return Err(Error::domain(format!(
                "sample {pos} = {} lies outside [-1, 1]",
                samples[pos]
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Converts a duration in milliseconds to a whole number of samples.
    pub fn ms_to_samples(&self, ms: f64) -> usize {
        (ms * 1e-3 * self.sample_rate as f64).round() as usize
    }
}

/// Non-negative `bands × frames` magnitudes (linear bins or mel bands).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub magnitude: DenseMatrix,
    /// Center frequency of every row, in Hz.
    pub band_centers: Vec<f64>,
    /// Frame hop in seconds.
    pub hop_seconds: f64,
    /// Frame length in seconds.
    pub window_seconds: f64,
}

impl Spectrogram {
    pub fn bands(&self) -> usize {
        self.magnitude.rows()
    }

    pub fn frames(&self) -> usize {
        self.magnitude.cols()
    }

    /// Center time of frame `f`, in seconds.
    pub fn frame_center(&self, f: usize) -> f64 {
        f as f64 * self.hop_seconds + 0.5 * self.window_seconds
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of full frames of `window_len` samples at stride `hop`.
pub fn frame_count(len: usize, window_len: usize, hop: usize) -> usize {
    if window_len > len {
        0
    } else {
        (len - window_len) / hop + 1
    }
}

fn check_framing(len: usize, window_len: usize, hop: usize) -> Result<()> {
    if window_len == 0 || hop == 0 {
        return Err(Error::param("window length and hop must be positive"));
    }
    if window_len > len {
        return Err(Error::param(format!(
            "window of {window_len} samples is longer than the {len}-sample signal"
        )));
    }
    Ok(())
}

/// Magnitudes of the one-sided DFT of every frame, `(window_len/2 + 1) × frames`.
fn framed_magnitudes(signal: &[f64], window: &[f64], hop: usize, bins: usize) -> Vec<Vec<f64>> {
    let n = window.len();
    let frames = frame_count(signal.len(), n, hop);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n);
    (0..frames)
        .into_par_iter()
        .map(|f| {
            let mut buf: Vec<Complex<f64>> = signal[f * hop..f * hop + n]
                .iter()
                .zip(window)
                .map(|(s, w)| Complex::new(s * w, 0.0))
                .collect();
            fft.process(&mut buf);
            buf[..bins].iter().map(|c| c.norm()).collect()
        })
        .collect()
}

fn columns_to_matrix(columns: &[Vec<f64>]) -> Result<DenseMatrix> {
    let rows = columns.first().map_or(0, Vec::len);
    DenseMatrix::new(rows, columns.len(), {
        let mut data = Vec::with_capacity(rows * columns.len());
        for r in 0..rows {
            data.extend(columns.iter().map(|c| c[r]));
        }
        data
    })
}

/// Hann-windowed short-time Fourier magnitudes on linear frequency bins.
pub fn stft_magnitude(clip: &AudioClip, window_len: usize, hop: usize) -> Result<Spectrogram> {
    check_framing(clip.samples.len(), window_len, hop)?;
    let bins = window_len / 2 + 1;
    let frames = framed_magnitudes(&clip.samples, &hann_window(window_len), hop, bins);
    let sr = clip.sample_rate as f64;
    Ok(Spectrogram {
        magnitude: columns_to_matrix(&frames)?,
        band_centers: (0..bins).map(|k| k as f64 * sr / window_len as f64).collect(),
        hop_seconds: hop as f64 / sr,
        window_seconds: window_len as f64 / sr,
    })
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK mel filterbank between 0 Hz and Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// `bands × bins` weights.
    pub weights: DenseMatrix,
    /// `bands + 2` edge frequencies in Hz; band `b` spans edges `b..=b+2`.
    pub edges: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(bands: usize, window_len: usize, sample_rate: u32) -> Result<Self> {
        if bands < 2 {
            return Err(Error::param("at least two mel bands are required"));
        }
        let sr = sample_rate as f64;
        let bins = window_len / 2 + 1;
        let top = hz_to_mel(sr / 2.0);
        let edges: Vec<f64> = (0..bands + 2)
            .map(|i| mel_to_hz(top * i as f64 / (bands + 1) as f64))
            .collect();
        let weights = DenseMatrix::from_fn(bands, bins, |b, k| {
            triangle(k as f64 * sr / window_len as f64, edges[b], edges[b + 1], edges[b + 2])
        });
        Ok(Self { weights, edges })
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges[1..self.edges.len() - 1].to_vec()
    }

    /// Weight of band `b` at frequency `hz`.
    pub fn response(&self, b: usize, hz: f64) -> f64 {
        triangle(hz, self.edges[b], self.edges[b + 1], self.edges[b + 2])
    }
}

fn triangle(f: f64, lo: f64, center: f64, hi: f64) -> f64 {
    if f <= lo || f >= hi {
        0.0
    } else if f <= center {
        (f - lo) / (center - lo)
    } else {
        (hi - f) / (hi - center)
    }
}

/// Mel-band power spectrogram: the filterbank applied to STFT power.
pub fn mel_spectrogram(
    clip: &AudioClip,
    bands: usize,
    window_len: usize,
    hop: usize,
) -> Result<Spectrogram> {
    let bank = MelFilterbank::new(bands, window_len, clip.sample_rate)?;
    let stft = stft_magnitude(clip, window_len, hop)?;
    let power = DenseMatrix::new(
        stft.magnitude.rows(),
        stft.magnitude.cols(),
        stft.magnitude.data().iter().map(|m| m * m).collect(),
    )?;
    Ok(Spectrogram {
        magnitude: bank.weights.matmul(&power)?,
        band_centers: bank.centers(),
        hop_seconds: stft.hop_seconds,
        window_seconds: stft.window_seconds,
    })
}

/// How video pixels are grouped into channels before the temporal DFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channelization {
    /// One channel per `z` slice: the mean over the whole `x × y` frame.
    FullFrame,
    /// Mean over `size × size` pixel blocks, per `z` slice.
    Blocks { size: usize },
    PerPixel,
}

impl Default for Channelization {
    fn default() -> Self {
        Channelization::Blocks { size: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalDftConfig {
    /// Frames per DFT window.
    pub window: usize,
    pub hop: usize,
    /// Frequency bins kept, from DC upward; `None` keeps all `window/2 + 1`.
    pub n_freq: Option<usize>,
    pub channels: Channelization,
}

impl Default for TemporalDftConfig {
    fn default() -> Self {
        Self {
            window: 32,
            hop: 16,
            n_freq: None,
            channels: Channelization::default(),
        }
    }
}

impl TemporalDftConfig {
    pub fn bins(&self) -> usize {
        self.n_freq.unwrap_or(self.window / 2 + 1)
    }

    /// Frames covered by window `w`, inclusive.
    pub fn window_span(&self, w: usize) -> (usize, usize) {
        (w * self.hop, w * self.hop + self.window - 1)
    }
}

/// Averages pixels into channel time series, `channels × t`.
pub fn channelize(video: &SpatioTemporalTensor, mode: Channelization) -> Result<Vec<Vec<f64>>> {
    let t = video.time_len();
    let [sx, sy, sz] = video.space_shape();
    let data = video.tensor().data();
    let frame = sx * sy * sz;
    let pixel = |ti: usize, x: usize, y: usize, z: usize| data[ti * frame + (x * sy + y) * sz + z];
    let block = match mode {
        Channelization::FullFrame => (sx, sy),
        Channelization::Blocks { size: 0 } => {
            return Err(Error::param("block size must be positive"));
        }
        Channelization::Blocks { size } => (size, size),
        Channelization::PerPixel => (1, 1),
    };
    let (bx, by) = block;
    let mut channels = Vec::new();
    for x0 in (0..sx).step_by(bx) {
        for y0 in (0..sy).step_by(by) {
            for z in 0..sz {
                let xs = x0..(x0 + bx).min(sx);
                let ys = y0..(y0 + by).min(sy);
                let count = (xs.len() * ys.len()) as f64;
                let series = (0..t)
                    .map(|ti| {
                        let mut acc = 0.0;
                        for x in xs.clone() {
                            for y in ys.clone() {
                                acc += pixel(ti, x, y, z);
                            }
                        }
                        acc / count
                    })
                    .collect();
                channels.push(series);
            }
        }
    }
    Ok(channels)
}

/// Sliding-window DFT magnitudes of every channel, as a
/// `(frequency, window, channel)` tensor.
pub fn temporal_dft_tensor(video: &SpatioTemporalTensor, cfg: &TemporalDftConfig) -> Result<DenseTensor> {
    check_framing(video.time_len(), cfg.window, cfg.hop)?;
    let bins = cfg.bins();
    if bins == 0 || bins > cfg.window / 2 + 1 {
        return Err(Error::param(format!(
            "n_freq must lie in 1..={}, got {bins}",
            cfg.window / 2 + 1
        )));
    }
    let channels = channelize(video, cfg.channels)?;
    let rect = vec![1.0; cfg.window];
    let spectra: Vec<Vec<Vec<f64>>> = channels
        .iter()
        .map(|series| framed_magnitudes(series, &rect, cfg.hop, bins))
        .collect();
    let windows = frame_count(video.time_len(), cfg.window, cfg.hop);
    let n_ch = channels.len();
    DenseTensor::from_fn(&[bins, windows, n_ch], |i| spectra[i[2]][i[1]][i[0]])
}
