//! End-to-end anomaly pipelines: audio source separation with event
//! detection, video Tucker + CPD decomposition, and the activation-trace
//! scoring both share.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nmf::{nmf_solve, Loss, NmfConfig, NmfModel};
use crate::ntf::{ncpd_solve, ntucker_solve, CpdModel, NtfConfig, TuckerModel};
use crate::salient::{LatentDim, SpatioTemporalTensor};
use crate::selection::{select_k, select_tensor_ranks, KSelectionReport, PerturbConfig, SelectionRule};
use crate::signal::{mel_spectrogram, temporal_dft_tensor, AudioClip, Channelization, TemporalDftConfig};
use crate::tensor::{unfold, DenseMatrix};

/// MAD-to-σ factor for normally distributed data.
const MAD_SCALE: f64 = 1.482_602_218_505_602;
/// Lower bound on the robust scale, relative to the trace's largest magnitude.
const SCALE_FLOOR: f64 = 0.01;
/// An event stays open while its score is at least this (or the threshold, if lower).
pub const RELEASE_SIGMA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub threshold_sigma: f64,
    /// Minimum number of consecutive steps at or above the threshold.
    pub min_run: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            threshold_sigma: 3.0,
            min_run: 3,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_sigma > 0.0) || !self.threshold_sigma.is_finite() {
            return Err(Error::param(format!(
                "threshold_sigma must be positive, got {}",
                self.threshold_sigma
            )));
        }
        if self.min_run == 0 {
            return Err(Error::param("min_run must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub source: usize,
    /// First and last step of the event, inclusive.
    pub start: usize,
    pub end: usize,
    /// Interval covered by the steps, in the report's time unit.
    pub start_time: f64,
    pub end_time: f64,
    pub peak_score: f64,
    pub peak_step: usize,
    pub label: Option<String>,
}

/// Spectral signature summary of one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub source: usize,
    /// Frequency of the signature's largest entry (Hz for audio, cycles per frame for video).
    pub peak_frequency: f64,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub events: Vec<Event>,
    pub k_used: usize,
    pub time_unit: String,
    pub sources: Vec<SourceSummary>,
    /// Traces that were constant and therefore not scored.
    pub skipped_traces: Vec<usize>,
    pub config: serde_json::Value,
}

/// Maps a time step to the `[start, end]` interval it covers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepClock {
    pub hop: f64,
    pub span: f64,
}

impl StepClock {
    /// One step per unit of time.
    pub const UNIT: StepClock = StepClock { hop: 1.0, span: 1.0 };

    fn interval(&self, start: usize, end: usize) -> (f64, f64) {
        (start as f64 * self.hop, end as f64 * self.hop + self.span)
    }
}

/// Robust z-scores `(v − median) / max(1.4826·MAD, 0.01·max|v|)`.
/// Returns `None` for constant traces.
pub fn robust_z(trace: &[f64]) -> Option<Vec<f64>> {
    let (lo, hi) = trace
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if trace.is_empty() || lo == hi {
        return None;
    }
    let med = median(trace.to_vec());
    let mad = median(trace.iter().map(|v| (v - med).abs()).collect());
    let peak = lo.abs().max(hi.abs());
    let scale = (MAD_SCALE * mad).max(SCALE_FLOOR * peak);
    Some(trace.iter().map(|v| (v - med) / scale).collect())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scores each trace and extracts events.
///
/// An event is a maximal stretch of steps scoring at least
/// `min(RELEASE_SIGMA, threshold_sigma)` that contains `min_run` consecutive
/// steps at or above `threshold_sigma`. Returns the events sorted by start and
/// the indices of constant traces, which are skipped.
pub fn score_activations(
    traces: &[Vec<f64>],
    cfg: &ScoreConfig,
    clock: StepClock,
) -> Result<(Vec<Event>, Vec<usize>)> {
    cfg.validate()?;
    let release = RELEASE_SIGMA.min(cfg.threshold_sigma);
    let mut events = Vec::new();
    let mut skipped = Vec::new();
    for (source, trace) in traces.iter().enumerate() {
        if let Some(pos) = trace.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::domain(format!(
                "trace {source} has invalid activation {} at step {pos}",
                trace[pos]
            )));
        }
        let Some(z) = robust_z(trace) else {
            log::warn!("trace {source} is constant; skipped");
            skipped.push(source);
            continue;
        };
        let mut t = 0;
        while t < z.len() {
            if z[t] < release {
                t += 1;
                continue;
            }
            let start = t;
            let (mut run, mut longest) = (0, 0);
            let mut peak_step = t;
            while t < z.len() && z[t] >= release {
                run = if z[t] >= cfg.threshold_sigma { run + 1 } else { 0 };
                longest = longest.max(run);
                if z[t] > z[peak_step] {
                    peak_step = t;
                }
                t += 1;
            }
            if longest >= cfg.min_run {
                let (start_time, end_time) = clock.interval(start, t - 1);
                events.push(Event {
                    source,
                    start,
                    end: t - 1,
                    start_time,
                    end_time,
                    peak_score: z[peak_step],
                    peak_step,
                    label: None,
                });
            }
        }
    }
    events.sort_by(|a, b| a.start.cmp(&b.start).then(a.source.cmp(&b.source)));
    Ok((events, skipped))
}

/// Names a frequency range; sources whose signature peaks inside it get the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandLabel {
    pub label: String,
    pub low: f64,
    pub high: f64,
}

fn summarize_sources(signatures: &DenseMatrix, freqs: &[f64], labels: &[BandLabel]) -> Vec<SourceSummary> {
    (0..signatures.cols())
        .map(|s| {
            let col = signatures.column(s);
            let best = (0..col.len()).fold(0, |b, i| if col[i] > col[b] { i } else { b });
            let peak_frequency = freqs[best];
            let label = labels
                .iter()
                .find(|l| (l.low..=l.high).contains(&peak_frequency))
                .map(|l| l.label.clone());
            SourceSummary {
                source: s,
                peak_frequency,
                label,
            }
        })
        .collect()
}

fn attach_labels(events: &mut [Event], sources: &[SourceSummary]) {
    for e in events {
        e.label = sources[e.source].label.clone();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioPipelineConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub mel_bands: usize,
    pub k: LatentDim,
    /// Solver settings for the final fit and the selection sweep; `k` and
    /// `loss` are overridden.
    pub nmf: NmfConfig,
    pub score: ScoreConfig,
    pub labels: Vec<BandLabel>,
}

impl Default for AudioPipelineConfig {
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            hop_ms: 10.0,
            mel_bands: 64,
            k: LatentDim::Auto {
                k_range: (1, 6),
                perturb: PerturbConfig::default(),
                rule: SelectionRule::default(),
            },
            nmf: NmfConfig::new(1),
            score: ScoreConfig::default(),
            labels: Vec::new(),
        }
    }
}

impl AudioPipelineConfig {
    /// Sets the seed of the final fit and of the selection sweep.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.nmf.seed = seed;
        if let LatentDim::Auto { perturb, .. } = &mut self.k {
            perturb.master_seed = seed;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioOutcome {
    /// `None` when the spectrogram is identically zero.
    pub model: Option<NmfModel>,
    pub selection: Option<KSelectionReport>,
    pub events: EventReport,
    /// Mel band centers in Hz, one per row of `W`.
    pub band_centers: Vec<f64>,
}

/// Mel spectrogram, latent dimension selection, KL NMF and event scoring on
/// the rows of `H`.
pub fn audio_pipeline(clip: &AudioClip, cfg: &AudioPipelineConfig) -> Result<AudioOutcome> {
    cfg.score.validate()?;
    let window = clip.ms_to_samples(cfg.window_ms);
    let hop = clip.ms_to_samples(cfg.hop_ms);
    let spec = mel_spectrogram(clip, cfg.mel_bands, window, hop)?;
    let clock = StepClock {
        hop: spec.hop_seconds,
        span: spec.window_seconds,
    };
    let config = serde_json::to_value(cfg).map_err(|e| Error::Format(e.to_string()))?;
    let x = &spec.magnitude;
    if x.data().iter().all(|v| *v == 0.0) {
        log::warn!("spectrogram is identically zero; no sources to separate");
        return Ok(AudioOutcome {
            model: None,
            selection: None,
            events: EventReport {
                events: Vec::new(),
                k_used: 0,
                time_unit: "seconds".into(),
                sources: Vec::new(),
                skipped_traces: Vec::new(),
                config,
            },
            band_centers: spec.band_centers,
        });
    }
    let base = NmfConfig {
        loss: Loss::Kl,
        ..cfg.nmf.clone()
    };
    let (k, selection) = resolve_k(x, &cfg.k, &base)?;
    let model = nmf_solve(x, &NmfConfig { k, ..base })?;
    let traces: Vec<Vec<f64>> = (0..k).map(|s| model.h.row(s).to_vec()).collect();
    let (mut events, skipped_traces) = score_activations(&traces, &cfg.score, clock)?;
    let sources = summarize_sources(&model.w, &spec.band_centers, &cfg.labels);
    attach_labels(&mut events, &sources);
    Ok(AudioOutcome {
        model: Some(model),
        selection,
        events: EventReport {
            events,
            k_used: k,
            time_unit: "seconds".into(),
            sources,
            skipped_traces,
            config,
        },
        band_centers: spec.band_centers,
    })
}

fn resolve_k(x: &DenseMatrix, k: &LatentDim, base: &NmfConfig) -> Result<(usize, Option<KSelectionReport>)> {
    match k {
        LatentDim::Fixed(k) => Ok((*k, None)),
        LatentDim::Auto { k_range, perturb, rule } => {
            let limit = x.rows().min(x.cols());
            let range = (k_range.0.min(limit), k_range.1.min(limit));
            let report = select_k(x, range, base, perturb, rule)?;
            let k = report.selected_k.ok_or(Error::RankSelection { mode: 0 })?;
            Ok((k, Some(report)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoPipelineConfig {
    pub dft: TemporalDftConfig,
    /// Upper end of the per-mode rank sweep for the Tucker model and of the
    /// CPD rank sweep; sweeps start at 1 and are clipped to what each mode allows.
    pub max_rank: usize,
    pub perturb: PerturbConfig,
    pub rule: SelectionRule,
    /// Solver settings of the rank-selection sweeps.
    pub selection_nmf: NmfConfig,
    pub ntf: NtfConfig,
    pub score: ScoreConfig,
    pub labels: Vec<BandLabel>,
}

impl Default for VideoPipelineConfig {
    fn default() -> Self {
        Self {
            dft: TemporalDftConfig {
                window: 16,
                hop: 4,
                n_freq: None,
                channels: Channelization::default(),
            },
            max_rank: 4,
            perturb: PerturbConfig::default(),
            rule: SelectionRule::default(),
            selection_nmf: NmfConfig::new(1).with_max_iters(400).with_tol(1e-5),
            ntf: NtfConfig::default(),
            score: ScoreConfig::default(),
            labels: Vec::new(),
        }
    }
}

impl VideoPipelineConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.perturb.master_seed = seed;
        self.selection_nmf.seed = seed;
        self.ntf.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoOutcome {
    pub tucker: TuckerModel,
    pub cpd: CpdModel,
    pub tucker_selection: Vec<KSelectionReport>,
    pub cpd_selection: Option<KSelectionReport>,
    /// `window × R` source activations: the Tucker window factor times the
    /// CPD window factor.
    pub activations: DenseMatrix,
    /// `frequency × R` source signatures.
    pub signatures: DenseMatrix,
    pub events: EventReport,
}

/// Temporal DFT tensor, per-mode rank selection, non-negative Tucker, CPD of
/// the Tucker core and event scoring on the per-source window activations.
pub fn video_pipeline(video: &SpatioTemporalTensor, cfg: &VideoPipelineConfig) -> Result<VideoOutcome> {
    cfg.score.validate()?;
    if cfg.max_rank == 0 {
        return Err(Error::param("max_rank must be at least 1"));
    }
    let x = temporal_dft_tensor(video, &cfg.dft)?;
    let config = serde_json::to_value(cfg).map_err(|e| Error::Format(e.to_string()))?;
    let ranges: Vec<(usize, usize)> = (0..x.ndim())
        .map(|n| {
            let rows = x.shape()[n];
            let cols = x.len() / rows;
            (1, cfg.max_rank.min(rows).min(cols))
        })
        .collect();
    let (ranks, tucker_selection) = select_tensor_ranks(&x, &ranges, &cfg.selection_nmf, &cfg.perturb, &cfg.rule)?;
    let tucker = ntucker_solve(&x, &ranks, &cfg.ntf)?;

    let (cpd_rank, cpd_selection) = core_cpd_rank(&tucker, cfg)?;
    let cpd = ncpd_solve(&tucker.core, cpd_rank, &cfg.ntf)?;

    let activations = tucker.factors[1].matmul(&cpd.factors[1])?;
    let signatures = tucker.factors[0].matmul(&cpd.factors[0])?;
    let freqs: Vec<f64> = (0..x.shape()[0]).map(|i| i as f64 / cfg.dft.window as f64).collect();
    let clock = StepClock {
        hop: cfg.dft.hop as f64,
        span: (cfg.dft.window - 1) as f64,
    };
    let traces: Vec<Vec<f64>> = (0..cpd_rank).map(|s| activations.column(s)).collect();
    let (mut events, skipped_traces) = score_activations(&traces, &cfg.score, clock)?;
    let sources = summarize_sources(&signatures, &freqs, &cfg.labels);
    attach_labels(&mut events, &sources);
    Ok(VideoOutcome {
        tucker,
        cpd,
        tucker_selection,
        cpd_selection,
        activations,
        signatures,
        events: EventReport {
            events,
            k_used: cpd_rank,
            time_unit: "frames".into(),
            sources,
            skipped_traces,
            config,
        },
    })
}

/// CPD rank of the Tucker core: NMFk on the core unfolding along its largest
/// extent, falling back to rank 1 when the sweep is trivial or inconclusive.
fn core_cpd_rank(tucker: &TuckerModel, cfg: &VideoPipelineConfig) -> Result<(usize, Option<KSelectionReport>)> {
    let core = &tucker.core;
    let mode = (0..core.ndim()).fold(0, |b, n| if core.shape()[n] > core.shape()[b] { n } else { b });
    let unfolded = unfold(core, mode)?;
    let limit = unfolded.rows().min(unfolded.cols()).min(cfg.max_rank);
    if limit < 2 {
        return Ok((1, None));
    }
    let report = select_k(&unfolded, (1, limit), &cfg.selection_nmf, &cfg.perturb, &cfg.rule)?;
    let rank = report.selected_k.unwrap_or_else(|| {
        log::warn!("no admissible CPD rank for the Tucker core; using rank 1");
        1
    });
    Ok((rank, Some(report)))
}
