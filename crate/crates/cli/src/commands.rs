use std::path::{Path, PathBuf};

use clap::ValueEnum;
use latentfire::io::{self, plot};
use latentfire::nmf::{nmf_solve, Loss, NmfConfig};
use latentfire::ntf::{
    cpd_reconstruct, ncpd_solve, ntt_solve, ntucker_solve, tt_reconstruct, tucker_reconstruct, NtfConfig,
};
use latentfire::pipeline::{audio_pipeline, video_pipeline, AudioPipelineConfig, BandLabel, ScoreConfig, VideoPipelineConfig};
use latentfire::salient::{ntd1_decompose, LatentDim, SpatioTemporalTensor};
use latentfire::selection::{select_k as nmfk, select_tensor_ranks, KSelectionReport, PerturbConfig, SelectionRule};
use latentfire::signal::{Channelization, TemporalDftConfig};
use latentfire::tensor::{relative_error, DenseMatrix, DenseTensor};
use serde::{Deserialize, Serialize};

use crate::output::{required, Common, Run};
use crate::CliResult;

#[derive(ValueEnum, Serialize, Deserialize, Clone, Copy, Debug, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LossArg {
    #[default]
    Kl,
    Frobenius,
}

impl From<LossArg> for Loss {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Kl => Loss::Kl,
            LossArg::Frobenius => Loss::Frobenius,
        }
    }
}

/// Solver flags shared by every command that runs NMF.
#[derive(clap::Args, Serialize, Deserialize, Clone, Debug)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    /// Relative objective change below which iteration stops.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Evaluate the objective every this many iterations.
    #[arg(long, default_value_t = 1)]
    pub objective_stride: usize,
    /// Random starts per factorization; the lowest final objective is kept.
    #[arg(long, default_value_t = 1)]
    #[serde(default = "one")]
    pub restarts: usize,
}

fn one() -> usize {
    1
}

impl SolverArgs {
    fn nmf(&self, k: usize, loss: Loss, seed: u64) -> NmfConfig {
        NmfConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            objective_stride: self.objective_stride,
            restarts: self.restarts,
            ..NmfConfig::new(k).with_loss(loss).with_seed(seed)
        }
    }

    fn ntf(&self, seed: u64) -> NtfConfig {
        NtfConfig::default()
            .with_max_iters(self.max_iters)
            .with_tol(self.tol)
            .with_seed(seed)
    }
}

/// NMFk flags shared by every command that selects a latent dimension.
#[derive(clap::Args, Serialize, Deserialize, Clone, Debug)]
pub struct SelectionArgs {
    #[arg(long, default_value_t = 10)]
    pub replicas: usize,
    /// Half-width of the multiplicative resampling noise.
    #[arg(long, default_value_t = 0.02)]
    pub epsilon: f64,
    /// Minimum silhouette a candidate k must reach.
    #[arg(long, default_value_t = 0.75)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0.2)]
    pub max_failed_fraction: f64,
}

impl SelectionArgs {
    fn perturb(&self, seed: u64) -> PerturbConfig {
        PerturbConfig {
            epsilon: self.epsilon,
            replicas: self.replicas,
            master_seed: seed,
        }
    }

    fn rule(&self) -> SelectionRule {
        SelectionRule {
            threshold: self.threshold,
            max_failed_fraction: self.max_failed_fraction,
        }
    }
}

/// Event scoring flags.
#[derive(clap::Args, Serialize, Deserialize, Clone, Debug)]
pub struct ScoreArgs {
    #[arg(long, default_value_t = 3.0)]
    pub threshold_sigma: f64,
    #[arg(long, default_value_t = 3)]
    pub min_run: usize,
    /// Tag sources whose signature peaks in a band, as NAME=LOW:HIGH (repeatable).
    #[arg(long = "label", value_parser = parse_label)]
    pub labels: Vec<BandLabel>,
}

impl ScoreArgs {
    fn config(&self) -> ScoreConfig {
        ScoreConfig {
            threshold_sigma: self.threshold_sigma,
            min_run: self.min_run,
        }
    }
}

fn parse_label(s: &str) -> Result<BandLabel, String> {
    let (name, range) = s.split_once('=').ok_or("expected NAME=LOW:HIGH")?;
    let (lo, hi) = range.split_once(':').ok_or("expected NAME=LOW:HIGH")?;
    let low: f64 = lo.parse().map_err(|e| format!("{lo:?}: {e}"))?;
    let high: f64 = hi.parse().map_err(|e| format!("{hi:?}: {e}"))?;
    if !(low <= high) {
        return Err(format!("band {low}..{high} is empty"));
    }
    Ok(BandLabel {
        label: name.to_string(),
        low,
        high,
    })
}

fn read_matrix(path: &Path) -> CliResult<DenseMatrix> {
    let t = io::read_tensor(path)?;
    Ok(t.to_matrix()?)
}

fn write_svg(path: PathBuf, svg: &str) -> CliResult<()> {
    io::write_text(&path, svg)?;
    Ok(())
}

fn write_selection<A>(run: &Run<A>, tag: &str, report: &KSelectionReport) -> CliResult<()>
where
    A: Serialize + serde::de::DeserializeOwned,
{
    io::write_text(&run.companion(&format!("{tag}.csv")), &io::selection_csv(report)?)?;
    write_svg(run.companion(&format!("{tag}.svg")), &plot::selection_curve(report))
}

fn take_common(c: &mut Common) -> Common {
    std::mem::take(c)
}

#[derive(clap::Args, Serialize, Deserialize, Clone, Debug)]
pub struct NmfArgs {
    /// 2-way FTEN tensor.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value_t)]
    pub loss: LossArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Serialize)]
struct NmfSummary {
    k: usize,
    loss: LossArg,
    iters_run: usize,
    converged: bool,
    objective: f64,
    relative_error: f64,
    objective_trace: Vec<f64>,
}

pub fn nmf(mut a: NmfArgs) -> CliResult<()> {
    let common = take_common(&mut a.common);
    let mut run = Run::prepare("nmf", a, common)?;
    let input = required(&run.args.input, "--input <INPUT>")?.clone();
    let k = *required(&run.args.k, "--k <K>")?;
    run.input(&input)?;
    let x = read_matrix(&input)?;
    let model = nmf_solve(&x, &run.args.solver.nmf(k, run.args.loss.into(), run.seed))?;
    io::write_factors(&run.companion("W.csv"), &model.w)?;
    io::write_factors(&run.companion("H.csv"), &model.h)?;
    write_svg(run.companion("objective.svg"), &plot::objective_trace("NMF objective", &model.objective_trace))?;
    write_svg(run.companion("W.svg"), &plot::columns_plot("Basis W", "row", &model.w))?;
    write_svg(run.companion("H.svg"), &plot::rows_plot("Activations H", "column", &model.h))?;
    let summary = NmfSummary {
        k,
        loss: run.args.loss,
        iters_run: model.iters_run,
        converged: model.converged,
        objective: *model.objective_trace.last().expect("trace holds the initial objective"),
        relative_error: relative_error(&x, &model.reconstruct())?,
        objective_trace: model.objective_trace,
    };
    run.finish(&summary)
}

#[derive(clap::Args, Serialize, Deserialize, Clone, Debug)]
pub struct SelectKArgs {
    /// 2-way FTEN tensor.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub k_min: usize,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long, value_enum, default_value_t)]
    pub loss: LossArg,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

pub fn select_k(mut a: SelectKArgs) -> CliResult<()> {
    let common = take_common(&mut a.common);
    let mut run = Run::prepare("select-k", a, common)?;
    let input = required(&run.args.input, "--input <INPUT>")?.clone();
    let k_max = *required(&run.args.k_max, "--k-max <K_MAX>")?;
    run.input(&input)?;
    let x = read_matrix(&input)?;
    let args = &run.args;
    let report = nmfk(
        &x,
        (args.k_min, k_max),
        &args.solver.nmf(1, args.loss.into(), run.seed),
        &args.selection.perturb(run.seed),
        &args.selection.rule(),
    )?;
    write_selection(&run, "selection", &report)?;
    run.finish(&report)
}

#[derive(clap::Args, Serialize, Deserialize, Clone, Debug)]
pub struct CpdArgs {
    /// 3- or 4-way FTEN tensor.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Serialize)]
struct TensorSummary {
    shape: Vec<usize>,
    ranks: Vec<usize>,
    iters_run: usize,
    converged: bool,
    relative_error: f64,
    objective_trace: Vec<f64>,
    selection: Option<Vec<KSelectionReport>>,
}

pub fn cpd(mut a: CpdArgs) -> CliResult<()> {
    let common = take_common(&mut a.common);
    let mut run = Run::prepare("cpd", a, common)?;
    let input = required(&run.args.input, "--input <INPUT>")?.clone();
    let rank = *required(&run.args.rank, "--rank <RANK>")?;
    run.input(&input)?;
    let x = io::read_tensor(&input)?;
    let model = ncpd_solve(&x, rank, &run.args.solver.ntf(run.seed))?;
    for (n, f) in model.factors.iter().enumerate() {
        io::write_factors(&run.companion(&format!("factor{n}.csv")), f)?;
    }
    write_svg(run.companion("objective.svg"), &plot::objective_trace("CPD objective", &model.objective_trace))?;
    let summary = TensorSummary {
        shape: x.shape().to_vec(),
        ranks: vec![rank],
        iters_run: model.iters_run,
        converged: model.converged,
        relative_error: relative_error(&x, &cpd_reconstruct(&model)?)?,
        objective_trace: model.objective_trace,
        selection: None,
    };
    run.finish(&summary)
}

#[derive(clap::Args, Serialize, Deserialize, Clone, Debug)]
pub struct TuckerArgs {
    /// 3- or 4-way FTEN tensor.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated multilinear ranks; selected per mode by NMFk when omitted.
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// Upper end of the per-mode rank sweep.
    #[arg(long, default_value_t = 5)]
    pub k_max: usize,
    /// Iteration cap of the NMF fits inside the rank sweep.
    #[arg(long, default_value_t = 400)]
    pub selection_max_iters: usize,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

fn mode_ranges(x: &DenseTensor, k_max: usize) -> Vec<(usize, usize)> {
    (0..x.ndim())
        .map(|n| {
            let rows = x.shape()[n];
            (1, k_max.min(rows).min(x.len() / rows))
        })
        .collect()
}

pub fn tucker(mut a: TuckerArgs) -> CliResult<()> {
    let common = take_common(&mut a.common);
    let mut run = Run::prepare("tucker", a, common)?;
    let input = required(&run.args.input, "--input <INPUT>")?.clone();
    run.input(&input)?;
    let x = io::read_tensor(&input)?;
    let args = &run.args;
    let (ranks, selection) = match &args.ranks {
        Some(r) => (r.clone(), None),
        None => {
            let cfg = SolverArgs {
                max_iters: args.selection_max_iters,
                ..args.solver.clone()
            };
            let (ranks, reports) = select_tensor_ranks(
                &x,
                &mode_ranges(&x, args.k_max),
                &cfg.nmf(1, Loss::Kl, run.seed),
                &args.selection.perturb(run.seed),
                &args.selection.rule(),
            )?;
            (ranks, Some(reports))
        }
    };
    let model = ntucker_solve(&x, &ranks, &args.solver.ntf(run.seed))?;
    io::write_tensor(&run.companion("core.ften"), &model.core)?;
    for (n, f) in model.factors.iter().enumerate() {
        io::write_factors(&run.companion(&format!("factor{n}.csv")), f)?;
    }
    if let Some(reports) = &selection {
        for (n, r) in reports.iter().enumerate() {
            write_selection(&run, &format!("selection{n}"), r)?;
        }
    }
    write_svg(run.companion("objective.svg"), &plot::objective_trace("Tucker objective", &model.objective_trace))?;
    let summary = TensorSummary {
        shape: x.shape().to_vec(),
        relative_error: relative_error(&x, &tucker_reconstruct(&model)?)?,
        ranks,
        iters_run: model.iters_run,
        converged: model.converged,
        objective_trace: model.objective_trace,
        selection,
    };
    run.finish(&summary)
}

#[derive(clap::Args, Serialize, Deserialize, Clone, Debug)]
pub struct TtArgs {
    /// 3- or 4-way FTEN tensor.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated interior ranks r_1..r_{d-1}.
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t)]
    pub loss: LossArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

#[derive(Serialize)]
struct TtSummary {
    shape: Vec<usize>,
    ranks: Vec<usize>,
    relative_error: f64,
    stage_objectives: Vec<f64>,
}

pub fn tt(mut a: TtArgs) -> CliResult<()> {
    let common = take_common(&mut a.common);
    let mut run = Run::prepare("tt", a, common)?;
    let input = required(&run.args.input, "--input <INPUT>")?.clone();
    let ranks = required(&run.args.ranks, "--ranks <RANKS>")?.clone();
    run.input(&input)?;
    let x = io::read_tensor(&input)?;
    let model = ntt_solve(&x, &ranks, &run.args.solver.nmf(1, run.args.loss.into(), run.seed))?;
    for (i, core) in model.cores.iter().enumerate() {
        io::write_tensor(&run.companion(&format!("core{i}.ften")), core)?;
    }
    let summary = TtSummary {
        shape: model.shape(),
        ranks: model.ranks(),
        relative_error: relative_error(&x, &tt_reconstruct(&model)?)?,
        stage_objectives: model.stage_traces.iter().filter_map(|t| t.last().copied()).collect(),
    };
    run.finish(&summary)
}

#[derive(clap::Args, Serialize, Deserialize, Clone, Debug)]
pub struct SalientArgs {
    /// 3- or 4-way FTEN tensor.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub time_mode: usize,
    /// Fixed latent dimension; selected by NMFk over --k-min..=--k-max when omitted.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub k_min: usize,
    #[arg(long, default_value_t = 6)]
    pub k_max: usize,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

impl SalientArgs {
    fn latent(&self, seed: u64) -> LatentDim {
        match self.k {
            Some(k) => LatentDim::Fixed(k),
            None => LatentDim::Auto {
                k_range: (self.k_min, self.k_max),
                perturb: self.selection.perturb(seed),
                rule: self.selection.rule(),
            },
        }
    }
}

#[derive(Serialize)]
struct SalientSummary<'a> {
    k: usize,
    salient_timesteps: &'a [usize],
    residual_norm: f64,
    flat_features: &'a [usize],
    selection: &'a Option<KSelectionReport>,
}

pub fn salient(mut a: SalientArgs) -> CliResult<()> {
    let common = take_common(&mut a.common);
    let mut run = Run::prepare("salient", a, common)?;
    let input = required(&run.args.input, "--input <INPUT>")?.clone();
    run.input(&input)?;
    let x = SpatioTemporalTensor::with_time_mode(io::read_tensor(&input)?, run.args.time_mode)?;
    let args = &run.args;
    let report = ntd1_decompose(&x, &args.latent(run.seed), &args.solver.nmf(1, Loss::Kl, run.seed))?;
    io::write_factors(&run.companion("time_features.csv"), &report.time_features)?;
    for (s, f) in report.space_features.iter().enumerate() {
        io::write_tensor(&run.companion(&format!("space{s}.ften")), f)?;
    }
    write_svg(
        run.companion("time_features.svg"),
        &plot::columns_plot("Time features", "timestep", &report.time_features),
    )?;
    if let Some(sel) = &report.selection {
        write_selection(&run, "selection", sel)?;
    }
    let summary = SalientSummary {
        k: report.k,
        salient_timesteps: &report.salient_timesteps,
        residual_norm: report.residual_norm,
        flat_features: &report.flat_features,
        selection: &report.selection,
    };
    run.finish(&summary)
}

#[derive(clap::Args, Serialize, Deserialize, Clone, Debug)]
pub struct AudioArgs {
    /// WAV file (PCM 16-bit or float 32-bit, mono or stereo).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 25.0)]
    pub window_ms: f64,
    #[arg(long, default_value_t = 10.0)]
    pub hop_ms: f64,
    #[arg(long, default_value_t = 64)]
    pub mel_bands: usize,
    /// Fixed number of sources; selected by NMFk over --k-min..=--k-max when omitted.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub k_min: usize,
    #[arg(long, default_value_t = 6)]
    pub k_max: usize,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub score: ScoreArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

pub fn audio_anomaly(mut a: AudioArgs) -> CliResult<()> {
    let common = take_common(&mut a.common);
    let mut run = Run::prepare("audio-anomaly", a, common)?;
    let input = required(&run.args.input, "--input <INPUT>")?.clone();
    run.input(&input)?;
    let clip = io::read_wav(&input)?;
    let args = &run.args;
    let k = match args.k {
        Some(k) => LatentDim::Fixed(k),
        None => LatentDim::Auto {
            k_range: (args.k_min, args.k_max),
            perturb: args.selection.perturb(run.seed),
            rule: args.selection.rule(),
        },
    };
    let cfg = AudioPipelineConfig {
        window_ms: args.window_ms,
        hop_ms: args.hop_ms,
        mel_bands: args.mel_bands,
        k,
        nmf: args.solver.nmf(1, Loss::Kl, run.seed),
        score: args.score.config(),
        labels: args.score.labels.clone(),
    };
    let out = audio_pipeline(&clip, &cfg)?;
    if let Some(model) = &out.model {
        io::write_factors(&run.companion("W.csv"), &model.w)?;
        io::write_factors(&run.companion("H.csv"), &model.h)?;
        write_svg(run.companion("W.svg"), &plot::columns_plot("Spectral signatures W", "mel band", &model.w))?;
        write_svg(run.companion("H.svg"), &plot::rows_plot("Activations H", "frame", &model.h))?;
    }
    if let Some(sel) = &out.selection {
        write_selection(&run, "selection", sel)?;
    }
    write_svg(run.companion("events.svg"), &plot::event_timeline(&out.events, clip.duration()))?;
    run.finish(&out.events)
}

#[derive(clap::Args, Serialize, Deserialize, Clone, Debug)]
pub struct VideoArgs {
    /// 3- or 4-way FTEN tensor (time, x, y[, z]).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub time_mode: usize,
    /// Frames per temporal DFT window.
    #[arg(long, default_value_t = 16)]
    pub window: usize,
    #[arg(long, default_value_t = 4)]
    pub hop: usize,
    /// Frequency bins kept from DC upward (default: all).
    #[arg(long)]
    pub n_freq: Option<usize>,
    /// Channel grouping: full, pixel or block:N.
    #[arg(long, default_value = "block:4", value_parser = parse_channels)]
    pub channels: Channelization,
    /// Upper end of the Tucker and CPD rank sweeps.
    #[arg(long, default_value_t = 4)]
    pub max_rank: usize,
    #[arg(long, default_value_t = 400)]
    pub selection_max_iters: usize,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub score: ScoreArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub common: Common,
}

fn parse_channels(s: &str) -> Result<Channelization, String> {
    match s {
        "full" => Ok(Channelization::FullFrame),
        "pixel" => Ok(Channelization::PerPixel),
        _ => {
            let size = s
                .strip_prefix("block:")
                .ok_or_else(|| format!("expected full, pixel or block:N, got {s:?}"))?;
            let size: usize = size.parse().map_err(|e| format!("{size:?}: {e}"))?;
            if size == 0 {
                return Err("block size must be positive".into());
            }
            Ok(Channelization::Blocks { size })
        }
    }
}

pub fn video_anomaly(mut a: VideoArgs) -> CliResult<()> {
    let common = take_common(&mut a.common);
    let mut run = Run::prepare("video-anomaly", a, common)?;
    let input = required(&run.args.input, "--input <INPUT>")?.clone();
    run.input(&input)?;
    let video = SpatioTemporalTensor::with_time_mode(io::read_tensor(&input)?, run.args.time_mode)?;
    let args = &run.args;
    let selection_solver = SolverArgs {
        max_iters: args.selection_max_iters,
        ..args.solver.clone()
    };
    let cfg = VideoPipelineConfig {
        dft: TemporalDftConfig {
            window: args.window,
            hop: args.hop,
            n_freq: args.n_freq,
            channels: args.channels,
        },
        max_rank: args.max_rank,
        perturb: args.selection.perturb(run.seed),
        rule: args.selection.rule(),
        selection_nmf: selection_solver.nmf(1, Loss::Kl, run.seed),
        ntf: args.solver.ntf(run.seed),
        score: args.score.config(),
        labels: args.score.labels.clone(),
    };
    let out = video_pipeline(&video, &cfg)?;
    io::write_tensor(&run.companion("tucker_core.ften"), &out.tucker.core)?;
    io::write_factors(&run.companion("activations.csv"), &out.activations)?;
    io::write_factors(&run.companion("signatures.csv"), &out.signatures)?;
    write_svg(run.companion("activations.svg"), &plot::columns_plot("Source activations", "window", &out.activations))?;
    write_svg(
        run.companion("signatures.svg"),
        &plot::columns_plot("Frequency signatures", "frequency bin", &out.signatures),
    )?;
    write_svg(
        run.companion("events.svg"),
        &plot::event_timeline(&out.events, video.time_len() as f64),
    )?;
    run.finish(&out.events)
}
