//! Salient timestep extraction: unfold a spatiotemporal tensor along time,
//! factorize it, fold the space factors back into volumes and pick, for each
//! latent time feature, the timestep where it peaks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nmf::{nmf_solve, Loss, NmfConfig};
use crate::selection::{select_k, KSelectionReport, PerturbConfig, SelectionRule};
use crate::tensor::{permute, relative_error, unfold, DenseMatrix, DenseTensor};

/// Columns whose peak-to-mean ratio falls below this are reported as flat.
pub const FLATNESS_RATIO: f64 = 1.5;

/// A `(t, x, y, z)` tensor with time on mode 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatioTemporalTensor {
    tensor: DenseTensor,
}

impl SpatioTemporalTensor {
    /// Accepts `(t, x, y)` or `(t, x, y, z)` with time on mode 0; 3-way input
    /// is promoted with `z = 1`.
    pub fn new(tensor: DenseTensor) -> Result<Self> {
        Self::with_time_mode(tensor, 0)
    }

    /// Like [`SpatioTemporalTensor::new`] but moves `time_mode` to the front first.
    pub fn with_time_mode(tensor: DenseTensor, time_mode: usize) -> Result<Self> {
        if !(3..=4).contains(&tensor.ndim()) {
            return Err(Error::dim(format!(
                "spatiotemporal data must be 3-way or 4-way, got order {}",
                tensor.ndim()
            )));
        }
        if time_mode >= tensor.ndim() {
            return Err(Error::dim(format!("time mode {time_mode} out of range")));
        }
        let tensor = if time_mode == 0 {
            tensor
        } else {
            let mut order = vec![time_mode];
            order.extend((0..tensor.ndim()).filter(|&m| m != time_mode));
            permute(&tensor, &order)?
        };
        let tensor = if tensor.ndim() == 3 {
            let mut shape = tensor.shape().to_vec();
            shape.push(1);
            tensor.reshape(shape)?
        } else {
            tensor
        };
        if tensor.shape()[0] < 2 {
            return Err(Error::dim("time extent must be at least 2"));
        }
        Ok(Self { tensor })
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn time_len(&self) -> usize {
        self.tensor.shape()[0]
    }

    /// `(x, y, z)`.
    pub fn space_shape(&self) -> [usize; 3] {
        let s = self.tensor.shape();
        [s[1], s[2], s[3]]
    }
}

/// Fixed latent dimension or NMFk selection over a range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentDim {
    Fixed(usize),
    Auto {
        k_range: (usize, usize),
        perturb: PerturbConfig,
        rule: SelectionRule,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalientReport {
    pub k: usize,
    /// `W`, `t × k`.
    pub time_features: DenseMatrix,
    /// Row `s` of `H` folded back to `(x, y, z)`.
    pub space_features: Vec<DenseTensor>,
    pub salient_timesteps: Vec<usize>,
    /// `‖A − WH‖_F / ‖A‖_F` for the time unfolding `A`.
    pub residual_norm: f64,
    /// Features whose time profile has peak/mean below [`FLATNESS_RATIO`].
    pub flat_features: Vec<usize>,
    pub selection: Option<KSelectionReport>,
}

impl SalientReport {
    /// Flattens the space features back into the `k × (x·y·z)` factor `H`.
    pub fn space_matrix(&self) -> Result<DenseMatrix> {
        let cols = self.space_features.first().map_or(0, DenseTensor::len);
        let data = self.space_features.iter().flat_map(|t| t.data().iter().copied()).collect();
        DenseMatrix::new(self.k, cols, data)
    }
}

/// Time-unfolding NMF with salient timestep selection. The loss is always KL.
pub fn ntd1_decompose(
    x: &SpatioTemporalTensor,
    k: &LatentDim,
    cfg: &NmfConfig,
) -> Result<SalientReport> {
    let a = unfold(&x.tensor, 0)?;
    let base = NmfConfig {
        loss: Loss::Kl,
        ..cfg.clone()
    };
    let (k, selection) = match k {
        LatentDim::Fixed(k) => (*k, None),
        LatentDim::Auto {
            k_range,
            perturb,
            rule,
        } => {
            let report = select_k(&a, *k_range, &base, perturb, rule)?;
            let k = report.selected_k.ok_or(Error::RankSelection { mode: 0 })?;
            (k, Some(report))
        }
    };
    let model = nmf_solve(&a, &NmfConfig { k, ..base })?;
    let residual_norm = relative_error(&a, &model.reconstruct())?;
    let [sx, sy, sz] = x.space_shape();
    let space_features = (0..k)
        .map(|s| DenseTensor::new(vec![sx, sy, sz], model.h.row(s).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let salient_timesteps = select_salient(&model.w)?;
    let flat_features = flat_columns(&model.w);
    for s in &flat_features {
        log::warn!("time feature {s} is nearly flat; its salient timestep is weakly determined");
    }
    Ok(SalientReport {
        k,
        time_features: model.w,
        space_features,
        salient_timesteps,
        residual_norm,
        flat_features,
        selection,
    })
}

/// Index of the largest entry of each column; ties go to the lowest index.
pub fn select_salient(w: &DenseMatrix) -> Result<Vec<usize>> {
    (0..w.cols())
        .map(|s| {
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for t in 0..w.rows() {
                let v = w.get(t, s);
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::domain(format!("W[{t}, {s}] = {v} is not a valid activation")));
                }
                if v > best_val {
                    best_val = v;
                    best = t;
                }
            }
            if best_val <= 0.0 {
                return Err(Error::DegenerateFactor(format!("time feature {s} is identically zero")));
            }
            Ok(best)
        })
        .collect()
}

fn flat_columns(w: &DenseMatrix) -> Vec<usize> {
    (0..w.cols())
        .filter(|&s| {
            let col = w.column(s);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let max = col.iter().copied().fold(0.0, f64::max);
            max < FLATNESS_RATIO * mean
        })
        .collect()
}
