use serde::{Deserialize, Serialize};

use super::check_input;
use crate::error::{Error, Result};
use crate::nmf::{nmf_solve, NmfConfig};
use crate::seed;
use crate::tensor::{unfold, DenseMatrix, DenseTensor};

/// Tensor-train: cores `G_i` of shape `(r_{i-1}, n_i, r_i)` with `r_0 = r_d = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtModel {
    pub cores: Vec<DenseTensor>,
    /// Objective trace of the NMF that produced each split.
    pub stage_traces: Vec<Vec<f64>>,
}

impl TtModel {
    pub fn new(cores: Vec<DenseTensor>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::param("tensor train needs at least one core"));
        }
        let mut prev = 1;
        for (i, c) in cores.iter().enumerate() {
            if c.ndim() != 3 {
                return Err(Error::dim(format!("core {i} must be 3-way, got order {}", c.ndim())));
            }
            if c.shape()[0] != prev {
                return Err(Error::dim(format!(
                    "core {i} left rank {} does not match previous right rank {prev}",
                    c.shape()[0]
                )));
            }
            prev = c.shape()[2];
        }
        if prev != 1 {
            return Err(Error::dim("last core must have right rank 1"));
        }
        Ok(Self {
            cores,
            stage_traces: Vec::new(),
        })
    }

    pub fn shape(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape()[1]).collect()
    }

    /// Interior ranks `(r_1, .., r_{d-1})`.
    pub fn ranks(&self) -> Vec<usize> {
        self.cores[..self.cores.len() - 1]
            .iter()
            .map(|c| c.shape()[2])
            .collect()
    }
}

/// Contracts the train over its rank indices.
pub fn tt_reconstruct(m: &TtModel) -> Result<DenseTensor> {
    let first = &m.cores[0];
    let mut acc = DenseMatrix::new(first.shape()[1], first.shape()[2], first.data().to_vec())?;
    for core in &m.cores[1..] {
        let (r_left, n, r_right) = (core.shape()[0], core.shape()[1], core.shape()[2]);
        let right = DenseMatrix::new(r_left, n * r_right, core.data().to_vec())?;
        let prod = acc.matmul(&right)?;
        acc = DenseMatrix::new(prod.rows() * n, r_right, prod.into_data())?;
    }
    DenseTensor::new(m.shape(), acc.into_data())
}

/// Non-negative tensor-train by sequential NMF: the first unfolding is
/// factorized at rank `r_1`, its activations are reshaped and factorized at
/// `r_2`, and so on.
pub fn ntt_solve(x: &DenseTensor, ranks: &[usize], cfg: &NmfConfig) -> Result<TtModel> {
    check_input(x, 3..=4)?;
    let d = x.ndim();
    if ranks.len() != d - 1 {
        return Err(Error::dim(format!(
            "order-{d} tensor needs {} TT ranks, got {}",
            d - 1,
            ranks.len()
        )));
    }
    let shape = x.shape();
    let mut prev = 1;
    for (i, &r) in ranks.iter().enumerate() {
        let rows = prev * shape[i];
        let cols: usize = shape[i + 1..].iter().product();
        if r == 0 || r > rows.min(cols) {
            return Err(Error::dim(format!(
                "TT rank r_{} = {r} is infeasible; must lie in 1..={}",
                i + 1,
                rows.min(cols)
            )));
        }
        prev = r;
    }

    let mut current = unfold(x, 0)?;
    let mut cores = Vec::with_capacity(d);
    let mut traces = Vec::with_capacity(d - 1);
    let mut r_prev = 1;
    for (i, &r) in ranks.iter().enumerate() {
        let stage_cfg = NmfConfig {
            k: r,
            seed: seed::derive(cfg.seed, &[i as u64]),
            ..cfg.clone()
        };
        let model = nmf_solve(&current, &stage_cfg)?;
        cores.push(DenseTensor::new(vec![r_prev, shape[i], r], model.w.into_data())?);
        traces.push(model.objective_trace);
        let rest: usize = shape[i + 2..].iter().product();
        current = DenseMatrix::new(r * shape[i + 1], rest, model.h.into_data())?;
        r_prev = r;
    }
    cores.push(DenseTensor::new(vec![r_prev, shape[d - 1], 1], current.into_data())?);
    let mut model = TtModel::new(cores)?;
    model.stage_traces = traces;
    Ok(model)
}
