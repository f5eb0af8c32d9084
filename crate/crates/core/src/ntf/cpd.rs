use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_input, has_converged, mu_apply, NtfConfig};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{khatri_rao, squared_distance, unfold, DenseMatrix, DenseTensor};

/// Rank-`K` canonical polyadic model: one `extent × K` factor per mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpdModel {
    pub factors: Vec<DenseMatrix>,
    pub objective_trace: Vec<f64>,
    pub iters_run: usize,
    pub converged: bool,
}

impl CpdModel {
    pub fn new(factors: Vec<DenseMatrix>) -> Result<Self> {
        let rank = factors
            .first()
            .ok_or_else(|| Error::param("CPD model needs at least one factor"))?
            .cols();
        if factors.iter().any(|f| f.cols() != rank) {
            return Err(Error::dim("CPD factors must share a column count"));
        }
        Ok(Self {
            factors,
            objective_trace: Vec::new(),
            iters_run: 0,
            converged: false,
        })
    }

    pub fn rank(&self) -> usize {
        self.factors[0].cols()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(DenseMatrix::rows).collect()
    }
}

/// Dense sum of rank-one outer products.
pub fn cpd_reconstruct(m: &CpdModel) -> Result<DenseTensor> {
    let shape = m.shape();
    // X_(0) = A_0 · (A_1 ⊙ A_2 ⊙ ...)ᵀ
    let kr = khatri_rao_except(&m.factors, 0)?;
    let flat = m.factors[0].matmul_t(&kr)?;
    DenseTensor::new(shape, flat.into_data())
}

/// Khatri-Rao product of every factor but `skip`, in increasing mode order,
/// which matches the column order of the mode-`skip` unfolding.
fn khatri_rao_except(factors: &[DenseMatrix], skip: usize) -> Result<DenseMatrix> {
    let mut it = factors
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != skip)
        .map(|(_, f)| f);
    let first = match it.next() {
        Some(f) => f.clone(),
        None => return Ok(DenseMatrix::filled(1, factors[skip].cols(), 1.0)),
    };
    it.try_fold(first, |acc, f| khatri_rao(&acc, f))
}

/// Gram matrix of the Khatri-Rao product: Hadamard product of `AᵀA` over
/// every factor but `skip`.
fn gram_except(factors: &[DenseMatrix], skip: usize) -> Result<DenseMatrix> {
    let k = factors[skip].cols();
    let mut g = DenseMatrix::filled(k, k, 1.0);
    for (m, f) in factors.iter().enumerate() {
        if m == skip {
            continue;
        }
        let ff = f.t_matmul(f)?;
        for (a, b) in g.data_mut().iter_mut().zip(ff.data()) {
            *a *= b;
        }
    }
    Ok(g)
}

/// Non-negative CPD by multiplicative-update ALS.
pub fn ncpd_solve(x: &DenseTensor, rank: usize, cfg: &NtfConfig) -> Result<CpdModel> {
    if rank == 0 {
        return Err(Error::param("CPD rank must be at least 1"));
    }
    check_input(x, 3..=4)?;
    let mean = x.data().iter().sum::<f64>() / x.len() as f64;
    let scale = (mean / rank as f64).powf(1.0 / x.ndim() as f64);
    let mut rng = seed::rng(cfg.seed);
    let factors = x
        .shape()
        .iter()
        .map(|&extent| {
            DenseMatrix::from_fn(extent, rank, |_, _| (rng.gen::<f64>() * scale).max(crate::nmf::EPS))
        })
        .collect();
    ncpd_solve_from(x, CpdModel::new(factors)?, cfg)
}

/// Continues the MU-ALS iteration from an explicit starting model.
pub fn ncpd_solve_from(x: &DenseTensor, start: CpdModel, cfg: &NtfConfig) -> Result<CpdModel> {
    cfg.validate()?;
    check_input(x, 3..=4)?;
    if start.shape() != x.shape() {
        return Err(Error::dim(format!(
            "model shape {:?} does not match data {:?}",
            start.shape(),
            x.shape()
        )));
    }
    let unfoldings: Vec<DenseMatrix> = (0..x.ndim()).map(|n| unfold(x, n)).collect::<Result<_>>()?;
    let mut factors = start.factors;
    let objective = |factors: &[DenseMatrix]| -> Result<f64> {
        let recon = cpd_reconstruct(&CpdModel::new(factors.to_vec())?)?;
        squared_distance(x, &recon)
    };
    let mut trace = vec![objective(&factors)?];
    let mut converged = false;
    let mut iters = 0;
    while iters < cfg.max_iters {
        for n in 0..factors.len() {
            let kr = khatri_rao_except(&factors, n)?;
            let num = unfoldings[n].matmul(&kr)?;
            let den = factors[n].matmul(&gram_except(&factors, n)?)?;
            mu_apply(factors[n].data_mut(), num.data(), den.data());
        }
        iters += 1;
        let obj = objective(&factors)?;
        let prev = *trace.last().expect("trace is seeded");
        trace.push(obj);
        if has_converged(prev, obj, cfg.tol) {
            converged = true;
            break;
        }
    }
    Ok(CpdModel {
        factors,
        objective_trace: trace,
        iters_run: iters,
        converged,
    })
}
