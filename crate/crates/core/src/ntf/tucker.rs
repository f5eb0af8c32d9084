use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_input, has_converged, mu_apply, NtfConfig};
use crate::error::{Error, Result};
use crate::nmf::EPS;
use crate::seed;
use crate::tensor::{mode_n_product, squared_distance, unfold, DenseMatrix, DenseTensor};

/// Core tensor with one factor matrix per mode; factor `n` is
/// `extent_n × rank_n` and the core has extents `(rank_0, rank_1, ...)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuckerModel {
    pub core: DenseTensor,
    pub factors: Vec<DenseMatrix>,
    pub objective_trace: Vec<f64>,
    pub iters_run: usize,
    pub converged: bool,
}

impl TuckerModel {
    pub fn new(core: DenseTensor, factors: Vec<DenseMatrix>) -> Result<Self> {
        if core.ndim() != factors.len() {
            return Err(Error::dim(format!(
                "order-{} core with {} factors",
                core.ndim(),
                factors.len()
            )));
        }
        for (n, f) in factors.iter().enumerate() {
            if f.cols() != core.shape()[n] {
                return Err(Error::dim(format!(
                    "factor {n} has {} columns but core extent is {}",
                    f.cols(),
                    core.shape()[n]
                )));
            }
        }
        Ok(Self {
            core,
            factors,
            objective_trace: Vec::new(),
            iters_run: 0,
            converged: false,
        })
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.core.shape().to_vec()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(DenseMatrix::rows).collect()
    }
}

/// `G ×_0 A_0 ×_1 A_1 ...`
pub fn tucker_reconstruct(m: &TuckerModel) -> Result<DenseTensor> {
    multiply_all(&m.core, &m.factors, None)
}

/// Multiplies `t` along every mode except `skip` by the matching matrix.
fn multiply_all(t: &DenseTensor, mats: &[DenseMatrix], skip: Option<usize>) -> Result<DenseTensor> {
    let mut out = t.clone();
    for (n, m) in mats.iter().enumerate() {
        if Some(n) != skip {
            out = mode_n_product(&out, m, n)?;
        }
    }
    Ok(out)
}

/// Non-negative Tucker decomposition with per-mode ranks.
pub fn ntucker_solve(x: &DenseTensor, ranks: &[usize], cfg: &NtfConfig) -> Result<TuckerModel> {
    check_input(x, 2..=4)?;
    check_ranks(x, ranks)?;
    let mean = x.data().iter().sum::<f64>() / x.len() as f64;
    let core_size: usize = ranks.iter().product();
    let scale = (mean / core_size as f64).powf(1.0 / (x.ndim() + 1) as f64);
    let mut rng = seed::rng(cfg.seed);
    let factors: Vec<DenseMatrix> = x
        .shape()
        .iter()
        .zip(ranks)
        .map(|(&extent, &r)| DenseMatrix::from_fn(extent, r, |_, _| (rng.gen::<f64>() * scale).max(EPS)))
        .collect();
    let core = DenseTensor::from_fn(ranks, |_| (rng.gen::<f64>() * scale).max(EPS))?;
    ntucker_solve_from(x, TuckerModel::new(core, factors)?, cfg)
}

fn check_ranks(x: &DenseTensor, ranks: &[usize]) -> Result<()> {
    if ranks.len() != x.ndim() {
        return Err(Error::dim(format!(
            "{} ranks for an order-{} tensor",
            ranks.len(),
            x.ndim()
        )));
    }
    for (n, (&r, &e)) in ranks.iter().zip(x.shape()).enumerate() {
        if r == 0 || r > e {
            return Err(Error::dim(format!("rank {r} on mode {n} must lie in 1..={e}")));
        }
    }
    Ok(())
}

/// Alternating multiplicative updates of each factor, then of the core.
pub fn ntucker_solve_from(x: &DenseTensor, start: TuckerModel, cfg: &NtfConfig) -> Result<TuckerModel> {
    cfg.validate()?;
    check_input(x, 2..=4)?;
    if start.shape() != x.shape() {
        return Err(Error::dim(format!(
            "model shape {:?} does not match data {:?}",
            start.shape(),
            x.shape()
        )));
    }
    check_ranks(x, &start.ranks())?;
    let unfoldings: Vec<DenseMatrix> = (0..x.ndim()).map(|n| unfold(x, n)).collect::<Result<_>>()?;
    let TuckerModel {
        mut core,
        mut factors,
        ..
    } = start;

    let objective = |core: &DenseTensor, factors: &[DenseMatrix]| -> Result<f64> {
        squared_distance(x, &multiply_all(core, factors, None)?)
    };
    let mut trace = vec![objective(&core, &factors)?];
    let mut converged = false;
    let mut iters = 0;
    while iters < cfg.max_iters {
        for n in 0..factors.len() {
            let partial = unfold(&multiply_all(&core, &factors, Some(n))?, n)?;
            let num = unfoldings[n].matmul_t(&partial)?;
            let den = factors[n].matmul(&partial.matmul_t(&partial)?)?;
            mu_apply(factors[n].data_mut(), num.data(), den.data());
        }

        let transposed: Vec<DenseMatrix> = factors.iter().map(DenseMatrix::transpose).collect();
        let grams: Vec<DenseMatrix> = factors.iter().map(|f| f.t_matmul(f)).collect::<Result<_>>()?;
        let num = multiply_all(x, &transposed, None)?;
        let den = multiply_all(&core, &grams, None)?;
        let mut core_data = core.into_data();
        mu_apply(&mut core_data, num.data(), den.data());
        core = DenseTensor::new(num.shape().to_vec(), core_data)?;

        iters += 1;
        let obj = objective(&core, &factors)?;
        let prev = *trace.last().expect("trace is seeded");
        trace.push(obj);
        if has_converged(prev, obj, cfg.tol) {
            converged = true;
            break;
        }
    }
    Ok(TuckerModel {
        core,
        factors,
        objective_trace: trace,
        iters_run: iters,
        converged,
    })
}
