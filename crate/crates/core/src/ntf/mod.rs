//! Non-negative tensor factorizations: CPD and Tucker fitted by
//! multiplicative-update ALS under the Frobenius objective, and tensor-train
//! built by sequential NMF of successive unfoldings.

mod cpd;
mod tt;
mod tucker;

pub use cpd::{cpd_reconstruct, ncpd_solve, ncpd_solve_from, CpdModel};
pub use tt::{ntt_solve, tt_reconstruct, TtModel};
pub use tucker::{ntucker_solve, ntucker_solve_from, tucker_reconstruct, TuckerModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nmf::EPS;
use crate::tensor::DenseTensor;

/// Stopping and seeding parameters shared by the tensor solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtfConfig {
    pub max_iters: usize,
    /// Relative objective change below which the solver stops.
    pub tol: f64,
    pub seed: u64,
}

impl Default for NtfConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl NtfConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::param("max_iters must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

fn check_input(x: &DenseTensor, orders: std::ops::RangeInclusive<usize>) -> Result<()> {
    if !orders.contains(&x.ndim()) {
        return Err(Error::dim(format!(
            "expected tensor order in {}..={}, got {}",
            orders.start(),
            orders.end(),
            x.ndim()
        )));
    }
    x.check_non_negative()?;
    let norm = x.frobenius_norm();
    if !(norm > 0.0) {
        return Err(Error::domain("input tensor is identically zero"));
    }
    Ok(())
}

/// Relative-change stopping test shared by every MU loop.
fn has_converged(prev: f64, obj: f64, tol: f64) -> bool {
    (prev - obj).abs() / prev.max(EPS) < tol
}

/// `base ← max(base ⊙ num ⊘ (den + eps), eps)`.
fn mu_apply(base: &mut [f64], num: &[f64], den: &[f64]) {
    for ((b, &n), &d) in base.iter_mut().zip(num).zip(den) {
        *b = (*b * n / (d + EPS)).max(EPS);
    }
}
