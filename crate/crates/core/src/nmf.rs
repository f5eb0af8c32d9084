//! Non-negative matrix factorization `X ≈ W·H` by Lee-Seung multiplicative
//! updates, under the generalized KL divergence (default) or the squared
//! Frobenius distance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{kl_divergence_slice, squared_distance_slice, DenseMatrix};

/// Denominator guard and factor floor.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    #[default]
    Kl,
    Frobenius,
}

impl Loss {
    /// Objective value of `x` against the reconstruction `wh`.
    pub fn objective(self, x: &[f64], wh: &[f64]) -> f64 {
        match self {
            Loss::Kl => kl_divergence_slice(x, wh),
            Loss::Frobenius => squared_distance_slice(x, wh),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// Uniform(0,1) draws scaled by `sqrt(mean(x)/k)`.
    #[default]
    UniformScaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmfConfig {
    pub k: usize,
    pub loss: Loss,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub init: Init,
    /// Evaluate the objective every `objective_stride` iterations (and on the last).
    pub objective_stride: usize,
    /// Independent random starts; the fit with the lowest final objective is kept.
    #[serde(default = "one")]
    pub restarts: usize,
}

fn one() -> usize {
    1
}

impl NmfConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            loss: Loss::Kl,
            max_iters: 1000,
            tol: 1e-6,
            seed: 0,
            init: Init::UniformScaled,
            objective_stride: 1,
            restarts: 1,
        }
    }

    pub fn with_loss(mut self, loss: Loss) -> Self {
        self.loss = loss;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(Error::param("restarts must be at least 1"));
        }
        if self.objective_stride == 0 {
            return Err(Error::param("objective_stride must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmfModel {
    /// Basis, `M×k`.
    pub w: DenseMatrix,
    /// Activations, `k×N`.
    pub h: DenseMatrix,
    /// Objective at initialization followed by every evaluated iteration.
    pub objective_trace: Vec<f64>,
    pub iters_run: usize,
    pub converged: bool,
}

impl NmfModel {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::INFINITY)
    }

    pub fn from_factors(w: DenseMatrix, h: DenseMatrix) -> Result<Self> {
        if w.cols() != h.rows() {
            return Err(Error::dim(format!(
                "W has {} columns but H has {} rows",
                w.cols(),
                h.rows()
            )));
        }
        Ok(Self {
            w,
            h,
            objective_trace: Vec::new(),
            iters_run: 0,
            converged: false,
        })
    }

    pub fn k(&self) -> usize {
        self.w.cols()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.w.matmul(&self.h).expect("factor shapes are consistent")
    }

    pub fn objective(&self, x: &DenseMatrix, loss: Loss) -> Result<f64> {
        check_shapes(x, self)?;
        Ok(loss.objective(x.data(), self.reconstruct().data()))
    }
}

fn check_shapes(x: &DenseMatrix, model: &NmfModel) -> Result<()> {
    if model.w.rows() != x.rows() || model.h.cols() != x.cols() || model.w.cols() != model.h.rows()
    {
        return Err(Error::dim(format!(
            "factors {}x{} · {}x{} do not match data {}x{}",
            model.w.rows(),
            model.w.cols(),
            model.h.rows(),
            model.h.cols(),
            x.rows(),
            x.cols()
        )));
    }
    Ok(())
}

/// Seeded initialization of `(W, H)`.
pub fn nmf_init(x: &DenseMatrix, cfg: &NmfConfig) -> Result<NmfModel> {
    cfg.validate()?;
    x.check_non_negative()?;
    let (m, n) = x.shape();
    if cfg.k > m.min(n) {
        return Err(Error::dim(format!(
            "k = {} exceeds min(M, N) = {}",
            cfg.k,
            m.min(n)
        )));
    }
    let mean = x.mean();
    if !(mean > 0.0) {
        return Err(Error::domain("input has zero mean; nothing to factorize"));
    }
    let scale = (mean / cfg.k as f64).sqrt();
    let mut rng = seed::rng(cfg.seed);
    let mut draw = || (rng.gen::<f64>() * scale).max(EPS);
    let w = DenseMatrix::from_fn(m, cfg.k, |_, _| draw());
    let h = DenseMatrix::from_fn(cfg.k, n, |_, _| draw());
    NmfModel::from_factors(w, h)
}

/// One KL multiplicative update of H then W.
pub fn mu_step_kl(x: &DenseMatrix, model: &NmfModel) -> Result<NmfModel> {
    check_shapes(x, model)?;
    let mut ws = Workspace::new(x.rows(), x.cols(), model.k());
    let (mut w, mut h) = (model.w.clone(), model.h.clone());
    ws.kl_step(x, &mut w, &mut h);
    Ok(NmfModel {
        w,
        h,
        ..model.clone()
    })
}

/// One Frobenius multiplicative update of H then W.
pub fn mu_step_frobenius(x: &DenseMatrix, model: &NmfModel) -> Result<NmfModel> {
    check_shapes(x, model)?;
    let mut ws = Workspace::new(x.rows(), x.cols(), model.k());
    let (mut w, mut h) = (model.w.clone(), model.h.clone());
    ws.frobenius_step(x, &mut w, &mut h);
    Ok(NmfModel {
        w,
        h,
        ..model.clone()
    })
}

/// Initializes and iterates multiplicative updates until the relative
/// objective change drops below `tol` or `max_iters` is reached.
///
/// With `restarts > 1`, start `r ≥ 1` draws its initialization from a seed derived from
/// `(seed, r)`;
/// the earliest start reaching the lowest final objective wins.
pub fn nmf_solve(x: &DenseMatrix, cfg: &NmfConfig) -> Result<NmfModel> {
    let mut best = nmf_solve_from(x, nmf_init(x, cfg)?, cfg)?;
    for r in 1..cfg.restarts {
        let start_cfg = NmfConfig {
            seed: seed::derive(cfg.seed, &[seed::TAG_RESTART, r as u64]),
            ..cfg.clone()
        };
        let model = nmf_solve_from(x, nmf_init(x, &start_cfg)?, cfg)?;
        if model.final_objective() < best.final_objective() {
            best = model;
        }
    }
    Ok(best)
}

/// Continues multiplicative updates from an explicit starting point.
pub fn nmf_solve_from(x: &DenseMatrix, start: NmfModel, cfg: &NmfConfig) -> Result<NmfModel> {
    cfg.validate()?;
    check_shapes(x, &start)?;
    x.check_non_negative()?;
    let NmfModel { mut w, mut h, .. } = start;
    let mut ws = Workspace::new(x.rows(), x.cols(), w.cols());
    let mut trace = Vec::with_capacity(cfg.max_iters / cfg.objective_stride + 2);
    ws.reconstruct(&w, &h);
    trace.push(cfg.loss.objective(x.data(), &ws.wh));

    let mut converged = false;
    let mut iters = 0;
    while iters < cfg.max_iters {
        match cfg.loss {
            Loss::Kl => ws.kl_step(x, &mut w, &mut h),
            Loss::Frobenius => ws.frobenius_step(x, &mut w, &mut h),
        }
        iters += 1;
        if iters % cfg.objective_stride == 0 || iters == cfg.max_iters {
            ws.reconstruct(&w, &h);
            let obj = cfg.loss.objective(x.data(), &ws.wh);
            let prev = *trace.last().expect("trace is seeded");
            trace.push(obj);
            if (prev - obj).abs() / prev.max(EPS) < cfg.tol {
                converged = true;
                break;
            }
        }
    }
    Ok(NmfModel {
        w,
        h,
        objective_trace: trace,
        iters_run: iters,
        converged,
    })
}

/// Scratch buffers reused across iterations.
struct Workspace {
    m: usize,
    n: usize,
    k: usize,
    wh: Vec<f64>,
    ratio: Vec<f64>,
    num_h: Vec<f64>,
    num_w: Vec<f64>,
    small: Vec<f64>,
}

impl Workspace {
    fn new(m: usize, n: usize, k: usize) -> Self {
        Self {
            m,
            n,
            k,
            wh: vec![0.0; m * n],
            ratio: vec![0.0; m * n],
            num_h: vec![0.0; k * n],
            num_w: vec![0.0; m * k],
            small: vec![0.0; k * k],
        }
    }

    fn reconstruct(&mut self, w: &DenseMatrix, h: &DenseMatrix) {
        gemm(&mut self.wh, w.data(), h.data(), self.m, self.k, self.n);
    }

    fn fill_ratio(&mut self, x: &DenseMatrix) {
        for ((r, &xv), &y) in self.ratio.iter_mut().zip(x.data()).zip(&self.wh) {
            *r = xv / (y + EPS);
        }
    }

    fn kl_step(&mut self, x: &DenseMatrix, w: &mut DenseMatrix, h: &mut DenseMatrix) {
        let (m, n, k) = (self.m, self.n, self.k);

        // H ← H ⊙ (Wᵀ(X ⊘ WH)) ⊘ (Wᵀ1)
        self.reconstruct(w, h);
        self.fill_ratio(x);
        gemm_tn(&mut self.num_h, w.data(), &self.ratio, m, k, n);
        let mut col_sums = vec![0.0; k];
        for row in w.data().chunks_exact(k) {
            for (s, v) in col_sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        for (j, hrow) in h.data_mut().chunks_exact_mut(n).enumerate() {
            let denom = col_sums[j] + EPS;
            for (hv, &num) in hrow.iter_mut().zip(&self.num_h[j * n..(j + 1) * n]) {
                *hv = (*hv * num / denom).max(EPS);
            }
        }

        // W ← W ⊙ ((X ⊘ WH)Hᵀ) ⊘ (1Hᵀ)
        self.reconstruct(w, h);
        self.fill_ratio(x);
        gemm_nt(&mut self.num_w, &self.ratio, h.data(), m, n, k);
        let row_sums: Vec<f64> = h.data().chunks_exact(n).map(|r| r.iter().sum()).collect();
        for (wrow, numrow) in w.data_mut().chunks_exact_mut(k).zip(self.num_w.chunks_exact(k)) {
            for ((wv, &num), &s) in wrow.iter_mut().zip(numrow).zip(&row_sums) {
                *wv = (*wv * num / (s + EPS)).max(EPS);
            }
        }
    }

    fn frobenius_step(&mut self, x: &DenseMatrix, w: &mut DenseMatrix, h: &mut DenseMatrix) {
        let (m, n, k) = (self.m, self.n, self.k);

        // H ← H ⊙ (WᵀX) ⊘ (WᵀW H)
        gemm_tn(&mut self.num_h, w.data(), x.data(), m, k, n);
        gemm_tn(&mut self.small, w.data(), w.data(), m, k, k);
        let mut denom = vec![0.0; k * n];
        gemm(&mut denom, &self.small, h.data(), k, k, n);
        for ((hv, &num), &d) in h.data_mut().iter_mut().zip(&self.num_h).zip(&denom) {
            *hv = (*hv * num / (d + EPS)).max(EPS);
        }

        // W ← W ⊙ (XHᵀ) ⊘ (W HHᵀ)
        gemm_nt(&mut self.num_w, x.data(), h.data(), m, n, k);
        gemm_nt(&mut self.small, h.data(), h.data(), k, n, k);
        let mut denom = vec![0.0; m * k];
        gemm(&mut denom, w.data(), &self.small, m, k, k);
        for ((wv, &num), &d) in w.data_mut().iter_mut().zip(&self.num_w).zip(&denom) {
            *wv = (*wv * num / (d + EPS)).max(EPS);
        }
    }
}

/// `out (m×n) = a (m×k) · b (k×n)`.
pub(crate) fn gemm(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    out.fill(0.0);
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            for (o, &bv) in orow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
}

/// `out (k×n) = aᵀ · b` with `a (m×k)`, `b (m×n)`.
pub(crate) fn gemm_tn(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    out.fill(0.0);
    for r in 0..m {
        let brow = &b[r * n..(r + 1) * n];
        for (i, &av) in a[r * k..(r + 1) * k].iter().enumerate() {
            for (o, &bv) in out[i * n..(i + 1) * n].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out (m×k) = a · bᵀ` with `a (m×n)`, `b (k×n)`.
pub(crate) fn gemm_nt(out: &mut [f64], a: &[f64], b: &[f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..k {
            out[i * k + j] = arow.iter().zip(&b[j * n..(j + 1) * n]).map(|(x, y)| x * y).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::relative_error;

    fn rank1() -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![3., 4.], vec![6., 8.]]).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_positive() {
        let x = DenseMatrix::from_fn(4, 4, |i, j| (i + j) as f64 + 1.0);
        let cfg = NmfConfig::new(2).with_seed(11);
        let a = nmf_init(&x, &cfg).unwrap();
        let b = nmf_init(&x, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.w.shape(), (4, 2));
        assert_eq!(a.h.shape(), (2, 4));
        assert!(a.w.data().iter().chain(a.h.data()).all(|v| *v > 0.0));
    }

    #[test]
    fn init_rejects_bad_inputs() {
        let zeros = DenseMatrix::zeros(3, 3);
        assert!(matches!(nmf_init(&zeros, &NmfConfig::new(1)), Err(Error::Domain(_))));
        let neg = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(nmf_init(&neg, &NmfConfig::new(1)), Err(Error::Domain(_))));
        assert!(matches!(nmf_init(&rank1(), &NmfConfig::new(3)), Err(Error::Dimension(_))));
        assert!(matches!(nmf_init(&rank1(), &NmfConfig::new(0)), Err(Error::Parameter(_))));
    }

    #[test]
    fn exact_factorization_is_a_fixed_point() {
        let w = DenseMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let h = DenseMatrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let model = NmfModel::from_factors(w, h).unwrap();
        for step in [mu_step_kl, mu_step_frobenius] {
            let next = step(&rank1(), &model).unwrap();
            for (a, b) in next.w.data().iter().zip(model.w.data()) {
                assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in next.h.data().iter().zip(model.h.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn kl_step_does_not_increase_objective() {
        let x = rank1();
        let mut model = nmf_init(&x, &NmfConfig::new(1).with_seed(3)).unwrap();
        let mut prev = model.objective(&x, Loss::Kl).unwrap();
        for _ in 0..20 {
            model = mu_step_kl(&x, &model).unwrap();
            let obj = model.objective(&x, Loss::Kl).unwrap();
            assert!(obj <= prev + 1e-9, "{obj} > {prev}");
            assert!(model.w.is_non_negative() && model.h.is_non_negative());
            prev = obj;
        }
    }

    #[test]
    fn frobenius_trace_is_monotone() {
        let mut rng = seed::rng(5);
        let x = DenseMatrix::from_fn(10, 8, |_, _| rng.gen::<f64>());
        let cfg = NmfConfig::new(3)
            .with_loss(Loss::Frobenius)
            .with_max_iters(50)
            .with_tol(1e-300);
        let model = nmf_solve(&x, &cfg).unwrap();
        assert_eq!(model.objective_trace.len(), 51);
        for pair in model.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9);
        }
    }

    #[test]
    fn solves_exact_rank_one() {
        let x = rank1();
        let model = nmf_solve(&x, &NmfConfig::new(1).with_seed(1)).unwrap();
        assert!(relative_error(&x, &model.reconstruct()).unwrap() < 1e-6);
    }

    #[test]
    fn full_rank_fit_is_tight() {
        let mut rng = seed::rng(17);
        let x = DenseMatrix::from_fn(6, 8, |_, _| rng.gen::<f64>() + 0.1);
        let cfg = NmfConfig::new(6).with_seed(2).with_max_iters(5000).with_tol(1e-12);
        let model = nmf_solve(&x, &cfg).unwrap();
        assert!(relative_error(&x, &model.reconstruct()).unwrap() < 1e-3);
    }

    #[test]
    fn infinite_tol_stops_after_one_iteration() {
        let cfg = NmfConfig::new(1).with_tol(f64::INFINITY);
        let model = nmf_solve(&rank1(), &cfg).unwrap();
        assert_eq!(model.iters_run, 1);
        assert!(model.converged);
        assert_eq!(model.objective_trace.len(), 2);

        let cfg = NmfConfig::new(1).with_tol(1e-300).with_max_iters(3);
        let model = nmf_solve(&rank1(), &cfg).unwrap();
        assert_eq!(model.iters_run, 3);
    }

    #[test]
    fn solve_is_deterministic() {
        let mut rng = seed::rng(9);
        let x = DenseMatrix::from_fn(7, 5, |_, _| rng.gen::<f64>());
        let cfg = NmfConfig::new(2).with_seed(42).with_max_iters(100);
        assert_eq!(nmf_solve(&x, &cfg).unwrap(), nmf_solve(&x, &cfg).unwrap());
    }

    #[test]
    fn strided_objective_still_records_the_last_iteration() {
        let mut rng = seed::rng(19);
        let x = DenseMatrix::from_fn(5, 5, |_, _| rng.gen::<f64>());
        let mut cfg = NmfConfig::new(2).with_max_iters(25).with_tol(1e-300);
        cfg.objective_stride = 10;
        let model = nmf_solve(&x, &cfg).unwrap();
        // initial, 10, 20, 25
        assert_eq!(model.objective_trace.len(), 4);
    }
}
