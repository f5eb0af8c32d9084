//! NMFk latent-dimension selection.
//!
//! For each candidate `k` the input is perturbed into `P` bootstrap replicas,
//! each replica is factorized, the resulting `W` columns are clustered with
//! the one-column-per-replica constraint, and the clusters are scored with
//! silhouette statistics under cosine distance. The selected `k` is the
//! largest one whose clusters are stable and whose reconstruction error
//! still improves on every smaller candidate.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nmf::{nmf_solve, NmfConfig};
use crate::seed;
use crate::tensor::{dot, relative_error, unfold, DenseMatrix, DenseTensor};

const MAX_CLUSTER_ROUNDS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    /// Half-width of the multiplicative noise interval `[1−ε, 1+ε]`.
    pub epsilon: f64,
    pub replicas: usize,
    pub master_seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.02,
            replicas: 10,
            master_seed: 0,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::param(format!("epsilon must lie in [0, 1), got {}", self.epsilon)));
        }
        if self.replicas < 2 {
            return Err(Error::param("at least two replicas are required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRule {
    /// Minimum per-point silhouette a candidate must reach.
    pub threshold: f64,
    /// Fraction of failed replicas above which a candidate is invalid.
    pub max_failed_fraction: f64,
}

impl Default for SelectionRule {
    fn default() -> Self {
        Self {
            threshold: 0.75,
            max_failed_fraction: 0.2,
        }
    }
}

/// Multiplies every entry by an independent `U(1−ε, 1+ε)` draw.
pub fn resample(x: &DenseMatrix, cfg: &PerturbConfig, replica: usize) -> Result<DenseMatrix> {
    x.check_non_negative()?;
    if cfg.epsilon == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = seed::rng(seed::derive(
        cfg.master_seed,
        &[seed::TAG_RESAMPLE, replica as u64],
    ));
    let lo = 1.0 - cfg.epsilon;
    let width = 2.0 * cfg.epsilon;
    let data = x
        .data()
        .iter()
        .map(|&v| v * (lo + width * rng.gen::<f64>()))
        .collect();
    DenseMatrix::new(x.rows(), x.cols(), data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// `assignments[p][j]` is the cluster of column `j` of replica `p`;
    /// each inner vector is a permutation of `0..k`.
    pub assignments: Vec<Vec<usize>>,
    /// Unit-norm centroids, one column per cluster.
    pub centroids: DenseMatrix,
    pub rounds: usize,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.centroids.cols()
    }

    /// Flat cluster labels in replica-major column order.
    pub fn labels(&self) -> Vec<usize> {
        self.assignments.iter().flatten().copied().collect()
    }
}

fn unit_columns(w: &DenseMatrix, replica: usize) -> Result<Vec<Vec<f64>>> {
    (0..w.cols())
        .map(|j| {
            let col = w.column(j);
            let norm = dot(&col, &col).sqrt();
            if !(norm > 0.0) {
                return Err(Error::DegenerateFactor(format!(
                    "column {j} of replica {replica} has zero norm"
                )));
            }
            Ok(col.into_iter().map(|v| v / norm).collect())
        })
        .collect()
}

/// Greedy one-to-one matching of columns to centroids by descending cosine
/// similarity. Returns `perm[column] = cluster`.
fn greedy_match(columns: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    let k = columns.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(k * k);
    for (j, col) in columns.iter().enumerate() {
        for (c, cen) in centroids.iter().enumerate() {
            pairs.push((dot(col, cen), j, c));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut perm = vec![usize::MAX; k];
    let mut taken = vec![false; k];
    for (_, j, c) in pairs {
        if perm[j] == usize::MAX && !taken[c] {
            perm[j] = c;
            taken[c] = true;
        }
    }
    perm
}

/// Clusters the columns of every replica's `W` so that each cluster holds
/// exactly one column per replica.
pub fn cluster_factors(ws: &[DenseMatrix]) -> Result<ClusterAssignment> {
    let first = ws
        .first()
        .ok_or_else(|| Error::param("no factor matrices to cluster"))?;
    let (m, k) = first.shape();
    if let Some(bad) = ws.iter().position(|w| w.shape() != (m, k)) {
        return Err(Error::dim(format!(
            "replica {bad} has shape {:?}, expected ({m}, {k})",
            ws[bad].shape()
        )));
    }
    let columns: Vec<Vec<Vec<f64>>> = ws
        .iter()
        .enumerate()
        .map(|(p, w)| unit_columns(w, p))
        .collect::<Result<_>>()?;

    let mut centroids = columns[0].clone();
    let mut assignments: Vec<Vec<usize>> = Vec::new();
    let mut rounds = 0;
    while rounds < MAX_CLUSTER_ROUNDS {
        rounds += 1;
        let next: Vec<Vec<usize>> = columns
            .iter()
            .map(|cols| greedy_match(cols, &centroids))
            .collect();
        let stable = next == assignments;
        assignments = next;

        let mut sums = vec![vec![0.0; m]; k];
        for (cols, perm) in columns.iter().zip(&assignments) {
            for (col, &c) in cols.iter().zip(perm) {
                for (s, v) in sums[c].iter_mut().zip(col) {
                    *s += v;
                }
            }
        }
        for (c, s) in sums.into_iter().enumerate() {
            let norm = dot(&s, &s).sqrt();
            // Means of unit vectors in the non-negative orthant never vanish.
            centroids[c] = s.into_iter().map(|v| v / norm).collect();
        }
        if stable {
            break;
        }
    }
    let centroids = DenseMatrix::from_fn(m, k, |i, c| centroids[c][i]);
    Ok(ClusterAssignment {
        assignments,
        centroids,
        rounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteSummary {
    pub scores: Vec<f64>,
    pub min: f64,
    pub mean: f64,
    /// Only one cluster was present; scores are 1.0 by convention.
    pub single_cluster: bool,
}

/// Silhouette scores for arbitrary points given cluster labels and a
/// pairwise distance.
///
/// `a(j)` is the mean distance to the other members of `j`'s cluster, `b(j)`
/// the smallest mean distance to another cluster, and the score is
/// `(b − a) / max(a, b)` (0 when both vanish or `j` is alone in its cluster).
pub fn silhouette_with<D>(labels: &[usize], distance: D) -> Result<SilhouetteSummary>
where
    D: Fn(usize, usize) -> f64,
{
    let n = labels.len();
    if n == 0 {
        return Err(Error::param("silhouette of an empty point set"));
    }
    let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_clusters];
    for &l in labels {
        sizes[l] += 1;
    }
    let occupied = sizes.iter().filter(|&&s| s > 0).count();
    if occupied < 2 {
        return Ok(SilhouetteSummary {
            scores: vec![1.0; n],
            min: 1.0,
            mean: 1.0,
            single_cluster: true,
        });
    }
    let mut scores = Vec::with_capacity(n);
    let mut totals = vec![0.0; n_clusters];
    for j in 0..n {
        totals.iter_mut().for_each(|t| *t = 0.0);
        for i in 0..n {
            if i != j {
                totals[labels[i]] += distance(j, i).max(0.0);
            }
        }
        let own = labels[j];
        if sizes[own] < 2 {
            scores.push(0.0);
            continue;
        }
        let a = totals[own] / (sizes[own] - 1) as f64;
        let b = (0..n_clusters)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| totals[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        let s = if denom > 0.0 { (b - a) / denom } else { 0.0 };
        scores.push(s.clamp(-1.0, 1.0));
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = scores.iter().sum::<f64>() / n as f64;
    Ok(SilhouetteSummary {
        scores,
        min,
        mean: mean.max(min),
        single_cluster: false,
    })
}

/// Silhouettes of clustered replica columns under cosine distance.
pub fn silhouette(assignment: &ClusterAssignment, ws: &[DenseMatrix]) -> Result<SilhouetteSummary> {
    if ws.len() != assignment.assignments.len() {
        return Err(Error::dim(format!(
            "{} replicas but {} assignments",
            ws.len(),
            assignment.assignments.len()
        )));
    }
    let points: Vec<Vec<f64>> = ws
        .iter()
        .enumerate()
        .map(|(p, w)| unit_columns(w, p))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let labels = assignment.labels();
    if labels.len() != points.len() {
        return Err(Error::dim("assignment does not cover every column"));
    }
    silhouette_with(&labels, |i, j| 1.0 - dot(&points[i], &points[j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRecord {
    pub k: usize,
    pub min_silhouette: f64,
    pub mean_silhouette: f64,
    pub mean_relative_error: f64,
    pub failed_replicas: usize,
    /// False when too many replicas failed to factorize.
    pub valid: bool,
    pub single_cluster: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionReport {
    pub records: Vec<KRecord>,
    /// `None` when no candidate is admissible.
    pub selected_k: Option<usize>,
    pub rule: SelectionRule,
    pub perturb: PerturbConfig,
}

impl KSelectionReport {
    pub fn record(&self, k: usize) -> Option<&KRecord> {
        self.records.iter().find(|r| r.k == k)
    }
}

/// Applies the selection rule to per-k records sorted by `k`.
pub fn apply_rule(records: &[KRecord], rule: &SelectionRule) -> Option<usize> {
    let mut best_error = f64::INFINITY;
    let mut selected = None;
    for rec in records.iter().filter(|r| r.valid) {
        let in_envelope = rec.mean_relative_error <= best_error;
        best_error = best_error.min(rec.mean_relative_error);
        if in_envelope && rec.min_silhouette >= rule.threshold {
            selected = Some(rec.k);
        }
    }
    selected
}

struct ReplicaFit {
    w: DenseMatrix,
    relative_error: f64,
}

/// Sweeps `k_min..=k_max` and selects the latent dimension.
///
/// Work is spread over the current rayon pool; results are reduced in
/// `(k, replica)` order, so the report does not depend on the worker count.
pub fn select_k(
    x: &DenseMatrix,
    k_range: (usize, usize),
    nmf_cfg: &NmfConfig,
    perturb: &PerturbConfig,
    rule: &SelectionRule,
) -> Result<KSelectionReport> {
    let (k_min, k_max) = k_range;
    let limit = x.rows().min(x.cols());
    if k_min == 0 || k_min > k_max || k_max > limit {
        return Err(Error::dim(format!(
            "k range {k_min}..={k_max} must lie within 1..={limit}"
        )));
    }
    perturb.validate()?;
    nmf_cfg.validate()?;
    x.check_non_negative()?;

    let replicas: Vec<DenseMatrix> = (0..perturb.replicas)
        .into_par_iter()
        .map(|p| resample(x, perturb, p))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (k_min..=k_max)
        .flat_map(|k| (0..perturb.replicas).map(move |p| (k, p)))
        .collect();
    let fits: Vec<Result<ReplicaFit>> = jobs
        .par_iter()
        .map(|&(k, p)| {
            let cfg = NmfConfig {
                k,
                seed: seed::derive(perturb.master_seed, &[seed::TAG_SOLVE, k as u64, p as u64]),
                ..nmf_cfg.clone()
            };
            let model = nmf_solve(&replicas[p], &cfg)?;
            let relative_error = relative_error(&replicas[p], &model.reconstruct())?;
            Ok(ReplicaFit {
                w: model.w,
                relative_error,
            })
        })
        .collect();

    let mut records = Vec::new();
    for (k, chunk) in (k_min..=k_max).zip(fits.chunks(perturb.replicas)) {
        records.push(summarize_k(k, chunk, rule)?);
    }
    let selected_k = apply_rule(&records, rule);
    Ok(KSelectionReport {
        records,
        selected_k,
        rule: rule.clone(),
        perturb: perturb.clone(),
    })
}

fn summarize_k(k: usize, fits: &[Result<ReplicaFit>], rule: &SelectionRule) -> Result<KRecord> {
    let ok: Vec<&ReplicaFit> = fits.iter().filter_map(|f| f.as_ref().ok()).collect();
    let failed = fits.len() - ok.len();
    for err in fits.iter().filter_map(|f| f.as_ref().err()) {
        log::warn!("k = {k}: replica failed: {err}");
    }
    let invalid = KRecord {
        k,
        min_silhouette: f64::NAN,
        mean_silhouette: f64::NAN,
        mean_relative_error: f64::NAN,
        failed_replicas: failed,
        valid: false,
        single_cluster: k == 1,
    };
    if failed as f64 > rule.max_failed_fraction * fits.len() as f64 || ok.len() < 2 {
        return Ok(invalid);
    }
    let ws: Vec<DenseMatrix> = ok.iter().map(|f| f.w.clone()).collect();
    let assignment = match cluster_factors(&ws) {
        Ok(a) => a,
        Err(Error::DegenerateFactor(msg)) => {
            log::warn!("k = {k}: {msg}");
            return Ok(invalid);
        }
        Err(e) => return Err(e),
    };
    let sil = silhouette(&assignment, &ws)?;
    let mean_relative_error = ok.iter().map(|f| f.relative_error).sum::<f64>() / ok.len() as f64;
    Ok(KRecord {
        k,
        min_silhouette: sil.min,
        mean_silhouette: sil.mean,
        mean_relative_error,
        failed_replicas: failed,
        valid: true,
        single_cluster: sil.single_cluster,
    })
}

/// Runs [`select_k`] on every mode-n unfolding and returns the per-mode ranks.
pub fn select_tensor_ranks(
    x: &DenseTensor,
    k_ranges: &[(usize, usize)],
    nmf_cfg: &NmfConfig,
    perturb: &PerturbConfig,
    rule: &SelectionRule,
) -> Result<(Vec<usize>, Vec<KSelectionReport>)> {
    if !(3..=4).contains(&x.ndim()) {
        return Err(Error::dim(format!(
            "rank selection expects a 3-way or 4-way tensor, got order {}",
            x.ndim()
        )));
    }
    if k_ranges.len() != x.ndim() {
        return Err(Error::dim(format!(
            "{} k ranges for an order-{} tensor",
            k_ranges.len(),
            x.ndim()
        )));
    }
    let mut ranks = Vec::with_capacity(x.ndim());
    let mut reports = Vec::with_capacity(x.ndim());
    for (mode, &range) in k_ranges.iter().enumerate() {
        let unfolded = unfold(x, mode)?;
        let mode_perturb = PerturbConfig {
            master_seed: seed::derive(perturb.master_seed, &[mode as u64]),
            ..perturb.clone()
        };
        let report = select_k(&unfolded, range, nmf_cfg, &mode_perturb, rule)?;
        match report.selected_k {
            Some(k) => ranks.push(k),
            None => return Err(Error::RankSelection { mode }),
        }
        reports.push(report);
    }
    Ok((ranks, reports))
}
