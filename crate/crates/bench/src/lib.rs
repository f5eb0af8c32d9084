//! Deterministic inputs shared by the benchmarks.

use latentfire::tensor::{DenseMatrix, DenseTensor};

/// Positive `rows × cols` product of two rank-`k` factors with a fixed pattern.
pub fn planted_matrix(rows: usize, cols: usize, k: usize) -> DenseMatrix {
    let w = DenseMatrix::from_fn(rows, k, |i, s| 0.1 + ((i * 31 + s * 17) % 11) as f64 / 11.0);
    let h = DenseMatrix::from_fn(k, cols, |s, j| 0.1 + ((j * 13 + s * 7) % 9) as f64 / 9.0);
    w.matmul(&h).expect("inner dimensions agree")
}

pub fn ramp_tensor(shape: &[usize]) -> DenseTensor {
    DenseTensor::from_fn(shape, |i| 1.0 + i.iter().enumerate().map(|(m, v)| ((m + 1) * v) % 5).sum::<usize>() as f64)
        .expect("shape is valid")
}
