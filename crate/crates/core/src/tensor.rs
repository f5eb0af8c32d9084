//! Dense row-major matrices and tensors plus the multilinear algebra shared by
//! every solver: unfolding/folding, mode-n products, Khatri-Rao products,
//! Frobenius norms and the generalized Kullback-Leibler divergence.
//!
//! Unfolding convention: the mode-`n` unfolding of a tensor with shape
//! `(I_0, .., I_{N-1})` has `I_n` rows, and its columns enumerate the
//! remaining indices in their original order with the last index varying
//! fastest. Under this convention `fold(unfold(x, n), n, shape)` is a pure
//! permutation of storage and round-trips bit-exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported tensor order.
pub const MAX_NDIM: usize = 8;

/// Neumaier-compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in it {
        acc.add(v);
    }
    acc.total()
}

/// Row-major dense matrix of 64-bit reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim(format!("matrix extents must be positive, got {rows}x{cols}")));
        }
        if rows * cols != data.len() {
            return Err(Error::dim(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Like [`DenseMatrix::new`] but rejects negative or non-finite entries.
    pub fn non_negative(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let m = Self::new(rows, cols, data)?;
        m.check_non_negative()?;
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix extents must be positive");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix extents must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::dim("ragged rows"));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.data.iter().copied()) / self.data.len() as f64
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.data)
    }

    pub fn is_non_negative(&self) -> bool {
        self.data.iter().all(|v| *v >= 0.0)
    }

    pub fn check_non_negative(&self) -> Result<()> {
        match self.data.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            Some(pos) => Err(Error::domain(format!(
                "entry ({}, {}) = {} is negative or not finite",
                pos / self.cols,
                pos % self.cols,
                self.data[pos]
            ))),
            None => Ok(()),
        }
    }

    /// `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        let n = other.cols;
        for i in 0..self.rows {
            let out_row = &mut out[i * n..(i + 1) * n];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: n,
            data: out,
        })
    }

    /// `selfᵀ * other` without materializing the transpose.
    pub fn t_matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows {
            return Err(Error::dim(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let n = other.cols;
        let mut out = vec![0.0; self.cols * n];
        for k in 0..self.rows {
            let b_row = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out[i * n..(i + 1) * n].iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(DenseMatrix {
            rows: self.cols,
            cols: n,
            data: out,
        })
    }

    /// `self * otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.cols {
            return Err(Error::dim(format!(
                "cannot multiply {}x{} by ({}x{})ᵀ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Vec::with_capacity(self.rows * other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.push(dot(a, other.row(j)));
            }
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: other.rows,
            data: out,
        })
    }

    /// Row-major reinterpretation as a 2-way tensor.
    pub fn to_tensor(&self) -> DenseTensor {
        DenseTensor {
            shape: vec![self.rows, self.cols],
            data: self.data.clone(),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn frobenius(data: &[f64]) -> f64 {
    compensated_sum(data.iter().map(|v| v * v)).sqrt()
}

/// N-way dense tensor in row-major order (last index fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    /// General constructor; signed entries are allowed.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_shape(&shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {n} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// Constructor for factorization inputs: rejects negative or non-finite entries.
    pub fn non_negative(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let t = Self::new(shape, data)?;
        t.check_non_negative()?;
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        validate_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        validate_shape(shape)?;
        let n: usize = shape.iter().product();
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            increment_index(&mut idx, shape);
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.data)
    }

    pub fn check_non_negative(&self) -> Result<()> {
        match self.data.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            Some(pos) => Err(Error::domain(format!(
                "entry at flat offset {pos} = {} is negative or not finite",
                self.data[pos]
            ))),
            None => Ok(()),
        }
    }

    /// Same storage, new shape.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// Interprets a 2-way tensor as a matrix.
    pub fn to_matrix(&self) -> Result<DenseMatrix> {
        match self.shape[..] {
            [r, c] => DenseMatrix::new(r, c, self.data.clone()),
            _ => Err(Error::dim(format!("expected a 2-way tensor, got shape {:?}", self.shape))),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_NDIM {
        return Err(Error::dim(format!(
            "tensor order must be in 1..={MAX_NDIM}, got {}",
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(Error::dim(format!("extents must be positive, got {shape:?}")));
    }
    Ok(())
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Row-major odometer increment; wraps to all zeros after the last index.
pub(crate) fn increment_index(idx: &mut [usize], shape: &[usize]) {
    for d in (0..shape.len()).rev() {
        idx[d] += 1;
        if idx[d] < shape[d] {
            return;
        }
        idx[d] = 0;
    }
}

/// Splits a shape around `mode` into (outer, extent, inner) block sizes.
fn mode_blocks(shape: &[usize], mode: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..mode].iter().product();
    let inner: usize = shape[mode + 1..].iter().product();
    (outer, shape[mode], inner)
}

fn check_mode(ndim: usize, mode: usize) -> Result<()> {
    if mode >= ndim {
        return Err(Error::dim(format!("mode {mode} out of range for order-{ndim} tensor")));
    }
    Ok(())
}

/// Mode-`n` unfolding: rows index `mode`, columns walk the remaining indices
/// in their original order, last index fastest.
pub fn unfold(x: &DenseTensor, mode: usize) -> Result<DenseMatrix> {
    check_mode(x.ndim(), mode)?;
    let (outer, extent, inner) = mode_blocks(&x.shape, mode);
    let cols = outer * inner;
    let mut out = vec![0.0; extent * cols];
    for o in 0..outer {
        for i in 0..extent {
            let src = &x.data[(o * extent + i) * inner..(o * extent + i + 1) * inner];
            out[i * cols + o * inner..i * cols + (o + 1) * inner].copy_from_slice(src);
        }
    }
    DenseMatrix::new(extent, cols, out)
}

/// Inverse of [`unfold`] for the same mode and target shape.
pub fn fold(m: &DenseMatrix, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    validate_shape(shape)?;
    check_mode(shape.len(), mode)?;
    let (outer, extent, inner) = mode_blocks(shape, mode);
    if m.rows() != extent || m.cols() != outer * inner {
        return Err(Error::dim(format!(
            "{}x{} matrix cannot fold along mode {mode} into shape {shape:?}",
            m.rows(),
            m.cols()
        )));
    }
    let cols = outer * inner;
    let mut data = vec![0.0; extent * cols];
    for o in 0..outer {
        for i in 0..extent {
            data[(o * extent + i) * inner..(o * extent + i + 1) * inner]
                .copy_from_slice(&m.data()[i * cols + o * inner..i * cols + (o + 1) * inner]);
        }
    }
    Ok(DenseTensor {
        shape: shape.to_vec(),
        data,
    })
}

/// `x ×_mode m`: replaces extent `shape[mode]` by `rows(m)`.
pub fn mode_n_product(x: &DenseTensor, m: &DenseMatrix, mode: usize) -> Result<DenseTensor> {
    check_mode(x.ndim(), mode)?;
    if m.cols() != x.shape[mode] {
        return Err(Error::dim(format!(
            "matrix with {} columns cannot act on mode {mode} of extent {}",
            m.cols(),
            x.shape[mode]
        )));
    }
    let (outer, extent, inner) = mode_blocks(&x.shape, mode);
    let new_extent = m.rows();
    let mut data = vec![0.0; outer * new_extent * inner];
    for o in 0..outer {
        let src = &x.data[o * extent * inner..(o + 1) * extent * inner];
        let dst = &mut data[o * new_extent * inner..(o + 1) * new_extent * inner];
        for r in 0..new_extent {
            let out_row = &mut dst[r * inner..(r + 1) * inner];
            for (i, &coef) in m.row(r).iter().enumerate() {
                if coef == 0.0 {
                    continue;
                }
                for (o_v, &s) in out_row.iter_mut().zip(&src[i * inner..(i + 1) * inner]) {
                    *o_v += coef * s;
                }
            }
        }
    }
    let mut shape = x.shape.clone();
    shape[mode] = new_extent;
    Ok(DenseTensor { shape, data })
}

/// Reorders modes so that output mode `i` is input mode `order[i]`.
pub fn permute(x: &DenseTensor, order: &[usize]) -> Result<DenseTensor> {
    let nd = x.ndim();
    let mut seen = vec![false; nd];
    if order.len() != nd || order.iter().any(|&o| o >= nd || std::mem::replace(&mut seen[o], true)) {
        return Err(Error::dim(format!("{order:?} is not a permutation of 0..{nd}")));
    }
    let src_strides = x.strides();
    let shape: Vec<usize> = order.iter().map(|&o| x.shape[o]).collect();
    let strides: Vec<usize> = order.iter().map(|&o| src_strides[o]).collect();
    let mut idx = vec![0usize; nd];
    let mut data = Vec::with_capacity(x.len());
    for _ in 0..x.len() {
        let off: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        data.push(x.data[off]);
        increment_index(&mut idx, &shape);
    }
    Ok(DenseTensor { shape, data })
}

/// Column-wise Kronecker product: column `p` is `kron(a[:, p], b[:, p])`.
pub fn khatri_rao(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.cols() {
        return Err(Error::dim(format!(
            "Khatri-Rao needs equal column counts, got {} and {}",
            a.cols(),
            b.cols()
        )));
    }
    let k = a.cols();
    let mut data = Vec::with_capacity(a.rows() * b.rows() * k);
    for i in 0..a.rows() {
        let ar = a.row(i);
        for j in 0..b.rows() {
            data.extend(ar.iter().zip(b.row(j)).map(|(x, y)| x * y));
        }
    }
    DenseMatrix::new(a.rows() * b.rows(), k, data)
}

/// Anything with a shape and flat entries; lets divergences accept both
/// matrices and tensors.
pub trait Entries {
    fn extents(&self) -> Vec<usize>;
    fn entries(&self) -> &[f64];
}

impl Entries for DenseMatrix {
    fn extents(&self) -> Vec<usize> {
        vec![self.rows, self.cols]
    }
    fn entries(&self) -> &[f64] {
        &self.data
    }
}

impl Entries for DenseTensor {
    fn extents(&self) -> Vec<usize> {
        self.shape.clone()
    }
    fn entries(&self) -> &[f64] {
        &self.data
    }
}

fn same_shape<T: Entries + ?Sized>(x: &T, y: &T) -> Result<()> {
    if x.extents() != y.extents() {
        return Err(Error::dim(format!(
            "shape mismatch: {:?} vs {:?}",
            x.extents(),
            y.extents()
        )));
    }
    Ok(())
}

/// Generalized KL divergence `Σ x·ln(x/y) − x + y` over flat entries.
///
/// `0·ln 0` contributes 0; `x > 0` against `y == 0` yields `f64::INFINITY`.
pub fn kl_divergence_slice(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (&a, &b) in x.iter().zip(y) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            acc.add(a * (a / b).ln() - a + b);
        } else {
            acc.add(b);
        }
    }
    acc.total().max(0.0)
}

pub fn kl_divergence<T: Entries + ?Sized>(x: &T, y: &T) -> Result<f64> {
    same_shape(x, y)?;
    Ok(kl_divergence_slice(x.entries(), y.entries()))
}

/// Squared Frobenius distance `‖x − y‖²`.
pub fn squared_distance<T: Entries + ?Sized>(x: &T, y: &T) -> Result<f64> {
    same_shape(x, y)?;
    Ok(squared_distance_slice(x.entries(), y.entries()))
}

pub(crate) fn squared_distance_slice(x: &[f64], y: &[f64]) -> f64 {
    compensated_sum(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)))
}

/// `‖x − x_hat‖_F / ‖x‖_F`.
pub fn relative_error<T: Entries + ?Sized>(x: &T, x_hat: &T) -> Result<f64> {
    same_shape(x, x_hat)?;
    relative_error_slice(x.entries(), x_hat.entries())
}

pub(crate) fn relative_error_slice(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    let norm = frobenius(x);
    if norm == 0.0 {
        return Err(Error::UndefinedInput(
            "relative error of a zero-norm reference".into(),
        ));
    }
    Ok(squared_distance_slice(x, x_hat).sqrt() / norm)
}
