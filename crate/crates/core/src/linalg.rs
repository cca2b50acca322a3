//! Dense vector and matrix helpers shared by every other module.
//!
//! Everything here computes in `f64`. Interchange files store `f32`; the
//! conversion happens at the I/O boundary in [`crate::interchange`].

use crate::error::{CoreError, Result};

/// Norms below this are treated as the zero vector.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// A finite, fixed-dimension embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(CoreError::EmptyDimension);
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(CoreError::NonFinite { index: pos });
        }
        Ok(Self(data))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Row-major dense matrix. Rows are embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::ShapeMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. An empty iterator needs an explicit `cols`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(CoreError::DimMismatch {
                    left: cols,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Copies the selected rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Result of [`l2_normalize`]: a unit vector, or the zero vector flagged as such.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalized {
    Unit(Vec<f64>),
    /// Input norm was below [`ZERO_NORM_EPS`]; the payload is all zeros.
    ZeroNorm(Vec<f64>),
}

impl Normalized {
    pub fn is_zero(&self) -> bool {
        matches!(self, Normalized::ZeroNorm(_))
    }

    pub fn into_inner(self) -> Vec<f64> {
        match self {
            Normalized::Unit(v) | Normalized::ZeroNorm(v) => v,
        }
    }

    /// Converts the zero-norm signal into an error.
    pub fn unit(self) -> Result<Vec<f64>> {
        match self {
            Normalized::Unit(v) => Ok(v),
            Normalized::ZeroNorm(_) => Err(CoreError::ZeroNorm),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn l2_normalize(v: &[f64]) -> Normalized {
    let n = norm(v);
    if n < ZERO_NORM_EPS {
        Normalized::ZeroNorm(vec![0.0; v.len()])
    } else {
        Normalized::Unit(v.iter().map(|x| x / n).collect())
    }
}

/// Cosine similarity of unit (or zero) vectors, i.e. their dot product.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CoreError::DimMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(dot(a, b))
}

/// Softmax restricted to entries where `mask` is true; masked entries are exactly 0.
///
/// `mask = None` means every entry participates.
pub fn masked_softmax(logits: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
    if let Some(m) = mask {
        if m.len() != logits.len() {
            return Err(CoreError::DimMismatch {
                left: logits.len(),
                right: m.len(),
            });
        }
    }
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| keep(i))
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(CoreError::AllMasked);
    }
    let mut out: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, &x)| if keep(i) { (x - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = out.iter().sum();
    for x in &mut out {
        *x /= sum;
    }
    Ok(out)
}

/// `log(sum(exp(x)))` computed stably.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// All-pairs dot products: entry `(i, j)` is `a_i · b_j`.
pub fn pairwise_sim(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(CoreError::DimMismatch {
            left: a.cols(),
            right: b.cols(),
        });
    }
    let mut out = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        let ai = a.row(i);
        let row = out.row_mut(i);
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = dot(ai, b.row(j));
        }
    }
    Ok(out)
}

/// Index of the largest value; ties resolve to the lowest index. `None` when empty.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
