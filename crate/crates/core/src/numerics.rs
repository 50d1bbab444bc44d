//! Dense row-major linear algebra, activations, and loss primitives.
//!
//! Everything is 64-bit and shape-checked; there is no broadcasting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Vectors are plain `f64` buffers.
pub type Vec64 = Vec<f64>;

/// Probability floor used by [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-major dense matrix. Serializes as a nested array of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting bad lengths and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite matrix entry at index {pos}")));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows"));
        }
        Matrix::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// `out += self · x` without shape checks (hot path).
    pub(crate) fn gemv_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o += dot(row, x);
        }
    }

    /// `out += selfᵀ · y`.
    pub(crate) fn gemv_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&yr, row) in y.iter().zip(self.data.chunks_exact(self.cols.max(1))) {
            if yr != 0.0 {
                axpy(yr, row, out);
            }
        }
    }

    /// `self += y · xᵀ`.
    pub(crate) fn outer_acc(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        let cols = self.cols.max(1);
        for (&yr, row) in y.iter().zip(self.data.chunks_exact_mut(cols)) {
            if yr != 0.0 {
                axpy(yr, x, row);
            }
        }
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.data.chunks(self.cols.max(1)))
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(&rows).map_err(D::Error::custom)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a·x`
#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Returns `W·x + b`.
pub fn affine(w: &Matrix, x: &[f64], b: &[f64]) -> Result<Vec64> {
    if w.cols != x.len() || w.rows != b.len() {
        return Err(Error::shape(format!(
            "affine: W is {}x{}, x has {}, b has {}",
            w.rows,
            w.cols,
            x.len(),
            b.len()
        )));
    }
    let mut out = b.to_vec();
    w.gemv_acc(x, &mut out);
    Ok(out)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    // Branch keeps exp() argument non-positive, so no overflow for large |x|.
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_vec(x: &[f64]) -> Vec64 {
    x.iter().map(|&v| sigmoid(v)).collect()
}

pub fn tanh_vec(x: &[f64]) -> Vec64 {
    x.iter().map(|v| v.tanh()).collect()
}

pub fn logsumexp(z: &[f64]) -> Result<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if z.is_empty() {
        return Err(Error::shape("logsumexp of empty vector"));
    }
    Ok(max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln())
}

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Result<Vec64> {
    if z.is_empty() {
        return Err(Error::shape("softmax of empty vector"));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec64 = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// `−ln(max(p[target], 1e-12))`.
pub fn cross_entropy(p: &[f64], target: usize) -> Result<f64> {
    let pt = p.get(target).ok_or_else(|| {
        Error::Index(format!("target {target} out of range for {} classes", p.len()))
    })?;
    Ok(-pt.max(PROB_FLOOR).ln())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 0,
    Shuffle = 1,
    Synth = 2,
    GradCheck = 3,
}

/// Seeded generator: ChaCha8 (rand_chacha 0.9) keyed by the seed, with the
/// stream id selecting the ChaCha stream. Identical (seed, stream) pairs yield
/// identical sequences; distinct streams never share output.
#[derive(Debug, Clone)]
pub struct Prng(ChaCha8Rng);

impl Prng {
    pub const ALGORITHM: &'static str = "chacha8/rand_chacha-0.9";

    pub fn new(seed: u64, stream: Stream) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        Prng(rng)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.random()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.0.random()
    }

    /// Uniform in `[-limit, limit)`.
    pub fn symmetric(&mut self, limit: f64) -> f64 {
        (2.0 * self.next_f64() - 1.0) * limit
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.0);
    }

    pub(crate) fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.0
    }
}
