//! Row-major batches of state vectors.

use crate::error::{DosError, Result};

/// `n` samples of dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBatch {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl StateBatch {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(DosError::Argument(format!("empty batch shape {n}x{d}")));
        }
        if data.len() != n * d {
            return Err(DosError::Argument(format!(
                "batch data length {} does not match {n}x{d}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(DosError::Argument(format!(
                "non-finite entry at flat index {bad}"
            )));
        }
        Ok(Self { data, n, d })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        assert!(n > 0 && d > 0, "empty batch shape {n}x{d}");
        Self {
            data: vec![0.0; n * d],
            n,
            d,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(DosError::Argument("ragged rows".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    /// `n` copies of a single row.
    pub fn broadcast(row: &[f64], n: usize) -> Self {
        assert!(n > 0 && !row.is_empty(), "empty broadcast");
        let mut data = Vec::with_capacity(n * row.len());
        for _ in 0..n {
            data.extend_from_slice(row);
        }
        Self {
            data,
            n,
            d: row.len(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
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

    pub fn same_shape(&self, other: &StateBatch) -> bool {
        self.n == other.n && self.d == other.d
    }

    pub fn check_shape(&self, other: &StateBatch, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(DosError::Argument(format!(
                "{what}: shape {}x{} vs {}x{}",
                self.n, self.d, other.n, other.d
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * c`
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * c).collect(),
            n: self.n,
            d: self.d,
        }
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &StateBatch) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    /// Elementwise `f(a, b)`.
    pub fn zip_map(&self, other: &StateBatch, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(self.same_shape(other));
        Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            n: self.n,
            d: self.d,
        }
    }

    /// Sum of a list of equally-shaped batches with coefficients.
    pub fn combine(terms: &[(f64, &StateBatch)]) -> Self {
        let (c0, first) = terms[0];
        let mut out = first.scaled(c0);
        for &(c, b) in &terms[1..] {
            out.axpy(c, b);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &StateBatch) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Root-mean-square of per-row Euclidean norms.
    pub fn rms_norm(&self) -> f64 {
        (self.data.iter().map(|v| v * v).sum::<f64>() / self.n as f64).sqrt()
    }

    /// Per-coordinate sample mean.
    pub fn column_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for r in self.rows() {
            for (acc, v) in m.iter_mut().zip(r) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.n as f64);
        m
    }

    /// Per-coordinate unbiased sample variance.
    pub fn column_var(&self) -> Vec<f64> {
        let m = self.column_mean();
        let mut s = vec![0.0; self.d];
        for r in self.rows() {
            for ((acc, v), mu) in s.iter_mut().zip(r).zip(&m) {
                *acc += (v - mu) * (v - mu);
            }
        }
        let denom = (self.n.max(2) - 1) as f64;
        s.iter_mut().for_each(|v| *v /= denom);
        s
    }
}
