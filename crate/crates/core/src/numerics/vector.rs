//! Dense real vectors and deterministic reductions.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Block length below which sums are accumulated sequentially.
const PAIRWISE_BLOCK: usize = 128;

/// Dense vector of `f64`; carries iterates, gradients and messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RealVector(Vec<f64>);

impl RealVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn from_vec(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    /// Number of nonzero entries.
    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dot: dimension mismatch");
        dot(&self.0, &other.0)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance_sq(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "distance: dimension mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.distance_sq(other).sqrt()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "axpy: dimension mismatch");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.axpy(1.0, other);
    }

    pub fn sub_assign(&mut self, other: &Self) {
        self.axpy(-1.0, other);
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.0 {
            *a *= factor;
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scale(factor);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.sub_assign(other);
        out
    }

    pub fn neg(&self) -> Self {
        self.scaled(-1.0)
    }

    /// Checked subtraction for public entry points that must not panic.
    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.sub(other))
    }
}

impl Index<usize> for RealVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for RealVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<Vec<f64>> for RealVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[f64; N]> for RealVector {
    fn from(v: [f64; N]) -> Self {
        Self(v.to_vec())
    }
}

impl AsRef<[f64]> for RealVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pairwise (cascade) summation; error grows as O(log n) rather than O(n).
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sum of `len` vectors produced by `term(i, out)`, reduced pairwise over
/// fixed-size blocks. `term` must add its contribution into `out`.
///
/// The reduction tree depends only on `len`, so results are reproducible.
pub fn pairwise_vector_sum<F>(dim: usize, len: usize, term: &mut F) -> RealVector
where
    F: FnMut(usize, &mut [f64]),
{
    fn recurse<F: FnMut(usize, &mut [f64])>(
        dim: usize,
        lo: usize,
        hi: usize,
        term: &mut F,
    ) -> Vec<f64> {
        if hi - lo <= PAIRWISE_BLOCK {
            let mut acc = vec![0.0; dim];
            for i in lo..hi {
                term(i, &mut acc);
            }
            return acc;
        }
        let mid = lo + (hi - lo) / 2;
        let mut left = recurse(dim, lo, mid, term);
        let right = recurse(dim, mid, hi, term);
        for (a, b) in left.iter_mut().zip(&right) {
            *a += b;
        }
        left
    }
    RealVector(recurse(dim, 0, len, term))
}

/// Arithmetic mean of equal-length vectors.
pub fn mean(vs: &[RealVector]) -> Result<RealVector> {
    let first = vs.first().ok_or(Error::EmptyInput)?;
    let dim = first.dim();
    for v in vs {
        check_dim(dim, v.dim())?;
    }
    let mut out = pairwise_vector_sum(dim, vs.len(), &mut |i, acc| {
        for (a, b) in acc.iter_mut().zip(&vs[i].0) {
            *a += b;
        }
    });
    out.scale(1.0 / vs.len() as f64);
    Ok(out)
}

/// Mean squared distance over ordered pairs, `1/(m(m-1)) * sum_{i != l} |v_i - v_l|^2`.
///
/// Evaluated through the identity `sum_{i,l} |v_i - v_l|^2 = 2m * sum_i |v_i - mean|^2`.
pub fn squared_distance_mean(vs: &[RealVector]) -> Result<f64> {
    if vs.len() < 2 {
        return Err(Error::TooFewVectors {
            needed: 2,
            actual: vs.len(),
        });
    }
    let m = vs.len() as f64;
    let centre = mean(vs)?;
    let spread: Vec<f64> = vs.iter().map(|v| v.distance_sq(&centre)).collect();
    Ok(2.0 * m * pairwise_sum(&spread) / (m * (m - 1.0)))
}
