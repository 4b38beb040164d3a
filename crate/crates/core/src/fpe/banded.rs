//! Square band matrix with an in-place LU factorization.
//!
//! The step matrices are column diagonally dominant M-matrices, so Gaussian
//! elimination without pivoting is stable and keeps all fill-in inside the band.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    dim: usize,
    half_width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(dim: usize, half_width: usize) -> Self {
        Self {
            dim,
            half_width,
            data: vec![0.0; dim * (2 * half_width + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    #[inline]
    fn offset(&self, row: usize, col: usize) -> Option<usize> {
        let w = self.half_width;
        if row >= self.dim || col >= self.dim || col + w < row || col > row + w {
            return None;
        }
        Some(row * (2 * w + 1) + col + w - row)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.offset(row, col).map_or(0.0, |o| self.data[o])
    }

    /// Adds to an entry. Panics outside the band.
    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        let o = self
            .offset(row, col)
            .unwrap_or_else(|| panic!("entry ({row}, {col}) outside band {}", self.half_width));
        self.data[o] += value;
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    fn cols(&self, row: usize) -> std::ops::Range<usize> {
        row.saturating_sub(self.half_width)..(row + self.half_width + 1).min(self.dim)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|r| self.cols(r).map(|c| self.get(r, c) * x[c]).sum())
            .collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.dim];
        for r in 0..self.dim {
            for c in self.cols(r) {
                sums[c] += self.get(r, c);
            }
        }
        sums
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|r| (0..self.dim).map(|c| self.get(r, c)).collect())
            .collect()
    }

    /// Solves `A x = rhs`, consuming the matrix.
    pub fn solve(mut self, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.dim);
        let n = self.dim;
        let w = self.half_width;
        let stride = 2 * w + 1;
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tiny = scale * f64::EPSILON * n as f64;

        for k in 0..n {
            let pivot = self.data[k * stride + w];
            if !(pivot.abs() > tiny) {
                return Err(Error::SingularSystem { row: k });
            }
            let last = (k + w).min(n - 1);
            let len = last - k;
            for r in k + 1..=last {
                let rk = r * stride + k + w - r;
                let l = self.data[rk] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[rk] = l;
                // row r minus l times row k over columns k+1..=last
                let (head, tail) = self.data.split_at_mut(r * stride);
                let pivot_row = &head[k * stride + w + 1..k * stride + w + 1 + len];
                let start = k + 1 + w - r;
                for (x, y) in tail[start..start + len].iter_mut().zip(pivot_row) {
                    *x -= l * y;
                }
            }
        }

        let mut x = rhs.to_vec();
        for r in 0..n {
            let start = r.saturating_sub(w);
            let mut s = x[r];
            for c in start..r {
                s -= self.data[r * stride + c + w - r] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let end = (r + w).min(n - 1);
            let mut s = x[r];
            for c in r + 1..=end {
                s -= self.data[r * stride + c + w - r] * x[c];
            }
            x[r] = s / self.data[r * stride + w];
        }
        Ok(x)
    }
}
