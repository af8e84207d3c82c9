//! Dense row-major containers used throughout the pipeline.
//!
//! These are deliberately small: the model is a single linear map, so the only
//! heavy operation is matrix multiplication, and all loops run in a fixed order
//! so results are bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{HadlError, Result};

/// Row-major 2-D matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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
            return Err(HadlError::ShapeMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
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

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(HadlError::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`, without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(HadlError::ShapeMismatch(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for n in 0..self.rows {
            let a_row = self.row(n);
            let b_row = other.row(n);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(HadlError::ShapeMismatch(format!(
                "cannot multiply {}x{} by ({}x{})ᵀ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                let b_row = other.row(j);
                out.data[i * other.rows + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Sums each column over all rows.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }
}

/// Row-major `batch × channels × len` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    batch: usize,
    channels: usize,
    len: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Self {
            batch,
            channels,
            len,
            data: vec![0.0; batch * channels * len],
        }
    }

    pub fn from_vec(batch: usize, channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * channels * len {
            return Err(HadlError::ShapeMismatch(format!(
                "{} values cannot fill a {batch}x{channels}x{len} tensor",
                data.len()
            )));
        }
        Ok(Self {
            batch,
            channels,
            len,
            data,
        })
    }

    /// Wraps a single vector as a `1 × 1 × n` tensor.
    pub fn from_row(row: &[f64]) -> Self {
        Self {
            batch: 1,
            channels: 1,
            len: row.len(),
            data: row.to_vec(),
        }
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.batch
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.len)
    }

    /// Number of `(batch, channel)` rows.
    pub fn n_rows(&self) -> usize {
        self.batch * self.channels
    }

    #[inline]
    pub fn row(&self, b: usize, c: usize) -> &[f64] {
        let start = (b * self.channels + c) * self.len;
        &self.data[start..start + self.len]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let start = (b * self.channels + c) * self.len;
        &mut self.data[start..start + self.len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.len.max(1)).take(self.n_rows())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Views the tensor as a `(batch·channels) × len` matrix.
    pub fn to_matrix(&self) -> Matrix {
        Matrix {
            rows: self.n_rows(),
            cols: self.len,
            data: self.data.clone(),
        }
    }

    pub fn from_matrix(m: Matrix, batch: usize, channels: usize) -> Result<Self> {
        if m.rows != batch * channels {
            return Err(HadlError::ShapeMismatch(format!(
                "{} rows cannot be split into {batch}x{channels}",
                m.rows
            )));
        }
        Ok(Self {
            batch,
            channels,
            len: m.cols,
            data: m.data,
        })
    }

    /// Applies `f` to every row, producing rows of length `out_len`.
    pub fn map_rows(
        &self,
        out_len: usize,
        mut f: impl FnMut(&[f64], &mut [f64]) -> Result<()>,
    ) -> Result<Tensor3> {
        let mut out = Tensor3::zeros(self.batch, self.channels, out_len);
        for b in 0..self.batch {
            for c in 0..self.channels {
                f(self.row(b, c), out.row_mut(b, c))?;
            }
        }
        Ok(out)
    }
}
