//! Single-level Haar wavelet and DCT-II transforms.
//!
//! The Haar step is a stride-2 cross-correlation with the kernels
//! `[1/√2, 1/√2]` (approximation) and `[-1/√2, 1/√2]` (detail). Only the
//! approximation half feeds the forecaster; the detail half is kept here so the
//! transform can be inverted in tests.
//!
//! The DCT-II follows the unnormalized definition
//! `X[k] = Σ x[n]·cos(π(n + ½)k / N)`, evaluated as a direct `N × N` product.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{HadlError, Result};
use crate::tensor::Tensor3;

/// Approximation and detail halves of a one-level Haar decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarPair {
    pub approx: Vec<f64>,
    pub detail: Vec<f64>,
}

impl HaarPair {
    /// Inverts the decomposition.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.approx.len() * 2);
        for (&a, &d) in self.approx.iter().zip(&self.detail) {
            out.push((a - d) * FRAC_1_SQRT_2);
            out.push((a + d) * FRAC_1_SQRT_2);
        }
        out
    }
}

fn check_haar_len(n: usize) -> Result<()> {
    if n < 2 {
        return Err(HadlError::TooShort(n));
    }
    if n % 2 != 0 {
        return Err(HadlError::OddLength(n));
    }
    Ok(())
}

pub fn haar_forward(x: &[f64]) -> Result<HaarPair> {
    check_haar_len(x.len())?;
    let (approx, detail) = x
        .chunks_exact(2)
        .map(|p| ((p[0] + p[1]) * FRAC_1_SQRT_2, (p[1] - p[0]) * FRAC_1_SQRT_2))
        .unzip();
    Ok(HaarPair { approx, detail })
}

/// Approximation coefficients only, written into `out` (length `x.len() / 2`).
pub(crate) fn haar_approx_into(x: &[f64], out: &mut [f64]) {
    for (o, p) in out.iter_mut().zip(x.chunks_exact(2)) {
        *o = (p[0] + p[1]) * FRAC_1_SQRT_2;
    }
}

/// Haar approximation along the last axis of every `(batch, channel)` row.
/// Detail coefficients are dropped.
pub fn haar_batch(x: &Tensor3) -> Result<Tensor3> {
    check_haar_len(x.len())?;
    x.map_rows(x.len() / 2, |row, out| {
        haar_approx_into(row, out);
        Ok(())
    })
}

/// Precomputed DCT-II basis, optionally pre-multiplied by a scale factor.
#[derive(Debug, Clone)]
pub struct DctPlan {
    n: usize,
    scale: f64,
    // basis[k * n + i] = scale · cos(π(i + ½)k / n)
    basis: Vec<f64>,
}

impl DctPlan {
    pub fn new(n: usize, scale: f64) -> Result<Self> {
        if n == 0 {
            return Err(HadlError::Empty("DCT input"));
        }
        let period = 4 * n;
        let mut basis = Vec::with_capacity(n * n);
        for k in 0..n {
            for i in 0..n {
                // cos(π(2i+1)k / 2n); reduce the integer phase mod 4n first so
                // large k·i do not lose precision in the argument.
                let phase = ((2 * i + 1) * k) % period;
                basis.push(scale * (PI * phase as f64 / (2 * n) as f64).cos());
            }
        }
        Ok(Self { n, scale, basis })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (k, o) in out.iter_mut().enumerate() {
            let b = &self.basis[k * self.n..(k + 1) * self.n];
            *o = b.iter().zip(x).map(|(c, v)| c * v).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(HadlError::ShapeMismatch(format!(
                "DCT plan of length {} applied to length {}",
                self.n,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.n];
        self.apply_into(x, &mut out);
        Ok(out)
    }
}

/// Unnormalized DCT-II.
pub fn dct2_raw(x: &[f64]) -> Result<Vec<f64>> {
    DctPlan::new(x.len(), 1.0)?.apply(x)
}

/// Frequency coefficients together with the normalization that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub coeffs: Tensor3,
    pub scale: f64,
}

/// `(2/L) · DCT-II` along the last axis, where the rows are Haar
/// approximations of a length-`lookback` window (so `N = L/2`).
pub fn dct2_scaled(a: &Tensor3, lookback: usize) -> Result<Spectrum> {
    if lookback == 0 || a.len() * 2 != lookback {
        return Err(HadlError::ShapeMismatch(format!(
            "scaled DCT expects rows of length lookback/2 = {}, got {}",
            lookback / 2,
            a.len()
        )));
    }
    let scale = 2.0 / lookback as f64;
    let plan = DctPlan::new(a.len(), scale)?;
    let coeffs = a.map_rows(a.len(), |row, out| {
        plan.apply_into(row, out);
        Ok(())
    })?;
    Ok(Spectrum { coeffs, scale })
}

/// Orthonormal DCT-II; preserves the Euclidean norm.
pub fn dct2_orthonormal(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    let mut y = dct2_raw(x)?;
    let s = (2.0 / n as f64).sqrt();
    for (k, v) in y.iter_mut().enumerate() {
        *v *= if k == 0 { s * FRAC_1_SQRT_2 } else { s };
    }
    Ok(y)
}

/// Sum of squares.
pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}
