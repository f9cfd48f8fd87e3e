use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `h_n = s²/(s² + n²)` for `n = -(len-1)/2, …, (len-1)/2`.
pub fn impulse_response(scale: f64, length: usize) -> Result<Vec<f64>> {
    if length % 2 == 0 {
        return Err(Error::domain(format!(
            "impulse response length must be odd, got {length}"
        )));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::domain(format!(
            "impulse response scale must be positive, got {scale}"
        )));
    }
    let half = (length / 2) as i64;
    let s2 = scale * scale;
    Ok((-half..=half)
        .map(|n| {
            let n = n as f64;
            s2 / (s2 + n * n)
        })
        .collect())
}

/// Full-convolution matrix of size `(m + len(ir) - 1) × m`; column `k` holds `ir` starting at row `k`.
pub fn build_dictionary(ir: &[f64], m: usize) -> DMatrix<f64> {
    let n = m + ir.len() - 1;
    let mut h = DMatrix::zeros(n, m);
    for k in 0..m {
        for (i, &v) in ir.iter().enumerate() {
            h[(k + i, k)] = v;
        }
    }
    h
}

/// Impulse response generated from a scale, for dictionaries rebuilt during sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParametricIr {
    pub scale: f64,
    pub length: usize,
}

/// Data `y`, dictionary `H`, and the products the samplers reuse.
#[derive(Debug, Clone)]
pub struct Observation {
    y: DVector<f64>,
    h: DMatrix<f64>,
    ir: Option<ParametricIr>,
    gram: DMatrix<f64>,
    hty: DVector<f64>,
    yty: f64,
    /// Nonzero row range of each column, for sparse residual updates.
    col_support: Vec<(usize, usize)>,
}

impl Observation {
    pub fn new(y: DVector<f64>, h: DMatrix<f64>) -> Result<Self> {
        if y.is_empty() || h.ncols() == 0 {
            return Err(Error::domain("observation needs N >= 1 and M >= 1"));
        }
        if h.nrows() != y.len() {
            return Err(Error::domain(format!(
                "dictionary has {} rows but y has length {}",
                h.nrows(),
                y.len()
            )));
        }
        Ok(Self::assemble(y, h, None, None))
    }

    /// Observation whose dictionary is the full convolution of `h(scale)`; `M = N − len + 1`.
    pub fn parametric(y: DVector<f64>, ir: ParametricIr) -> Result<Self> {
        let taps = impulse_response(ir.scale, ir.length)?;
        if y.len() < ir.length {
            return Err(Error::domain(format!(
                "observation length {} is shorter than the impulse response {}",
                y.len(),
                ir.length
            )));
        }
        let m = y.len() - ir.length + 1;
        let h = build_dictionary(&taps, m);
        // Full convolution: HᵀH is Toeplitz with the autocorrelation of the taps.
        let lags: Vec<f64> = (0..taps.len())
            .map(|d| taps.iter().zip(&taps[d..]).map(|(a, b)| a * b).sum())
            .collect();
        let gram = DMatrix::from_fn(m, m, |i, j| lags.get(i.abs_diff(j)).copied().unwrap_or(0.0));
        Ok(Self::assemble(y, h, Some(ir), Some(gram)))
    }

    fn assemble(y: DVector<f64>, h: DMatrix<f64>, ir: Option<ParametricIr>, gram: Option<DMatrix<f64>>) -> Self {
        let gram = gram.unwrap_or_else(|| h.tr_mul(&h));
        let yty = y.dot(&y);
        let col_support: Vec<(usize, usize)> = (0..h.ncols())
            .map(|k| {
                let col = h.column(k);
                let first = col.iter().position(|&v| v != 0.0).unwrap_or(0);
                let last = col.iter().rposition(|&v| v != 0.0).map_or(0, |i| i + 1);
                (first, last.max(first))
            })
            .collect();
        let hty = DVector::from_fn(h.ncols(), |k, _| {
            let (lo, hi) = col_support[k];
            (lo..hi).map(|i| h[(i, k)] * y[i]).sum()
        });
        Self {
            y,
            h,
            ir,
            gram,
            hty,
            yty,
            col_support,
        }
    }

    /// Same data, dictionary regenerated for a new impulse-response scale.
    pub fn with_ir_scale(&self, scale: f64) -> Result<Self> {
        let ir = self
            .ir
            .ok_or_else(|| Error::Config("dictionary is not parametric".into()))?;
        Self::parametric(
            self.y.clone(),
            ParametricIr {
                scale,
                length: ir.length,
            },
        )
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn m(&self) -> usize {
        self.h.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn ir(&self) -> Option<ParametricIr> {
        self.ir
    }

    /// `HᵀH`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `Hᵀy`.
    pub fn hty(&self) -> &DVector<f64> {
        &self.hty
    }

    pub fn yty(&self) -> f64 {
        self.yty
    }

    /// Row range `[start, end)` outside which column `k` is zero.
    pub fn column_support(&self, k: usize) -> (usize, usize) {
        self.col_support[k]
    }

    /// `y − Hx`.
    pub fn residual(&self, x: &[f64]) -> DVector<f64> {
        let mut r = self.y.clone();
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                let (lo, hi) = self.col_support[k];
                for i in lo..hi {
                    r[i] -= self.h[(i, k)] * xk;
                }
            }
        }
        r
    }
}
