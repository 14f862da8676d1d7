//! 2-D FFT helper, enstrophy spectrum and spectral downsampling for square
//! periodic fields on `[0, 2 pi)^2`, stored row-major with `x` along rows
//! (index `i * n + j` is `y_i, x_j`).

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Forward/inverse unnormalized 2-D transforms of an `n x n` grid.
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        Self {
            n,
            fwd: p.plan_fft_forward(n),
            inv: p.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn apply(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        let n = self.n;
        plan.process(data);
        transpose(data, n);
        plan.process(data);
        transpose(data, n);
    }

    /// `sum_x f(x) e^{-i m . x}` (no normalization).
    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(&self.fwd, data);
    }

    /// `sum_m F(m) e^{+i m . x}` (no normalization).
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(&self.inv, data);
    }

    /// Normalized coefficients `(1/n^2) sum_x f(x) e^{-i m . x}`.
    pub fn coefficients(&self, field: &[f64]) -> Vec<Complex64> {
        let scale = 1.0 / (self.n * self.n) as f64;
        let mut c: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut c);
        c.iter_mut().for_each(|v| *v *= scale);
        c
    }

    /// Real part of the inverse of normalized coefficients.
    pub fn synthesize(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut c = coeffs.to_vec();
        self.inverse(&mut c);
        c.iter().map(|v| v.re).collect()
    }
}

fn transpose(a: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            a.swap(i * n + j, j * n + i);
        }
    }
}

/// Signed integer wavenumber of FFT index `i` on an `n`-point grid.
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

fn side(len: usize) -> Result<usize> {
    let n = (len as f64).sqrt().round() as usize;
    if n * n != len || n == 0 {
        return Err(Error::Dimension { expected: n * n, got: len });
    }
    Ok(n)
}

/// `E(k) = sum over k <= |m| < k + 1 of |w_hat(m)|^2` with normalized
/// coefficients; entry `k` of the result is shell `k`.
pub fn enstrophy_spectrum(field: &[f64]) -> Result<Vec<f64>> {
    let n = side(field.len())?;
    let c = Fft2::new(n).coefficients(field);
    let kmax = ((2.0f64).sqrt() * (n / 2) as f64).floor() as usize + 1;
    let mut shells = vec![0.0; kmax + 1];
    for i in 0..n {
        let my = wavenumber(i, n) as f64;
        for j in 0..n {
            let mx = wavenumber(j, n) as f64;
            let k = (mx * mx + my * my).sqrt().floor() as usize;
            shells[k] += c[i * n + j].norm_sqr();
        }
    }
    Ok(shells)
}

/// Spectral truncation of an `n x n` field to `m x m` (`m <= n`, even).
/// Modes with `|k| < m / 2` in both directions are kept.
pub fn downsample(field: &[f64], m: usize) -> Result<Vec<f64>> {
    let n = side(field.len())?;
    if m == 0 || m > n || m % 2 != 0 {
        return Err(Error::Config(format!("cannot truncate a {n}-grid to {m}")));
    }
    let c = Fft2::new(n).coefficients(field);
    let half = (m / 2) as i64;
    let mut out = vec![Complex64::new(0.0, 0.0); m * m];
    for i in 0..n {
        let ky = wavenumber(i, n);
        if ky.abs() >= half {
            continue;
        }
        for j in 0..n {
            let kx = wavenumber(j, n);
            if kx.abs() >= half {
                continue;
            }
            let (a, b) = (ky.rem_euclid(m as i64) as usize, kx.rem_euclid(m as i64) as usize);
            out[a * m + b] = c[i * n + j];
        }
    }
    Ok(Fft2::new(m).synthesize(&out))
}
