//! Interpolant draws and the square-loss regression objective.
//!
//! For a pair `(x0, x1)`, a time `s` and a standard normal `z`,
//!
//! ```text
//! I_s = alpha_s x0 + beta_s x1 + sqrt(s) sigma_s z
//! R_s = alpha'_s x0 + beta'_s x1 + sqrt(s) sigma'_s z
//! ```
//!
//! and the drift is the least-squares regression of `R_s` on `(I_s, x0)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::exec;
use crate::field::DriftField;
use crate::rng::{fill_normal, Streams};
use crate::schedules::{Coefficients, Schedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePair {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
}

impl SamplePair {
    pub fn new(x0: Vec<f64>, x1: Vec<f64>) -> Result<Self> {
        check_dim(x0.len(), x1.len())?;
        Ok(Self { x0, x1 })
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterpolantDraw {
    pub s: f64,
    pub z: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
}

/// Write `I_s` and `R_s` for precomputed coefficients at `s`.
pub(crate) fn draw_into(c: &Coefficients, s: f64, x0: &[f64], x1: &[f64], z: &[f64], i: &mut [f64], r: &mut [f64]) {
    let rs = s.sqrt();
    for k in 0..x0.len() {
        i[k] = c.alpha * x0[k] + c.beta * x1[k] + rs * c.sigma * z[k];
        r[k] = c.alpha_dot * x0[k] + c.beta_dot * x1[k] + rs * c.sigma_dot * z[k];
    }
}

pub fn draw(sched: &Schedule, pair: &SamplePair, s: f64, z: &[f64]) -> Result<InterpolantDraw> {
    check_dim(pair.x0.len(), pair.x1.len())?;
    check_dim(pair.x0.len(), z.len())?;
    let c = sched.eval(s)?;
    let d = pair.dim();
    let (mut i, mut r) = (vec![0.0; d], vec![0.0; d]);
    draw_into(&c, s, &pair.x0, &pair.x1, z, &mut i, &mut r);
    Ok(InterpolantDraw { s, z: z.to_vec(), i, r })
}

/// Per-sample `s ~ U[0,1]` and `z ~ N(0, I)` for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LossDraws {
    pub s: Vec<f64>,
    pub z: Vec<Vec<f64>>,
}

impl LossDraws {
    /// One fresh `(s, z)` per sample, sample `k` from stream `k`.
    pub fn sample(streams: &Streams, n: usize, d: usize) -> Self {
        let pairs = exec::map_range(n, |k| {
            let mut rng = streams.stream(k as u64);
            let s: f64 = rng.random();
            let mut z = vec![0.0; d];
            fill_normal(&mut rng, &mut z);
            (s, z)
        });
        let (s, z) = pairs.into_iter().unzip();
        Self { s, z }
    }
}

/// Per-sample squared residuals `|b(I_k, x0_k) - R_k|^2`.
pub fn loss_terms(
    sched: &Schedule,
    drift: &(impl DriftField + ?Sized),
    batch: &[SamplePair],
    s_draws: &[f64],
    z_draws: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Empty("loss batch"));
    }
    check_dim(batch.len(), s_draws.len())?;
    check_dim(batch.len(), z_draws.len())?;
    let d = drift.dim();
    for (p, z) in batch.iter().zip(z_draws) {
        check_dim(d, p.x0.len())?;
        check_dim(d, p.x1.len())?;
        check_dim(d, z.len())?;
    }
    let chunks = exec::map_chunks(batch.len(), 512, |range| -> Result<Vec<f64>> {
        let (mut i, mut r, mut b) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut out = Vec::with_capacity(range.len());
        for k in range {
            let s = s_draws[k];
            let c = sched.eval(s)?;
            draw_into(&c, s, &batch[k].x0, &batch[k].x1, &z_draws[k], &mut i, &mut r);
            drift.drift_into(s, &i, &batch[k].x0, &mut b)?;
            out.push(b.iter().zip(&r).map(|(bi, ri)| (bi - ri) * (bi - ri)).sum());
        }
        Ok(out)
    });
    let mut terms = Vec::with_capacity(batch.len());
    for c in chunks {
        terms.extend(c?);
    }
    Ok(terms)
}

/// `(1/K') sum_k |b(I_k, x0_k) - R_k|^2`.
pub fn empirical_loss(
    sched: &Schedule,
    drift: &(impl DriftField + ?Sized),
    batch: &[SamplePair],
    s_draws: &[f64],
    z_draws: &[Vec<f64>],
) -> Result<f64> {
    let terms = loss_terms(sched, drift, batch, s_draws, z_draws)?;
    Ok(exec::pairwise_sum(&terms) / terms.len() as f64)
}

/// Mean and standard error of a sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl MeanEstimate {
    pub fn from_samples(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = exec::pairwise_sum(v) / n;
        let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if v.len() > 1 { exec::pairwise_sum(&dev) / (n - 1.0) } else { 0.0 };
        Self {
            mean,
            std_error: (var / n).sqrt(),
        }
    }
}
