//! Closed-form drift, score and time-`s` marginal when the conditional target
//! is a Gaussian mixture.
//!
//! With `x1 | x0 ~ sum_j p_j N(m_j, C_j)`, the interpolant `I_s | x0` is the
//! mixture with means `alpha_s x0 + beta_s m_j` and covariances
//! `beta_s^2 C_j + s sigma_s^2 I`. Responsibilities are computed in log space
//! and every covariance solve goes through a Cholesky factor, since the
//! marginal covariances collapse to zero as `s -> 0`.

use std::borrow::Cow;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::field::DriftField;
use crate::rng::normal;
use crate::schedules::Schedule;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Lower Cholesky factor (row-major) of a symmetric positive-definite matrix.
fn cholesky(c: &[f64], d: usize) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(d, d, c);
    let l = m.cholesky()?.l();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            out[i * d + j] = l[(i, j)];
        }
    }
    Some(out)
}

/// Solve `L L^T u = y` in place; returns `y^T u`.
fn chol_solve(l: &[f64], d: usize, y: &[f64], u: &mut [f64]) -> f64 {
    // forward: L w = y
    for i in 0..d {
        let mut acc = y[i];
        for j in 0..i {
            acc -= l[i * d + j] * u[j];
        }
        u[i] = acc / l[i * d + i];
    }
    let quad: f64 = u[..d].iter().map(|w| w * w).sum();
    // backward: L^T u = w
    for i in (0..d).rev() {
        let mut acc = u[i];
        for j in i + 1..d {
            acc -= l[j * d + i] * u[j];
        }
        u[i] = acc / l[i * d + i];
    }
    quad
}

fn chol_logdet(l: &[f64], d: usize) -> f64 {
    (0..d).map(|i| 2.0 * l[i * d + i].ln()).sum()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawGmm {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<f64>>,
}

/// Gaussian mixture `sum_j p_j N(m_j, C_j)`; covariances are row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawGmm", into = "RawGmm")]
pub struct GmmSpec {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<f64>>,
    chol: Vec<Vec<f64>>,
}

impl PartialEq for GmmSpec {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights && self.means == other.means && self.covariances == other.covariances
    }
}

impl TryFrom<RawGmm> for GmmSpec {
    type Error = Error;
    fn try_from(raw: RawGmm) -> Result<Self> {
        GmmSpec::new(raw.weights, raw.means, raw.covariances)
    }
}

impl From<GmmSpec> for RawGmm {
    fn from(g: GmmSpec) -> Self {
        RawGmm {
            weights: g.weights,
            means: g.means,
            covariances: g.covariances,
        }
    }
}

impl GmmSpec {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<Vec<f64>>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidMixture(m));
        let j = weights.len();
        if j == 0 {
            return bad("at least one component is required".into());
        }
        if means.len() != j || covariances.len() != j {
            return bad(format!("{j} weights but {} means and {} covariances", means.len(), covariances.len()));
        }
        let d = means[0].len();
        if d == 0 {
            return bad("dimension must be positive".into());
        }
        if weights.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return bad("weights must be nonnegative".into());
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("weights sum to {total}, not 1"));
        }
        let mut chol = Vec::with_capacity(j);
        for (k, (m, c)) in means.iter().zip(&covariances).enumerate() {
            if m.len() != d || c.len() != d * d {
                return bad(format!("component {k} has inconsistent dimensions"));
            }
            if m.iter().chain(c).any(|v| !v.is_finite()) {
                return bad(format!("component {k} has non-finite entries"));
            }
            for a in 0..d {
                for b in 0..a {
                    if (c[a * d + b] - c[b * d + a]).abs() > 1e-12 {
                        return bad(format!("covariance {k} is not symmetric"));
                    }
                }
            }
            let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, c));
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(min > 0.0) {
                return bad(format!("covariance {k} is not positive definite (min eigenvalue {min})"));
            }
            chol.push(cholesky(c, d).ok_or_else(|| Error::InvalidMixture(format!("covariance {k} has no Cholesky factor")))?);
        }
        Ok(Self {
            weights,
            means,
            covariances,
            chol,
        })
    }

    /// Mixture of `n` copies of `N(mean, cov)` rotated by `2 pi k / n` in the
    /// plane, with equal weights.
    pub fn rotated_modes(mean: [f64; 2], cov: [[f64; 2]; 2], n: usize) -> Result<Self> {
        let mut means = Vec::with_capacity(n);
        let mut covs = Vec::with_capacity(n);
        for k in 0..n {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let (s, c) = th.sin_cos();
            let r = [[c, -s], [s, c]];
            means.push(vec![r[0][0] * mean[0] + r[0][1] * mean[1], r[1][0] * mean[0] + r[1][1] * mean[1]]);
            // R C R^T
            let mut rc = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    rc[a][b] = (0..2).map(|t| r[a][t] * cov[t][b]).sum();
                }
            }
            let mut m = vec![0.0; 4];
            for a in 0..2 {
                for b in 0..2 {
                    m[a * 2 + b] = (0..2).map(|t| rc[a][t] * r[b][t]).sum();
                }
            }
            // exact symmetry
            let off = 0.5 * (m[1] + m[2]);
            m[1] = off;
            m[2] = off;
            covs.push(m);
        }
        Self::new(vec![1.0 / n as f64; n], means, covs)
    }

    /// The five-mode planar mixture: `N([5,0], diag(1.5, 0.1))` and its
    /// rotations by multiples of `2 pi / 5`.
    pub fn five_mode() -> Self {
        Self::rotated_modes([5.0, 0.0], [[1.5, 0.0], [0.0, 0.1]], 5).expect("builtin mixture is valid")
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[Vec<f64>] {
        &self.covariances
    }

    /// Overall mixture mean.
    pub fn mean(&self) -> Vec<f64> {
        mixture_mean(&self.weights, &self.means)
    }

    /// Overall mixture covariance (row-major).
    pub fn covariance(&self) -> Vec<f64> {
        mixture_cov(&self.weights, &self.means, &self.covariances)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let j = pick(&self.weights, rng.random());
        gaussian_draw(&self.means[j], &self.chol[j], rng)
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut u = vec![0.0; d];
        let mut y = vec![0.0; d];
        let logs: Vec<f64> = (0..self.n_components())
            .map(|j| {
                for k in 0..d {
                    y[k] = x[k] - self.means[j][k];
                }
                let quad = chol_solve(&self.chol[j], d, &y, &mut u);
                self.weights[j].ln() - 0.5 * (quad + chol_logdet(&self.chol[j], d) + d as f64 * LN_2PI)
            })
            .collect();
        log_sum_exp(&logs)
    }

    /// `grad log rho(x)`.
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let slice = TimeSlice::from_parts(self, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0)?;
        let mut out = vec![0.0; self.dim()];
        let zero = vec![0.0; self.dim()];
        slice.score_into(1.0, x, &zero, &mut out)?;
        Ok(out)
    }
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return j;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn gaussian_draw(mean: &[f64], l: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let d = mean.len();
    let z: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    (0..d)
        .map(|i| mean[i] + (0..=i).map(|j| l[i * d + j] * z[j]).sum::<f64>())
        .collect()
}

fn mixture_mean(weights: &[f64], means: &[Vec<f64>]) -> Vec<f64> {
    let d = means[0].len();
    let mut m = vec![0.0; d];
    for (w, mj) in weights.iter().zip(means) {
        for k in 0..d {
            m[k] += w * mj[k];
        }
    }
    m
}

fn mixture_cov(weights: &[f64], means: &[Vec<f64>], covs: &[Vec<f64>]) -> Vec<f64> {
    let d = means[0].len();
    let m = mixture_mean(weights, means);
    let mut c = vec![0.0; d * d];
    for ((w, mj), cj) in weights.iter().zip(means).zip(covs) {
        for a in 0..d {
            for b in 0..d {
                c[a * d + b] += w * (cj[a * d + b] + (mj[a] - m[a]) * (mj[b] - m[b]));
            }
        }
    }
    c
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Time-`s` law of `I_s | x0`: component means, covariances and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmMarginal {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
}

impl GmmMarginal {
    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn mean(&self) -> Vec<f64> {
        mixture_mean(&self.weights, &self.means)
    }

    pub fn covariance(&self) -> Vec<f64> {
        mixture_cov(&self.weights, &self.means, &self.covariances)
    }

    /// Sampler with precomputed factors; degenerate (zero) covariances draw
    /// the mean.
    pub fn sampler(&self) -> MarginalSampler {
        let d = self.dim();
        let chol = self
            .covariances
            .iter()
            .map(|c| {
                if c.iter().all(|v| *v == 0.0) {
                    vec![0.0; d * d]
                } else {
                    cholesky(c, d).expect("marginal covariance is positive definite for s > 0")
                }
            })
            .collect();
        MarginalSampler {
            marginal: self.clone(),
            chol,
        }
    }
}

pub struct MarginalSampler {
    marginal: GmmMarginal,
    chol: Vec<Vec<f64>>,
}

impl MarginalSampler {
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let j = pick(&self.marginal.weights, rng.random());
        gaussian_draw(&self.marginal.means[j], &self.chol[j], rng)
    }
}

pub fn gmm_marginal(spec: &GmmSpec, sched: &Schedule, s: f64, x0: &[f64]) -> Result<GmmMarginal> {
    check_dim(spec.dim(), x0.len())?;
    let c = sched.eval(s)?;
    let d = spec.dim();
    let means = spec
        .means
        .iter()
        .map(|m| (0..d).map(|k| c.alpha * x0[k] + c.beta * m[k]).collect())
        .collect();
    let covariances = spec
        .covariances
        .iter()
        .map(|cj| {
            let mut out: Vec<f64> = cj.iter().map(|v| c.beta * c.beta * v).collect();
            for k in 0..d {
                out[k * d + k] += s * c.sigma * c.sigma;
            }
            out
        })
        .collect();
    Ok(GmmMarginal {
        weights: spec.weights.clone(),
        means,
        covariances,
    })
}

/// A mixture target that may depend on the conditioning state.
pub trait ConditionalGmm: Sync + Send {
    fn dim(&self) -> usize;
    fn target(&self, x0: &[f64]) -> Cow<'_, GmmSpec>;
    /// True when `target` ignores `x0`, which lets batch evaluation share work.
    fn is_constant(&self) -> bool {
        false
    }
}

impl ConditionalGmm for GmmSpec {
    fn dim(&self) -> usize {
        GmmSpec::dim(self)
    }
    fn target(&self, _x0: &[f64]) -> Cow<'_, GmmSpec> {
        Cow::Borrowed(self)
    }
    fn is_constant(&self) -> bool {
        true
    }
}

/// Closure-backed `x0 -> GmmSpec` map.
pub struct GmmFn<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> GmmSpec + Sync + Send> GmmFn<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> GmmSpec + Sync + Send> ConditionalGmm for GmmFn<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn target(&self, x0: &[f64]) -> Cow<'_, GmmSpec> {
        Cow::Owned((self.f)(x0))
    }
}

/// Everything about the marginal at one `s` that does not depend on `x0`.
struct TimeSlice<'a> {
    spec: &'a GmmSpec,
    d: usize,
    alpha: f64,
    beta: f64,
    alpha_dot: f64,
    beta_dot: f64,
    /// `s sigma sigma'`
    noise_rate: f64,
    chol: Vec<Vec<f64>>,
    logdet: Vec<f64>,
}

impl<'a> TimeSlice<'a> {
    fn new(spec: &'a GmmSpec, sched: &Schedule, s: f64) -> Result<Self> {
        let c = sched.eval(s)?;
        Self::from_parts(spec, s, c.alpha, c.beta, c.sigma, c.alpha_dot, c.beta_dot, c.sigma_dot)
    }

    #[allow(clippy::too_many_arguments)]
    fn from_parts(
        spec: &'a GmmSpec,
        s: f64,
        alpha: f64,
        beta: f64,
        sigma: f64,
        alpha_dot: f64,
        beta_dot: f64,
        sigma_dot: f64,
    ) -> Result<Self> {
        let d = spec.dim();
        let mut chol = Vec::with_capacity(spec.n_components());
        let mut logdet = Vec::with_capacity(spec.n_components());
        for (j, cj) in spec.covariances.iter().enumerate() {
            let mut cbar: Vec<f64> = cj.iter().map(|v| beta * beta * v).collect();
            for k in 0..d {
                cbar[k * d + k] += s * sigma * sigma;
            }
            let l = if beta == 1.0 && s * sigma * sigma == 0.0 {
                spec.chol[j].clone()
            } else {
                cholesky(&cbar, d).ok_or(Error::Singular { what: "marginal covariance", s })?
            };
            logdet.push(chol_logdet(&l, d));
            chol.push(l);
        }
        Ok(Self {
            spec,
            d,
            alpha,
            beta,
            alpha_dot,
            beta_dot,
            noise_rate: s * sigma * sigma_dot,
            chol,
            logdet,
        })
    }

    /// Responsibilities and `C_bar_j^{-1} (x - m_bar_j)` for each component.
    fn posterior(&self, s: f64, x: &[f64], x0: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let d = self.d;
        let j_n = self.spec.n_components();
        let mut logs = Vec::with_capacity(j_n);
        let mut solved = Vec::with_capacity(j_n);
        let mut y = vec![0.0; d];
        for j in 0..j_n {
            let m = &self.spec.means[j];
            for k in 0..d {
                y[k] = x[k] - (self.alpha * x0[k] + self.beta * m[k]);
            }
            let mut u = vec![0.0; d];
            let quad = chol_solve(&self.chol[j], d, &y, &mut u);
            let p = self.spec.weights[j];
            logs.push(if p > 0.0 {
                p.ln() - 0.5 * (quad + self.logdet[j])
            } else {
                f64::NEG_INFINITY
            });
            solved.push(u);
        }
        let lse = log_sum_exp(&logs);
        if !lse.is_finite() {
            return Err(Error::WeightUnderflow { s, x: x.to_vec() });
        }
        let w = logs.iter().map(|l| (l - lse).exp()).collect();
        Ok((w, solved))
    }

    fn score_into(&self, s: f64, x: &[f64], x0: &[f64], out: &mut [f64]) -> Result<()> {
        let (w, solved) = self.posterior(s, x, x0)?;
        out.fill(0.0);
        for (wj, u) in w.iter().zip(&solved) {
            for k in 0..self.d {
                out[k] -= wj * u[k];
            }
        }
        Ok(())
    }

    fn drift_into(&self, s: f64, x: &[f64], x0: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.d;
        let (w, solved) = self.posterior(s, x, x0)?;
        let bb = self.beta * self.beta_dot;
        for k in 0..d {
            out[k] = self.alpha_dot * x0[k];
        }
        for (j, (wj, u)) in w.iter().zip(&solved).enumerate() {
            if *wj == 0.0 {
                continue;
            }
            let m = &self.spec.means[j];
            let c = &self.spec.covariances[j];
            for a in 0..d {
                let cu: f64 = (0..d).map(|b| c[a * d + b] * u[b]).sum();
                out[a] += wj * (self.beta_dot * m[a] + bb * cu + self.noise_rate * u[a]);
            }
        }
        Ok(())
    }
}

/// `b_0(x, x0) = alpha'_0 x0 + beta'_0 E[x1] + (sigma'_0 / sigma_0) (x - x0)`.
fn drift_at_zero(spec: &GmmSpec, sched: &Schedule, x: &[f64], x0: &[f64], out: &mut [f64]) -> Result<()> {
    let c = sched.eval(0.0)?;
    let mean = spec.mean();
    let ratio = c.sigma_dot / c.sigma;
    for k in 0..x.len() {
        out[k] = c.alpha_dot * x0[k] + c.beta_dot * mean[k] + ratio * (x[k] - x0[k]);
    }
    Ok(())
}

fn check_inputs(spec: &GmmSpec, x: &[f64], x0: &[f64]) -> Result<()> {
    check_dim(spec.dim(), x.len())?;
    check_dim(spec.dim(), x0.len())
}

/// Exact drift `E[R_s | I_s = x, x0]`; at `s = 0` the limiting value is used.
pub fn gmm_drift(spec: &GmmSpec, sched: &Schedule, s: f64, x: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
    check_inputs(spec, x, x0)?;
    let mut out = vec![0.0; spec.dim()];
    if s == 0.0 {
        drift_at_zero(spec, sched, x, x0, &mut out)?;
    } else {
        TimeSlice::new(spec, sched, s)?.drift_into(s, x, x0, &mut out)?;
    }
    Ok(out)
}

/// Exact score `grad_x log rho_s(x | x0)` for `s` in `(0, 1]`.
pub fn gmm_score(spec: &GmmSpec, sched: &Schedule, s: f64, x: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
    check_inputs(spec, x, x0)?;
    if s == 0.0 {
        return Err(Error::Singular { what: "score of a point mass", s });
    }
    let mut out = vec![0.0; spec.dim()];
    TimeSlice::new(spec, sched, s)?.score_into(s, x, x0, &mut out)?;
    Ok(out)
}

/// Posterior component weights `w_j(x)` at time `s` in `(0, 1]`.
pub fn posterior_weights(spec: &GmmSpec, sched: &Schedule, s: f64, x: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
    check_inputs(spec, x, x0)?;
    Ok(TimeSlice::new(spec, sched, s)?.posterior(s, x, x0)?.0)
}

/// The analytic drift as a [`DriftField`].
pub struct AnalyticGmmDrift<G> {
    target: G,
    sched: Schedule,
}

impl<G: ConditionalGmm> AnalyticGmmDrift<G> {
    pub fn new(target: G, sched: Schedule) -> Self {
        Self { target, sched }
    }

    pub fn target(&self) -> &G {
        &self.target
    }

    pub fn schedule(&self) -> &Schedule {
        &self.sched
    }
}

impl<G: ConditionalGmm> DriftField for AnalyticGmmDrift<G> {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn drift_into(&self, s: f64, x: &[f64], x0: &[f64], out: &mut [f64]) -> Result<()> {
        let spec = self.target.target(x0);
        if s == 0.0 {
            return drift_at_zero(&spec, &self.sched, x, x0, out);
        }
        TimeSlice::new(&spec, &self.sched, s)?.drift_into(s, x, x0, out)
    }

    fn drift_batch(&self, s: &[f64], xs: &[f64], x0s: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        if !self.target.is_constant() || s.is_empty() {
            for (k, &sk) in s.iter().enumerate() {
                let r = k * d..(k + 1) * d;
                self.drift_into(sk, &xs[r.clone()], &x0s[r.clone()], &mut out[r])?;
            }
            return Ok(());
        }
        let spec = self.target.target(&x0s[..d]);
        let mut k = 0;
        while k < s.len() {
            let sk = s[k];
            let run = s[k..].iter().take_while(|&&v| v == sk).count();
            if sk == 0.0 {
                for i in k..k + run {
                    let r = i * d..(i + 1) * d;
                    drift_at_zero(&spec, &self.sched, &xs[r.clone()], &x0s[r.clone()], &mut out[r])?;
                }
            } else {
                let slice = TimeSlice::new(&spec, &self.sched, sk)?;
                for i in k..k + run {
                    let r = i * d..(i + 1) * d;
                    slice.drift_into(sk, &xs[r.clone()], &x0s[r.clone()], &mut out[r])?;
                }
            }
            k += run;
        }
        Ok(())
    }
}
