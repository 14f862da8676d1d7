//! Euler-Maruyama integration of the forecasting SDE, autoregressive
//! rollout, the path-KL diagnostic and the linear reference process.
//!
//! The first step from `X_0 = x0` uses the drift at `s_0 = 0` and the noise
//! amplitude `sigma_0` regardless of the chosen `g`, so the transformed drift
//! is never evaluated at `s = 0`; the last step starts at `s_{N-1} < 1`.
//!
//! Ensemble members are advanced in lockstep blocks so each step makes one
//! batched drift call per block. Member `k` always draws from stream `k`, so
//! the output does not depend on the block size or the thread count.

use serde::{Deserialize, Serialize};

use crate::analytic_gmm::{gmm_marginal, GmmSpec};
use crate::error::{check_dim, Error, Result};
use crate::exec;
use crate::field::DriftField;
use crate::rng::{fill_normal, normal, StreamRng, Streams};
use crate::schedules::{DiffusionKind, DiffusionSchedule, Schedule};

/// Members per lockstep block.
pub const BLOCK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Number of Euler-Maruyama steps `N` on the uniform grid.
    pub steps: usize,
    /// Explicit grid `0 = s_0 < .. < s_N = 1`, overriding `steps`.
    pub grid: Option<Vec<f64>>,
    pub diffusion: DiffusionKind,
    pub ensemble: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            grid: None,
            diffusion: DiffusionKind::MatchSigma,
            ensemble: 1000,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let g = self.grid();
        if g.len() < 3 {
            return Err(Error::Config("the s-grid needs at least two steps".into()));
        }
        if g[0] != 0.0 || g[g.len() - 1] != 1.0 {
            return Err(Error::Config("the s-grid must start at 0 and end at 1 exactly".into()));
        }
        if g.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("the s-grid must be strictly increasing".into()));
        }
        if self.ensemble == 0 {
            return Err(Error::Config("ensemble size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        match &self.grid {
            Some(g) => g.clone(),
            None => uniform_grid(self.steps),
        }
    }

    pub fn diffusion_for(&self, sched: &Schedule) -> Result<DiffusionSchedule> {
        DiffusionSchedule::new(self.diffusion.clone(), sched)
    }
}

/// `s_n = n / N`, with both endpoints exact.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|k| if k == n { 1.0 } else { k as f64 / n as f64 }).collect()
}

/// Terminal samples for one conditioning state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastEnsemble {
    pub dim: usize,
    pub x0: Vec<f64>,
    /// Row-major `members x dim`.
    pub samples: Vec<f64>,
    pub model_id: String,
    pub config_hash: String,
}

impl ForecastEnsemble {
    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn member(&self, k: usize) -> &[f64] {
        &self.samples[k * self.dim..(k + 1) * self.dim]
    }

    /// Values of coordinate `j` across members.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.samples.iter().skip(j).step_by(self.dim).copied().collect()
    }
}

/// Grid, transform coefficients and noise amplitudes shared by every member.
struct Plan {
    grid: Vec<f64>,
    transform: Vec<crate::schedules::TransformCoeffs>,
    noise: Vec<f64>,
}

impl Plan {
    fn new(sched: &Schedule, diffusion: &DiffusionSchedule, cfg: &SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        if diffusion.reference() != sched {
            return Err(Error::Config("diffusion schedule was built for a different interpolant".into()));
        }
        let grid = cfg.grid();
        let n = grid.len() - 1;
        let mut transform = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        for (k, &s) in grid[..n].iter().enumerate() {
            if k == 0 {
                transform.push(crate::schedules::TransformCoeffs::IDENTITY);
                noise.push(sched.eval(0.0)?.sigma);
            } else {
                transform.push(diffusion.transform_coeffs(s)?);
                noise.push(diffusion.g(s)?);
            }
        }
        Ok(Self { grid, transform, noise })
    }

    fn steps(&self) -> usize {
        self.grid.len() - 1
    }
}

/// Integrate one block of members from `s = 0` to `s = 1`, overwriting `xs`
/// (which must hold `x0s` on entry). `record[n]` snapshots the states at
/// grid index `n` when set.
fn integrate_block(
    drift: &(impl DriftField + ?Sized),
    plan: &Plan,
    x0s: &[f64],
    xs: &mut [f64],
    rngs: &mut [StreamRng],
    mut record: Option<&mut dyn FnMut(usize, &[f64])>,
) -> Result<()> {
    let d = drift.dim();
    let m = rngs.len();
    let mut b = vec![0.0; m * d];
    let mut eta = vec![0.0; d];
    let mut svec = vec![0.0; m];
    for n in 0..plan.steps() {
        let s = plan.grid[n];
        let ds = plan.grid[n + 1] - s;
        svec.fill(s);
        drift.drift_batch(&svec, xs, x0s, &mut b)?;
        let t = plan.transform[n];
        let amp = plan.noise[n] * ds.sqrt();
        for k in 0..m {
            let r = k * d..(k + 1) * d;
            let bk = &mut b[r.clone()];
            t.apply(bk, &xs[r.clone()], &x0s[r.clone()]);
            fill_normal(&mut rngs[k], &mut eta);
            for j in 0..d {
                xs[k * d + j] += bk[j] * ds + amp * eta[j];
            }
        }
        if xs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: n, s });
        }
        if let Some(f) = record.as_mut() {
            f(n + 1, xs);
        }
    }
    Ok(())
}

/// One forecast `X_N` from `x0`, drawing noise from `rng`.
pub fn sample_one(
    drift: &(impl DriftField + ?Sized),
    sched: &Schedule,
    cfg: &SamplerConfig,
    x0: &[f64],
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    check_dim(drift.dim(), x0.len())?;
    let plan = Plan::new(sched, &cfg.diffusion_for(sched)?, cfg)?;
    let mut x = x0.to_vec();
    integrate_block(drift, &plan, x0, &mut x, std::slice::from_mut(rng), None)?;
    Ok(x)
}

/// Stream family used for ensemble members.
pub fn member_streams(seed: u64) -> Streams {
    Streams::new(seed, "sampler")
}

/// One forecast per row of `x0s` (`m x d`); member `k` uses stream `k` of
/// `streams`.
pub fn sample_conditioned(
    drift: &(impl DriftField + ?Sized),
    sched: &Schedule,
    cfg: &SamplerConfig,
    x0s: &[f64],
    streams: &Streams,
) -> Result<Vec<f64>> {
    let d = drift.dim();
    if x0s.len() % d != 0 {
        return Err(Error::Dimension { expected: d, got: x0s.len() % d });
    }
    let plan = Plan::new(sched, &cfg.diffusion_for(sched)?, cfg)?;
    let m = x0s.len() / d;
    let blocks = exec::map_chunks(m, BLOCK, |range| -> Result<Vec<f64>> {
        let x0b = &x0s[range.start * d..range.end * d];
        let mut xs = x0b.to_vec();
        let mut rngs: Vec<_> = range.map(|k| streams.stream(k as u64)).collect();
        integrate_block(drift, &plan, x0b, &mut xs, &mut rngs, None)?;
        Ok(xs)
    });
    let mut out = Vec::with_capacity(m * d);
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}

/// `cfg.ensemble` independent forecasts from the same `x0`.
pub fn sample_ensemble(
    drift: &(impl DriftField + ?Sized),
    sched: &Schedule,
    cfg: &SamplerConfig,
    x0: &[f64],
) -> Result<ForecastEnsemble> {
    check_dim(drift.dim(), x0.len())?;
    let x0s: Vec<f64> = x0.iter().copied().cycle().take(x0.len() * cfg.ensemble).collect();
    let samples = sample_conditioned(drift, sched, cfg, &x0s, &member_streams(cfg.seed))?;
    Ok(ForecastEnsemble {
        dim: x0.len(),
        x0: x0.to_vec(),
        samples,
        model_id: String::new(),
        config_hash: String::new(),
    })
}

/// Ensemble states at the requested grid indices (`0` is `x0`, `N` terminal).
pub fn sample_ensemble_trace(
    drift: &(impl DriftField + ?Sized),
    sched: &Schedule,
    cfg: &SamplerConfig,
    x0: &[f64],
    at: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let d = drift.dim();
    check_dim(d, x0.len())?;
    let plan = Plan::new(sched, &cfg.diffusion_for(sched)?, cfg)?;
    if at.iter().any(|&n| n > plan.steps()) {
        return Err(Error::Config("trace index beyond the grid".into()));
    }
    let streams = member_streams(cfg.seed);
    let m = cfg.ensemble;
    let blocks = exec::map_chunks(m, BLOCK, |range| -> Result<Vec<Vec<f64>>> {
        let x0b: Vec<f64> = x0.iter().copied().cycle().take(d * range.len()).collect();
        let mut xs = x0b.clone();
        let mut rngs: Vec<_> = range.map(|k| streams.stream(k as u64)).collect();
        let mut snaps: Vec<Vec<f64>> = at.iter().map(|&n| if n == 0 { x0b.clone() } else { Vec::new() }).collect();
        let mut rec = |n: usize, xs: &[f64]| {
            for (slot, &want) in at.iter().enumerate() {
                if want == n {
                    snaps[slot] = xs.to_vec();
                }
            }
        };
        integrate_block(drift, &plan, &x0b, &mut xs, &mut rngs, Some(&mut rec))?;
        Ok(snaps)
    });
    let mut out = vec![Vec::with_capacity(m * d); at.len()];
    for b in blocks {
        for (o, s) in out.iter_mut().zip(b?) {
            o.extend(s);
        }
    }
    Ok(out)
}

/// Autoregressive path `X^1, .., X^k` where each forecast conditions the next.
pub fn rollout(
    drift: &(impl DriftField + ?Sized),
    sched: &Schedule,
    cfg: &SamplerConfig,
    x0: &[f64],
    k: usize,
    rng: &mut StreamRng,
) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::Config("rollout needs at least one lag".into()));
    }
    let mut out = Vec::with_capacity(k);
    let mut cur = x0.to_vec();
    for _ in 0..k {
        cur = sample_one(drift, sched, cfg, &cur, rng)?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// `cfg.ensemble` independent rollouts of `k` lags from `x0`; entry `j` of the
/// result holds every member's state after `j + 1` lags.
pub fn rollout_ensemble(
    drift: &(impl DriftField + ?Sized),
    sched: &Schedule,
    cfg: &SamplerConfig,
    x0: &[f64],
    k: usize,
) -> Result<Vec<ForecastEnsemble>> {
    let d = drift.dim();
    check_dim(d, x0.len())?;
    if k == 0 {
        return Err(Error::Config("rollout needs at least one lag".into()));
    }
    let plan = Plan::new(sched, &cfg.diffusion_for(sched)?, cfg)?;
    let streams = member_streams(cfg.seed);
    let blocks = exec::map_chunks(cfg.ensemble, BLOCK, |range| -> Result<Vec<Vec<f64>>> {
        let mut cond: Vec<f64> = x0.iter().copied().cycle().take(d * range.len()).collect();
        let mut rngs: Vec<_> = range.map(|k| streams.stream(k as u64)).collect();
        let mut lags = Vec::with_capacity(k);
        for _ in 0..k {
            let mut xs = cond.clone();
            integrate_block(drift, &plan, &cond, &mut xs, &mut rngs, None)?;
            lags.push(xs.clone());
            cond = xs;
        }
        Ok(lags)
    });
    let mut per_lag = vec![Vec::with_capacity(cfg.ensemble * d); k];
    for b in blocks {
        for (o, s) in per_lag.iter_mut().zip(b?) {
            o.extend(s);
        }
    }
    Ok(per_lag
        .into_iter()
        .map(|samples| ForecastEnsemble {
            dim: d,
            x0: x0.to_vec(),
            samples,
            model_id: String::new(),
            config_hash: String::new(),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathKlEstimate {
    pub value: f64,
    pub std_error: f64,
    /// `(s, weight(s), L_s)` at each quadrature node.
    pub trace: Vec<(f64, f64, f64)>,
}

/// Trapezoid weights on a (possibly non-uniform) grid.
pub fn trapezoid_weights(s: &[f64]) -> Vec<f64> {
    let n = s.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let h = s[k + 1] - s[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    w
}

/// Monte-Carlo estimate of the path KL between the forecasting processes
/// driven by `b_true` and `b_hat` under diffusion `g`: the trapezoid rule over
/// `s_grid` of `weight(s) * E|b_hat - b_true|^2` with `I_s` drawn from the exact
/// conditional marginal.
#[allow(clippy::too_many_arguments)]
pub fn path_kl(
    b_true: &(impl DriftField + ?Sized),
    b_hat: &(impl DriftField + ?Sized),
    sched: &Schedule,
    g: &DiffusionSchedule,
    spec: &GmmSpec,
    x0: &[f64],
    n_mc: usize,
    s_grid: &[f64],
    seed: u64,
) -> Result<PathKlEstimate> {
    let d = spec.dim();
    check_dim(d, x0.len())?;
    check_dim(d, b_true.dim())?;
    check_dim(d, b_hat.dim())?;
    if n_mc < 2 {
        return Err(Error::Config("path_kl needs at least two Monte-Carlo draws".into()));
    }
    if s_grid.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
        return Err(Error::Config("path_kl grid must lie inside (0, 1)".into()));
    }
    let tw = trapezoid_weights(s_grid);
    let streams = Streams::new(seed, "path-kl");
    let mut value = 0.0;
    let mut var = 0.0;
    let mut trace = Vec::with_capacity(s_grid.len());
    for (q, &s) in s_grid.iter().enumerate() {
        let weight = g.path_kl_weight(s)?;
        let sampler = gmm_marginal(spec, sched, s, x0)?.sampler();
        let node = streams.derive(q as u64);
        let parts = exec::map_chunks(n_mc, BLOCK, |range| -> Result<Vec<f64>> {
            let m = range.len();
            let mut xs = Vec::with_capacity(m * d);
            for k in range {
                xs.extend(sampler.sample(&mut node.stream(k as u64)));
            }
            let x0s: Vec<f64> = x0.iter().copied().cycle().take(m * d).collect();
            let svec = vec![s; m];
            let (mut bt, mut bh) = (vec![0.0; m * d], vec![0.0; m * d]);
            b_true.drift_batch(&svec, &xs, &x0s, &mut bt)?;
            b_hat.drift_batch(&svec, &xs, &x0s, &mut bh)?;
            Ok((0..m)
                .map(|k| (0..d).map(|j| (bh[k * d + j] - bt[k * d + j]).powi(2)).sum())
                .collect())
        });
        let mut errs = Vec::with_capacity(n_mc);
        for p in parts {
            errs.extend(p?);
        }
        let est = crate::interpolant::MeanEstimate::from_samples(&errs);
        value += tw[q] * weight * est.mean;
        var += (tw[q] * weight * est.std_error).powi(2);
        trace.push((s, weight, est.mean));
    }
    Ok(PathKlEstimate {
        value,
        std_error: var.sqrt(),
        trace,
    })
}

/// Empirical moments of the reference process at each grid time.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTrace {
    pub s: Vec<f64>,
    /// Per-coordinate mean at each grid time.
    pub mean: Vec<Vec<f64>>,
    /// Coordinate-averaged variance and its standard error.
    pub var: Vec<f64>,
    pub var_se: Vec<f64>,
}

/// Simulate `dY = a_s (Y - alpha_s x0) ds + alpha'_s x0 ds + g^F_s dW` from
/// `Y_0 = x0` with `M` members, using drift `alpha'_0 x0` and noise
/// `sigma_0` on the first step.
pub fn reference_process_check(sched: &Schedule, cfg: &SamplerConfig, x0: &[f64], m: usize) -> Result<ReferenceTrace> {
    cfg.validate()?;
    if m < 2 {
        return Err(Error::Config("need at least two members".into()));
    }
    let grid = cfg.grid();
    let n = grid.len() - 1;
    let d = x0.len();
    let mut rate = vec![0.0; n];
    let mut noise = vec![0.0; n];
    let coeffs: Vec<_> = grid.iter().map(|&s| sched.eval(s)).collect::<Result<_>>()?;
    noise[0] = coeffs[0].sigma;
    for k in 1..n {
        rate[k] = sched.reference_rate(grid[k])?;
        noise[k] = sched.follmer_g(grid[k])?;
    }
    let streams = Streams::new(cfg.seed, "reference-process");
    // per member: states at every grid time
    let paths = exec::map_range(m, |k| {
        let mut rng = streams.stream(k as u64);
        let mut y = x0.to_vec();
        let mut out = Vec::with_capacity((n + 1) * d);
        out.extend_from_slice(&y);
        for i in 0..n {
            let ds = grid[i + 1] - grid[i];
            let c = &coeffs[i];
            for j in 0..d {
                let drift = rate[i] * (y[j] - c.alpha * x0[j]) + c.alpha_dot * x0[j];
                y[j] += drift * ds + noise[i] * ds.sqrt() * normal(&mut rng);
            }
            out.extend_from_slice(&y);
        }
        out
    });
    let mut mean = Vec::with_capacity(n + 1);
    let mut var = Vec::with_capacity(n + 1);
    let mut var_se = Vec::with_capacity(n + 1);
    let mf = m as f64;
    for i in 0..=n {
        let mut mu = vec![0.0; d];
        for j in 0..d {
            let col: Vec<f64> = paths.iter().map(|p| p[i * d + j]).collect();
            mu[j] = exec::pairwise_sum(&col) / mf;
        }
        // coordinate-averaged squared deviations per member
        let dev: Vec<f64> = paths
            .iter()
            .map(|p| (0..d).map(|j| (p[i * d + j] - mu[j]).powi(2)).sum::<f64>() / d as f64)
            .collect();
        let v = exec::pairwise_sum(&dev) / (mf - 1.0);
        let spread: Vec<f64> = dev.iter().map(|x| (x - v).powi(2)).collect();
        var_se.push((exec::pairwise_sum(&spread) / (mf - 1.0) / mf).sqrt());
        var.push(v);
        mean.push(mu);
    }
    Ok(ReferenceTrace {
        s: grid,
        mean,
        var,
        var_se,
    })
}
