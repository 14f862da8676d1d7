//! Planar Langevin dynamics in a five-mode mixture potential with random
//! rotational jumps.
//!
//! Each step is `x + dt grad log rho(x) + sqrt(2 dt) xi`, followed with
//! probability `rate * dt` by a counterclockwise rotation through `2 pi / 5`.
//! The mixture is invariant under that rotation, so the jumps leave the
//! invariant density unchanged while mixing the modes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytic_gmm::GmmSpec;
use crate::dynamics::TransitionDataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{normal, Streams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JumpDiffusionConfig {
    pub spec: GmmSpec,
    pub jump_rate: f64,
    pub dt: f64,
    pub lag: f64,
    /// Independent chains the pairs are split across.
    pub chains: usize,
    pub seed: u64,
}

impl Default for JumpDiffusionConfig {
    fn default() -> Self {
        Self {
            spec: GmmSpec::five_mode(),
            jump_rate: 2.0,
            dt: 0.01,
            lag: 0.5,
            chains: 1,
            seed: 0,
        }
    }
}

impl JumpDiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spec.dim() != 2 {
            return Err(Error::Config("jump diffusion is planar; spec must be 2-D".into()));
        }
        if !(self.dt > 0.0) || !(self.jump_rate >= 0.0) {
            return Err(Error::Config("dt must be positive and jump_rate nonnegative".into()));
        }
        if self.jump_rate * self.dt >= 1.0 {
            return Err(Error::Config(format!(
                "jump probability per step rate * dt = {} must be below 1",
                self.jump_rate * self.dt
            )));
        }
        self.lag_steps()?;
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        Ok(())
    }

    /// Integrator steps per lag; the lag must be a whole number of steps.
    pub fn lag_steps(&self) -> Result<usize> {
        let k = self.lag / self.dt;
        if !(self.lag > 0.0) || (k - k.round()).abs() > 1e-9 * k.max(1.0) {
            return Err(Error::Config(format!("lag {} is not a positive multiple of dt {}", self.lag, self.dt)));
        }
        Ok(k.round() as usize)
    }
}

const ROT: f64 = 2.0 * std::f64::consts::PI / 5.0;

pub fn rotate(x: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * x[0] - s * x[1], s * x[0] + c * x[1]]
}

/// One step of the scheme with explicit noise `xi` and jump decision.
pub fn step_with(spec: &GmmSpec, x: [f64; 2], dt: f64, xi: [f64; 2], jump: bool) -> [f64; 2] {
    let g = spec.score(&x).expect("spec is planar");
    let r = (2.0 * dt).sqrt();
    let y = [x[0] + dt * g[0] + r * xi[0], x[1] + dt * g[1] + r * xi[1]];
    if jump {
        rotate(y, ROT)
    } else {
        y
    }
}

pub fn jump_diffusion_step(x: [f64; 2], cfg: &JumpDiffusionConfig, rng: &mut impl Rng) -> [f64; 2] {
    let xi = [normal(rng), normal(rng)];
    let jump = rng.random::<f64>() < cfg.jump_rate * cfg.dt;
    step_with(&cfg.spec, x, cfg.dt, xi, jump)
}

/// Advance `x` by `steps` integrator steps.
pub fn propagate(x: [f64; 2], steps: usize, cfg: &JumpDiffusionConfig, rng: &mut impl Rng) -> [f64; 2] {
    (0..steps).fold(x, |y, _| jump_diffusion_step(y, cfg, rng))
}

/// `m` independent draws of `x_lag` given `x_0 = x0`, draw `k` from stream `k`.
pub fn conditional_samples(cfg: &JumpDiffusionConfig, x0: [f64; 2], m: usize, streams: &Streams) -> Result<Vec<[f64; 2]>> {
    cfg.validate()?;
    let steps = cfg.lag_steps()?;
    Ok(exec::map_range(m, |k| propagate(x0, steps, cfg, &mut streams.stream(k as u64))))
}

/// Long-run states sampled every `lag` after `burn_in` time units, one chain
/// per stream.
pub fn stationary_samples(cfg: &JumpDiffusionConfig, n: usize, burn_in: f64) -> Result<Vec<[f64; 2]>> {
    let ds = simulate_jump_diffusion(cfg, n, burn_in)?;
    Ok((0..ds.len()).map(|k| [ds.x0[2 * k], ds.x0[2 * k + 1]]).collect())
}

/// Emit `n_pairs` lag pairs `(x_t, x_{t + lag})` from `cfg.chains` chains,
/// each started at the first mode mean and run for `burn_in` before
/// recording.
pub fn simulate_jump_diffusion(cfg: &JumpDiffusionConfig, n_pairs: usize, burn_in: f64) -> Result<TransitionDataset> {
    cfg.validate()?;
    if n_pairs == 0 {
        return Err(Error::Empty("requested pairs"));
    }
    let steps = cfg.lag_steps()?;
    let burn = (burn_in / cfg.dt).round().max(0.0) as usize;
    let streams = Streams::new(cfg.seed, "jump-diffusion");
    let per_chain = n_pairs.div_ceil(cfg.chains);
    let start = [cfg.spec.means()[0][0], cfg.spec.means()[0][1]];
    let chains = exec::map_range(cfg.chains, |c| {
        let count = per_chain.min(n_pairs - (c * per_chain).min(n_pairs));
        let mut rng = streams.stream(c as u64);
        let mut x = propagate(start, burn, cfg, &mut rng);
        let mut states = Vec::with_capacity(count + 1);
        states.push(x);
        for _ in 0..count {
            x = propagate(x, steps, cfg, &mut rng);
            states.push(x);
        }
        states
    });
    let mut x0 = Vec::with_capacity(2 * n_pairs);
    let mut x1 = Vec::with_capacity(2 * n_pairs);
    for states in chains {
        for w in states.windows(2) {
            x0.extend_from_slice(&w[0]);
            x1.extend_from_slice(&w[1]);
        }
    }
    TransitionDataset::new(2, cfg.lag, x0, x1)
}

/// Index of the mixture component with the largest responsibility at `x`.
pub fn nearest_mode(spec: &GmmSpec, x: [f64; 2]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, m) in spec.means().iter().enumerate() {
        let d = (x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}
