//! Pseudo-spectral 2-D stochastic Navier-Stokes in vorticity form on the
//! periodic box `[0, 2 pi)^2`:
//!
//! ```text
//! d w + v . grad w dt = (nu lap w - a w) dt + eps_f dxi,   -lap psi = w,  v = grad^perp psi
//! ```
//!
//! driven by eight independent Wiener processes on the modes
//! `sin 6x, cos 6x, sin 7x, cos 7x, sin 5(x+y), cos 5(x+y), sin 8(x+y), cos 8(x+y)`.
//! Time stepping is explicit Euler-Maruyama; the advection term is formed in
//! physical space and dealiased with the 2/3 rule.

use rand::Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::spectrum::{wavenumber, Fft2};
use crate::dynamics::TransitionDataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::{normal, Streams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavierStokesConfig {
    pub n: usize,
    pub viscosity: f64,
    pub damping: f64,
    pub forcing: f64,
    pub dt: f64,
    pub snapshot_interval: f64,
    /// Velocity scale assumed by the start-up CFL check.
    pub max_velocity: f64,
    /// Abort once `max |w|` exceeds this.
    pub blowup_threshold: f64,
    pub trajectories: usize,
    pub seed: u64,
}

impl Default for NavierStokesConfig {
    fn default() -> Self {
        Self {
            n: 64,
            viscosity: 1e-3,
            damping: 0.1,
            forcing: 1.0,
            dt: 1e-4,
            snapshot_interval: 0.5,
            max_velocity: 10.0,
            blowup_threshold: 1e6,
            trajectories: 1,
            seed: 0,
        }
    }
}

impl NavierStokesConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 8 || !self.n.is_power_of_two() {
            return bad(format!("grid size {} must be a power of two >= 8", self.n));
        }
        if !(self.viscosity >= 0.0 && self.damping >= 0.0 && self.forcing >= 0.0) {
            return bad("viscosity, damping and forcing must be nonnegative".into());
        }
        if !(self.dt > 0.0) || !(self.snapshot_interval > 0.0) {
            return bad("dt and snapshot_interval must be positive".into());
        }
        self.steps_per_snapshot()?;
        let kmax = (self.n / 2) as f64;
        let diffusive = self.dt * (self.viscosity * 2.0 * kmax * kmax + self.damping);
        if diffusive >= 1.0 {
            return bad(format!("explicit step unstable: dt (nu k_max^2 + a) = {diffusive:.3} >= 1"));
        }
        let dx = 2.0 * std::f64::consts::PI / self.n as f64;
        let cfl = self.max_velocity * self.dt / dx;
        if cfl > 0.5 {
            return bad(format!("CFL number {cfl:.3} exceeds 0.5"));
        }
        if self.trajectories == 0 {
            return bad("trajectories must be at least 1".into());
        }
        Ok(())
    }

    pub fn steps_per_snapshot(&self) -> Result<usize> {
        let k = self.snapshot_interval / self.dt;
        if (k - k.round()).abs() > 1e-6 * k {
            return Err(Error::Config("snapshot_interval must be a multiple of dt".into()));
        }
        Ok(k.round() as usize)
    }
}

/// Physical-space forcing modes `e_i(x, y)` on the grid.
pub fn forcing_modes(n: usize) -> Vec<Vec<f64>> {
    let h = 2.0 * std::f64::consts::PI / n as f64;
    type Mode = fn(f64, f64) -> f64;
    let modes: [Mode; 8] = [
        |x, _| (6.0 * x).sin(),
        |x, _| (6.0 * x).cos(),
        |x, _| (7.0 * x).sin(),
        |x, _| (7.0 * x).cos(),
        |x, y| (5.0 * (x + y)).sin(),
        |x, y| (5.0 * (x + y)).cos(),
        |x, y| (8.0 * (x + y)).sin(),
        |x, y| (8.0 * (x + y)).cos(),
    ];
    modes
        .iter()
        .map(|f| (0..n * n).map(|k| f((k % n) as f64 * h, (k / n) as f64 * h)).collect())
        .collect()
}

/// Covariance of the accumulated forcing between points separated by
/// `(dx, dy)`, per unit time and unit amplitude.
pub fn forcing_covariance(dx: f64, dy: f64) -> f64 {
    (6.0 * dx).cos() + (7.0 * dx).cos() + (5.0 * (dx + dy)).cos() + (8.0 * (dx + dy)).cos()
}

/// Precomputed transforms and wavenumber tables for one grid size.
pub struct NsSolver {
    cfg: NavierStokesConfig,
    fft: Fft2,
    kx: Vec<f64>,
    ky: Vec<f64>,
    k2: Vec<f64>,
    mask: Vec<bool>,
    forcing: Vec<Vec<f64>>,
    pub t: f64,
}

impl NsSolver {
    pub fn new(cfg: &NavierStokesConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n;
        let cut = n as f64 / 3.0;
        let mut kx = vec![0.0; n * n];
        let mut ky = vec![0.0; n * n];
        let mut k2 = vec![0.0; n * n];
        let mut mask = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (wavenumber(j, n) as f64, wavenumber(i, n) as f64);
                let k = i * n + j;
                kx[k] = a;
                ky[k] = b;
                k2[k] = a * a + b * b;
                mask[k] = a.abs() < cut && b.abs() < cut;
            }
        }
        Ok(Self {
            cfg: cfg.clone(),
            fft: Fft2::new(n),
            kx,
            ky,
            k2,
            mask,
            forcing: forcing_modes(n),
            t: 0.0,
        })
    }

    pub fn config(&self) -> &NavierStokesConfig {
        &self.cfg
    }

    /// Normalized spectral coefficients of a physical field.
    pub fn to_spectral(&self, field: &[f64]) -> Vec<Complex64> {
        let mut c = self.fft.coefficients(field);
        for (v, &m) in c.iter_mut().zip(&self.mask) {
            if !m {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        c[0] = Complex64::new(0.0, 0.0);
        c
    }

    pub fn to_physical(&self, w_hat: &[Complex64]) -> Vec<f64> {
        self.fft.synthesize(w_hat)
    }

    fn derivative(&self, w_hat: &[Complex64], k: &[f64], scale: &[f64]) -> Vec<f64> {
        let mut c: Vec<Complex64> = w_hat
            .iter()
            .zip(k)
            .zip(scale)
            .map(|((w, &kk), &s)| Complex64::new(0.0, kk * s) * w)
            .collect();
        self.fft.inverse(&mut c);
        c.iter().map(|v| v.re).collect()
    }

    /// One Euler-Maruyama step with forcing increments `xi_i sqrt(dt)`.
    pub fn step_with(&mut self, w_hat: &mut [Complex64], xi: &[f64; 8]) -> Result<()> {
        let n = self.cfg.n;
        let dt = self.cfg.dt;
        let ones = vec![1.0; n * n];
        // psi_hat = w_hat / |k|^2
        let inv_k2: Vec<f64> = self.k2.iter().map(|&k| if k > 0.0 { 1.0 / k } else { 0.0 }).collect();
        let u = self.derivative(w_hat, &self.ky, &inv_k2); // u = d psi / dy
        let v: Vec<f64> = self.derivative(w_hat, &self.kx, &inv_k2).iter().map(|x| -x).collect(); // v = -d psi / dx
        let wx = self.derivative(w_hat, &self.kx, &ones);
        let wy = self.derivative(w_hat, &self.ky, &ones);

        let dx = 2.0 * std::f64::consts::PI / n as f64;
        let umax = u.iter().chain(&v).fold(0.0f64, |m, x| m.max(x.abs()));
        if !umax.is_finite() || umax * dt / dx > 1.0 {
            return Err(Error::BlowUp {
                t: self.t,
                max_abs: umax,
            });
        }

        let amp = self.cfg.forcing * dt.sqrt();
        let mut rhs: Vec<Complex64> = (0..n * n)
            .map(|k| {
                let mut g = -dt * (u[k] * wx[k] + v[k] * wy[k]);
                for (e, x) in self.forcing.iter().zip(xi) {
                    g += amp * x * e[k];
                }
                Complex64::new(g, 0.0)
            })
            .collect();
        self.fft.forward(&mut rhs);
        let scale = 1.0 / (n * n) as f64;
        for k in 0..n * n {
            if self.mask[k] {
                let decay = 1.0 - dt * (self.cfg.viscosity * self.k2[k] + self.cfg.damping);
                w_hat[k] = w_hat[k] * decay + rhs[k] * scale;
            } else {
                w_hat[k] = Complex64::new(0.0, 0.0);
            }
        }
        w_hat[0] = Complex64::new(0.0, 0.0);
        self.t += dt;
        Ok(())
    }

    pub fn step(&mut self, w_hat: &mut [Complex64], rng: &mut impl Rng) -> Result<()> {
        let mut xi = [0.0; 8];
        for x in &mut xi {
            *x = normal(rng);
        }
        self.step_with(w_hat, &xi)
    }

    /// Check the physical field against the blow-up threshold.
    pub fn check(&self, field: &[f64]) -> Result<()> {
        let max_abs = field.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !max_abs.is_finite() || max_abs > self.cfg.blowup_threshold {
            return Err(Error::BlowUp { t: self.t, max_abs });
        }
        Ok(())
    }
}

/// One step of the solver; see [`NsSolver::step`].
pub fn ns_step(solver: &mut NsSolver, w_hat: &mut [Complex64], rng: &mut impl Rng) -> Result<()> {
    solver.step(w_hat, rng)
}

/// Root-mean-square of a field, the discrete `L^2` norm on the unit-area box.
pub fn rms(field: &[f64]) -> f64 {
    (field.iter().map(|v| v * v).sum::<f64>() / field.len() as f64).sqrt()
}

/// Raw snapshots of one trajectory from a zero field, every
/// `snapshot_interval` after `burn_in`.
pub fn ns_trajectory(cfg: &NavierStokesConfig, n_snapshots: usize, burn_in: f64, index: u64) -> Result<Vec<Vec<f64>>> {
    let mut solver = NsSolver::new(cfg)?;
    let per = cfg.steps_per_snapshot()?;
    let burn = (burn_in / cfg.dt).round() as usize;
    let mut rng = Streams::new(cfg.seed, "navier-stokes").stream(index);
    let mut w_hat = vec![Complex64::new(0.0, 0.0); cfg.n * cfg.n];
    for _ in 0..burn {
        solver.step(&mut w_hat, &mut rng)?;
    }
    let mut out = Vec::with_capacity(n_snapshots);
    for s in 0..n_snapshots {
        if s > 0 {
            for _ in 0..per {
                solver.step(&mut w_hat, &mut rng)?;
            }
        }
        let field = solver.to_physical(&w_hat);
        solver.check(&field)?;
        out.push(field);
    }
    Ok(out)
}

/// Lag pairs of consecutive snapshots from `cfg.trajectories` independent
/// runs, divided by the mean snapshot RMS so that it is exactly 1 on the
/// emitted fields.
pub fn simulate_ns(cfg: &NavierStokesConfig, n_snapshots: usize, burn_in: f64) -> Result<TransitionDataset> {
    cfg.validate()?;
    if n_snapshots < 2 {
        return Err(Error::Config("need at least two snapshots per trajectory".into()));
    }
    let runs = exec::map_range(cfg.trajectories, |t| ns_trajectory(cfg, n_snapshots, burn_in, t as u64));
    let mut trajs = Vec::with_capacity(runs.len());
    for r in runs {
        trajs.push(r?);
    }
    let norms: Vec<f64> = trajs.iter().flatten().map(|f| rms(f)).collect();
    let scale = exec::pairwise_sum(&norms) / norms.len() as f64;
    if !(scale > 0.0) {
        return Err(Error::Degenerate("all snapshots are zero".into()));
    }
    let d = cfg.n * cfg.n;
    let mut x0 = Vec::new();
    let mut x1 = Vec::new();
    for tr in &trajs {
        for w in tr.windows(2) {
            x0.extend_from_slice(&w[0]);
            x1.extend_from_slice(&w[1]);
        }
    }
    let mut ds = TransitionDataset::new(d, cfg.snapshot_interval, x0, x1)?;
    ds.rescale(scale);
    Ok(ds)
}
