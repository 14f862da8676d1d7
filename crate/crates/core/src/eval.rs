//! Statistical comparison of forecast ensembles against reference samples.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::rng::Streams;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Bandwidth {
    /// `h = sd * n^(-1/5)`.
    Scott,
    Fixed { h: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KdeConfig {
    pub bandwidth: Bandwidth,
    pub grid_points: usize,
    /// Grid padding beyond the data range, in bandwidths.
    pub pad: f64,
    /// Density floor applied before taking logs.
    pub floor: f64,
    pub min_samples: usize,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Scott,
            grid_points: 512,
            pad: 3.0,
            floor: 1e-12,
            min_samples: 100,
        }
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = exec::pairwise_sum(v) / n;
    let dev: Vec<f64> = v.iter().map(|x| (x - m) * (x - m)).collect();
    (m, (exec::pairwise_sum(&dev) / (n - 1.0)).sqrt())
}

fn bandwidth(rule: Bandwidth, v: &[f64]) -> Result<f64> {
    let (_, sd) = mean_sd(v);
    if !(sd > 0.0) {
        return Err(Error::Degenerate("samples have zero variance".into()));
    }
    Ok(match rule {
        Bandwidth::Scott => sd * (v.len() as f64).powf(-0.2),
        Bandwidth::Fixed { h } => h,
    })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Gaussian-kernel density of `sorted` evaluated on `grid`; kernels are
/// truncated at 9 bandwidths, far below the density floor.
fn density_on(sorted: &[f64], h: f64, grid: &[f64]) -> Vec<f64> {
    let norm = INV_SQRT_2PI / (h * sorted.len() as f64);
    let reach = 9.0 * h;
    grid.iter()
        .map(|&g| {
            let lo = sorted.partition_point(|&x| x < g - reach);
            let hi = sorted.partition_point(|&x| x <= g + reach);
            let terms: Vec<f64> = sorted[lo..hi].iter().map(|&x| (-0.5 * ((g - x) / h).powi(2)).exp()).collect();
            norm * exec::pairwise_sum(&terms)
        })
        .collect()
}

/// One-dimensional kernel density estimate on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Kde1d {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl Kde1d {
    pub fn fit(samples: &[f64], cfg: &KdeConfig) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Degenerate("need at least two samples".into()));
        }
        let h = bandwidth(cfg.bandwidth, samples)?;
        let (lo, hi) = range(samples);
        let grid = linspace(lo - cfg.pad * h, hi + cfg.pad * h, cfg.grid_points);
        Self::on_grid(samples, h, grid)
    }

    pub fn on_grid(samples: &[f64], h: f64, grid: Vec<f64>) -> Result<Self> {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let density = density_on(&sorted, h, &grid);
        Ok(Self {
            bandwidth: h,
            grid,
            density,
        })
    }

    pub fn step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Trapezoid integral of the density over the grid.
    pub fn mass(&self) -> f64 {
        let n = self.density.len();
        self.step() * (exec::pairwise_sum(&self.density) - 0.5 * (self.density[0] + self.density[n - 1]))
    }
}

fn range(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
}

/// `KL(p || q)` between two gridded densities after flooring and
/// renormalizing on the grid.
fn grid_kl(p: &[f64], q: &[f64], floor: f64) -> f64 {
    let pf: Vec<f64> = p.iter().map(|v| v.max(floor)).collect();
    let qf: Vec<f64> = q.iter().map(|v| v.max(floor)).collect();
    let (zp, zq) = (exec::pairwise_sum(&pf), exec::pairwise_sum(&qf));
    let terms: Vec<f64> = pf
        .iter()
        .zip(&qf)
        .map(|(a, b)| {
            let (a, b) = (a / zp, b / zq);
            a * (a / b).ln()
        })
        .collect();
    exec::pairwise_sum(&terms)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub value: f64,
    /// Bootstrap standard deviation.
    pub std: f64,
}

/// KDE curves of both sample sets on their shared grid.
pub struct KdePair {
    pub p: Kde1d,
    pub q: Kde1d,
}

pub fn kde_pair(p: &[f64], q: &[f64], cfg: &KdeConfig) -> Result<KdePair> {
    for v in [p, q] {
        if v.len() < cfg.min_samples.max(2) {
            return Err(Error::Degenerate(format!(
                "KDE needs at least {} samples, got {}",
                cfg.min_samples,
                v.len()
            )));
        }
    }
    let hp = bandwidth(cfg.bandwidth, p)?;
    let hq = bandwidth(cfg.bandwidth, q)?;
    let (a, b) = range(p);
    let (c, d) = range(q);
    let pad = cfg.pad * hp.max(hq);
    let grid = linspace(a.min(c) - pad, b.max(d) + pad, cfg.grid_points);
    Ok(KdePair {
        p: Kde1d::on_grid(p, hp, grid.clone())?,
        q: Kde1d::on_grid(q, hq, grid)?,
    })
}

/// `KL(p || q)` of Gaussian KDEs on a shared grid, with the standard
/// deviation over `n_boot` bootstrap resamples of both sets (bandwidths and
/// grid held fixed).
pub fn kde_kl(p: &[f64], q: &[f64], cfg: &KdeConfig, n_boot: usize, seed: u64) -> Result<KlEstimate> {
    let pair = kde_pair(p, q, cfg)?;
    let value = grid_kl(&pair.p.density, &pair.q.density, cfg.floor);
    if n_boot < 2 {
        return Ok(KlEstimate { value, std: 0.0 });
    }
    let streams = Streams::new(seed, "bootstrap");
    let grid = &pair.p.grid;
    let resample = |v: &[f64], rng: &mut crate::rng::StreamRng| -> Vec<f64> {
        let mut r: Vec<f64> = (0..v.len()).map(|_| v[rng.random_range(0..v.len())]).collect();
        r.sort_by(f64::total_cmp);
        r
    };
    let kls = exec::map_range(n_boot, |b| {
        let mut rng = streams.stream(b as u64);
        let rp = resample(p, &mut rng);
        let rq = resample(q, &mut rng);
        grid_kl(
            &density_on(&rp, pair.p.bandwidth, grid),
            &density_on(&rq, pair.q.bandwidth, grid),
            cfg.floor,
        )
    });
    let (_, std) = mean_sd(&kls);
    Ok(KlEstimate { value, std })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub err_mean: f64,
    pub err_std: f64,
    /// Set when the reference mean is identically zero and `err_mean` is the
    /// absolute error `|m_hat - m|` instead of the relative one.
    pub mean_is_absolute: bool,
}

/// Field-wise mean and standard deviation of row-major `n x dim` samples.
pub fn field_moments(samples: &[f64], dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if dim == 0 || samples.len() % dim != 0 {
        return Err(Error::Dimension {
            expected: dim,
            got: samples.len() % dim.max(1),
        });
    }
    let n = samples.len() / dim;
    if n < 2 {
        return Err(Error::Degenerate("need at least two members".into()));
    }
    let mut mean = Vec::with_capacity(dim);
    let mut std = Vec::with_capacity(dim);
    for j in 0..dim {
        let col: Vec<f64> = samples.iter().skip(j).step_by(dim).copied().collect();
        let (m, s) = mean_sd(&col);
        mean.push(m);
        std.push(s);
    }
    Ok((mean, std))
}

fn l2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative `L^2` errors of the field-wise mean and standard deviation.
pub fn conditional_moment_errors(ensemble: &[f64], reference: &[f64], dim: usize) -> Result<ErrorReport> {
    let (me, se) = field_moments(ensemble, dim)?;
    let (mr, sr) = field_moments(reference, dim)?;
    let dm = l2(me.iter().zip(&mr).map(|(a, b)| a - b));
    let ds = l2(se.iter().zip(&sr).map(|(a, b)| a - b));
    let nm = l2(mr.iter().copied());
    let ns = l2(sr.iter().copied());
    if !(ns > 0.0) {
        return Err(Error::Degenerate("reference spread is zero".into()));
    }
    let mean_is_absolute = nm == 0.0;
    Ok(ErrorReport {
        err_mean: if mean_is_absolute { dm } else { dm / nm },
        err_std: ds / ns,
        mean_is_absolute,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample energy-distance test with a permutation null. `a` and `b` are
/// row-major with `dim` columns.
pub fn energy_distance_test(a: &[f64], b: &[f64], dim: usize, n_permutations: usize, seed: u64) -> Result<EnergyTest> {
    if dim == 0 || a.len() % dim != 0 || b.len() % dim != 0 {
        return Err(Error::Dimension { expected: dim, got: 0 });
    }
    let (na, nb) = (a.len() / dim, b.len() / dim);
    if na < 2 || nb < 2 {
        return Err(Error::Degenerate("each sample needs at least two points".into()));
    }
    let n = na + nb;
    let pooled: Vec<&[f64]> = a.chunks(dim).chain(b.chunks(dim)).collect();
    let rows = exec::map_range(n, |i| {
        (0..n)
            .map(|j| l2(pooled[i].iter().zip(pooled[j]).map(|(x, y)| x - y)))
            .collect::<Vec<f64>>()
    });
    let total: f64 = rows.iter().map(|r| exec::pairwise_sum(r)).sum();
    if total == 0.0 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let stat = |labels: &[bool]| {
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let dist = rows[i][j];
                match (labels[i], labels[j]) {
                    (true, true) => aa += dist,
                    (false, false) => bb += dist,
                    _ => ab += dist,
                }
            }
        }
        let (fa, fb) = (na as f64, nb as f64);
        // ab counts every cross pair twice
        ab / (fa * fb) - aa / (fa * fa) - bb / (fb * fb)
    };
    let labels: Vec<bool> = (0..n).map(|i| i < na).collect();
    let observed = stat(&labels);
    let streams = Streams::new(seed, "permutation");
    let exceed = exec::map_range(n_permutations, |p| {
        use rand::seq::SliceRandom;
        let mut l = labels.clone();
        l.shuffle(&mut streams.stream(p as u64));
        stat(&l) >= observed
    });
    let count = exceed.iter().filter(|&&e| e).count();
    Ok(EnergyTest {
        statistic: observed,
        p_value: (1 + count) as f64 / (1 + n_permutations) as f64,
    })
}

/// Polar angle of each planar row, in `(-pi, pi]`.
pub fn angles(samples: &[f64]) -> Vec<f64> {
    samples.chunks(2).map(|p| p[1].atan2(p[0])).collect()
}
