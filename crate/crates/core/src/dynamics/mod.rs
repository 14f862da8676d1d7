//! Ground-truth data generators and the transition-pair datasets they emit.

pub mod jump;
pub mod navier_stokes;
pub mod spectrum;

pub use jump::{simulate_jump_diffusion, JumpDiffusionConfig};
pub use navier_stokes::{simulate_ns, NavierStokesConfig, NsSolver};
pub use spectrum::{downsample, enstrophy_spectrum};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::interpolant::SamplePair;
use crate::rng::Streams;

/// Pairs `(x_t, x_{t + lag})` stored as two row-major `n x dim` arrays.
///
/// `scale` is the factor the raw states were divided by (1 when unscaled).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionDataset {
    pub dim: usize,
    pub lag: f64,
    pub scale: f64,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
}

impl TransitionDataset {
    pub fn new(dim: usize, lag: f64, x0: Vec<f64>, x1: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("dataset dimension must be positive".into()));
        }
        check_dim(x0.len(), x1.len())?;
        if x0.len() % dim != 0 {
            return Err(Error::Dimension {
                expected: dim,
                got: x0.len() % dim,
            });
        }
        Ok(Self {
            dim,
            lag,
            scale: 1.0,
            x0,
            x1,
        })
    }

    pub fn from_pairs(lag: f64, pairs: &[SamplePair]) -> Result<Self> {
        let first = pairs.first().ok_or(Error::Empty("pair list"))?;
        let dim = first.dim();
        let mut x0 = Vec::with_capacity(pairs.len() * dim);
        let mut x1 = Vec::with_capacity(pairs.len() * dim);
        for p in pairs {
            check_dim(dim, p.x0.len())?;
            check_dim(dim, p.x1.len())?;
            x0.extend_from_slice(&p.x0);
            x1.extend_from_slice(&p.x1);
        }
        Self::new(dim, lag, x0, x1)
    }

    pub fn len(&self) -> usize {
        self.x0.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }

    pub fn x0_row(&self, k: usize) -> &[f64] {
        &self.x0[k * self.dim..(k + 1) * self.dim]
    }

    pub fn x1_row(&self, k: usize) -> &[f64] {
        &self.x1[k * self.dim..(k + 1) * self.dim]
    }

    pub fn pair(&self, k: usize) -> SamplePair {
        SamplePair {
            x0: self.x0_row(k).to_vec(),
            x1: self.x1_row(k).to_vec(),
        }
    }

    pub fn to_pairs(&self) -> Vec<SamplePair> {
        (0..self.len()).map(|k| self.pair(k)).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut x0 = Vec::with_capacity(idx.len() * self.dim);
        let mut x1 = Vec::with_capacity(idx.len() * self.dim);
        for &k in idx {
            x0.extend_from_slice(self.x0_row(k));
            x1.extend_from_slice(self.x1_row(k));
        }
        Self {
            dim: self.dim,
            lag: self.lag,
            scale: self.scale,
            x0,
            x1,
        }
    }

    /// Contiguous split: the first `train_fraction` of pairs for training,
    /// the rest held out.
    pub fn split(&self, train_fraction: f64) -> (Self, Self) {
        let n = self.len();
        let cut = ((n as f64) * train_fraction).round() as usize;
        let cut = cut.clamp(1.min(n), n);
        let idx: Vec<usize> = (0..n).collect();
        (self.subset(&idx[..cut]), self.subset(&idx[cut..]))
    }

    /// Random permutation of the pairs.
    pub fn shuffled(&self, streams: &Streams) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut streams.stream(0));
        self.subset(&idx)
    }

    /// Divide both states by `factor` and record it in `scale`.
    pub fn rescale(&mut self, factor: f64) {
        for v in self.x0.iter_mut().chain(self.x1.iter_mut()) {
            *v /= factor;
        }
        self.scale *= factor;
    }
}
