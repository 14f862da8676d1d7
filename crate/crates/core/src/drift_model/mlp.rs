//! Fully connected drift network with hand-written reverse mode.
//!
//! Parameters live in one flat vector, layer by layer: the `out x in` weight
//! matrix in row-major order followed by the `out` biases. The optimizer and
//! the checkpoint format both work directly on that vector.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::exec;
use crate::field::DriftField;
use crate::interpolant::draw_into;
use crate::rng::{normal, Streams};
use crate::schedules::Schedule;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Silu,
    Tanh,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Silu => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Activation::Silu),
            1 => Ok(Activation::Tanh),
            _ => Err(Error::Format(format!("unknown activation id {id}"))),
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    #[inline]
    fn deriv(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let sg = 1.0 / (1.0 + (-z).exp());
                sg * (1.0 + z * (1.0 - sg))
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Rows per work item in batched loss/gradient evaluation. Fixed so that the
/// reduction tree, and hence the result, never depends on the thread count.
pub const GRAD_CHUNK: usize = 256;

/// `b_s(x, x0)` as an MLP on the concatenated input `[x, x0, s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralDrift {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Value and gradient of the mean square loss on a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub grad: Vec<f64>,
}

pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn check_widths(widths: &[usize]) -> Result<usize> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::Config(format!("invalid layer widths {widths:?}")));
    }
    let d = *widths.last().unwrap();
    if widths[0] != 2 * d + 1 {
        return Err(Error::Config(format!(
            "input width {} must be 2 * output width + 1 = {}",
            widths[0],
            2 * d + 1
        )));
    }
    Ok(d)
}

impl NeuralDrift {
    /// Fan-in scaled Gaussian weights, zero biases, zero final layer.
    pub fn new(dim: usize, hidden: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut widths = vec![2 * dim + 1];
        widths.extend_from_slice(hidden);
        widths.push(dim);
        check_widths(&widths)?;
        let mut rng = Streams::new(seed, "init").stream(0);
        let mut params = Vec::with_capacity(param_count(&widths));
        let last = widths.len() - 2;
        for (l, w) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = (1.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(if l == last { 0.0 } else { std * normal(&mut rng) });
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            widths,
            activation,
            params,
        })
    }

    pub fn from_params(widths: Vec<usize>, activation: Activation, params: Vec<f64>) -> Result<Self> {
        check_widths(&widths)?;
        check_dim(param_count(&widths), params.len())?;
        Ok(Self {
            widths,
            activation,
            params,
        })
    }

    /// Randomize every parameter, including the final layer.
    pub fn randomize(&mut self, rng: &mut impl Rng, scale: f64) {
        for p in &mut self.params {
            *p = scale * normal(rng);
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn offsets(&self, l: usize) -> (usize, usize, usize) {
        let start: usize = param_count(&self.widths[..=l]);
        let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
        (start, start + fan_in * fan_out, start + fan_in * fan_out + fan_out)
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (w0, b0, end) = self.offsets(l);
        let w = ArrayView2::from_shape((self.widths[l + 1], self.widths[l]), &self.params[w0..b0]).unwrap();
        (w, ArrayView1::from(&self.params[b0..end]))
    }

    /// Apply the network to raw input rows (`n x (2d + 1)`).
    pub fn forward_rows(&self, input: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut a = input.to_owned();
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let mut z = a.dot(&w.t());
            z += &b;
            if l + 1 < self.n_layers() {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            a = z;
        }
        a
    }

    pub fn forward(&self, x: &[f64], x0: &[f64], s: f64) -> Result<Vec<f64>> {
        let d = self.dim();
        check_dim(d, x.len())?;
        check_dim(d, x0.len())?;
        let mut out = vec![0.0; d];
        self.drift_into(s, x, x0, &mut out)?;
        Ok(out)
    }

    /// Sum of squared residuals and the (unnormalized) parameter gradient of
    /// that sum for one block of rows.
    fn block_grad(&self, input: Array2<f64>, target: ArrayView2<'_, f64>) -> (f64, Vec<f64>) {
        let nl = self.n_layers();
        let act = self.activation;
        // acts[l] is the input to layer l; pre[l] its pre-activation output.
        let mut acts = Vec::with_capacity(nl);
        let mut pre = Vec::with_capacity(nl);
        let mut a = input;
        for l in 0..nl {
            let (w, b) = self.layer(l);
            let mut z = a.dot(&w.t());
            z += &b;
            let next = if l + 1 < nl { z.mapv(|v| act.apply(v)) } else { z.clone() };
            acts.push(a);
            pre.push(z);
            a = next;
        }
        let resid = &a - &target;
        let sq: f64 = resid.iter().map(|r| r * r).sum();
        let mut delta = resid * 2.0;
        let mut grad = vec![0.0; self.params.len()];
        for l in (0..nl).rev() {
            let (w0, b0, end) = self.offsets(l);
            let gw = delta.t().dot(&acts[l]);
            let gb: Array1<f64> = delta.sum_axis(Axis(0));
            grad[w0..b0].copy_from_slice(gw.as_slice().expect("standard layout"));
            grad[b0..end].copy_from_slice(gb.as_slice().unwrap());
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut back = delta.dot(&w);
                back.zip_mut_with(&pre[l - 1], |g, &z| *g *= act.deriv(z));
                delta = back;
            }
        }
        (sq, grad)
    }

    /// Loss and gradient on flat row-major draws: `x0s`, `x1s`, `zs` are
    /// `n x d`, `s` has length `n`.
    pub fn loss_gradient_rows(
        &self,
        sched: &Schedule,
        x0s: &[f64],
        x1s: &[f64],
        s: &[f64],
        zs: &[f64],
    ) -> Result<LossGradient> {
        let d = self.dim();
        let n = s.len();
        if n == 0 {
            return Err(Error::Empty("loss batch"));
        }
        for len in [x0s.len(), x1s.len(), zs.len()] {
            check_dim(n * d, len)?;
        }
        let parts = exec::map_chunks(n, GRAD_CHUNK, |range| -> Result<(f64, Vec<f64>)> {
            let m = range.len();
            let mut input = Array2::zeros((m, 2 * d + 1));
            let mut target = Array2::zeros((m, d));
            let mut i = vec![0.0; d];
            let mut r = vec![0.0; d];
            for (row, k) in range.enumerate() {
                let c = sched.eval(s[k])?;
                let rows = k * d..(k + 1) * d;
                draw_into(&c, s[k], &x0s[rows.clone()], &x1s[rows.clone()], &zs[rows.clone()], &mut i, &mut r);
                for j in 0..d {
                    input[[row, j]] = i[j];
                    input[[row, d + j]] = x0s[k * d + j];
                    target[[row, j]] = r[j];
                }
                input[[row, 2 * d]] = s[k];
            }
            Ok(self.block_grad(input, target.view()))
        });
        let mut sq = Vec::with_capacity(parts.len());
        let mut grads = Vec::with_capacity(parts.len());
        for p in parts {
            let (a, g) = p?;
            sq.push(a);
            grads.push(g);
        }
        let inv = 1.0 / n as f64;
        let mut grad = exec::pairwise_sum_vecs(grads);
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok(LossGradient {
            loss: exec::pairwise_sum(&sq) * inv,
            grad,
        })
    }

    /// Exact gradient of the empirical square loss over `batch`.
    pub fn loss_gradient(
        &self,
        sched: &Schedule,
        batch: &[crate::interpolant::SamplePair],
        s_draws: &[f64],
        z_draws: &[Vec<f64>],
    ) -> Result<LossGradient> {
        check_dim(batch.len(), s_draws.len())?;
        check_dim(batch.len(), z_draws.len())?;
        let d = self.dim();
        let mut x0s = Vec::with_capacity(batch.len() * d);
        let mut x1s = Vec::with_capacity(batch.len() * d);
        let mut zs = Vec::with_capacity(batch.len() * d);
        for (p, z) in batch.iter().zip(z_draws) {
            check_dim(d, p.x0.len())?;
            check_dim(d, p.x1.len())?;
            check_dim(d, z.len())?;
            x0s.extend_from_slice(&p.x0);
            x1s.extend_from_slice(&p.x1);
            zs.extend_from_slice(z);
        }
        self.loss_gradient_rows(sched, &x0s, &x1s, s_draws, &zs)
    }
}

impl DriftField for NeuralDrift {
    fn dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn drift_into(&self, s: f64, x: &[f64], x0: &[f64], out: &mut [f64]) -> Result<()> {
        self.drift_batch(&[s], x, x0, out)
    }

    fn drift_batch(&self, s: &[f64], xs: &[f64], x0s: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        let n = s.len();
        let mut input = Array2::zeros((n, 2 * d + 1));
        for k in 0..n {
            for j in 0..d {
                input[[k, j]] = xs[k * d + j];
                input[[k, d + j]] = x0s[k * d + j];
            }
            input[[k, 2 * d]] = s[k];
        }
        let y = self.forward_rows(input.view());
        out[..n * d].copy_from_slice(y.as_slice().expect("standard layout"));
        Ok(())
    }
}
