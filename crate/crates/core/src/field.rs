//! The drift interface shared by learned models and analytic oracles.

use std::sync::Arc;

use crate::error::{check_dim, Result};

/// A drift `b_s(x, x0)` on `R^d`.
///
/// Implementations must be shareable read-only across worker threads.
pub trait DriftField: Sync + Send {
    fn dim(&self) -> usize;

    fn drift_into(&self, s: f64, x: &[f64], x0: &[f64], out: &mut [f64]) -> Result<()>;

    fn drift(&self, s: f64, x: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), x0.len())?;
        let mut out = vec![0.0; self.dim()];
        self.drift_into(s, x, x0, &mut out)?;
        Ok(out)
    }

    /// Evaluate `n = s.len()` rows at once; `xs`, `x0s` and `out` are
    /// row-major `n x d`. Override when batching is cheaper.
    fn drift_batch(&self, s: &[f64], xs: &[f64], x0s: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        for (k, &sk) in s.iter().enumerate() {
            let r = k * d..(k + 1) * d;
            self.drift_into(sk, &xs[r.clone()], &x0s[r.clone()], &mut out[r])?;
        }
        Ok(())
    }
}

impl<T: DriftField + ?Sized> DriftField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn drift_into(&self, s: f64, x: &[f64], x0: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).drift_into(s, x, x0, out)
    }
    fn drift_batch(&self, s: &[f64], xs: &[f64], x0s: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).drift_batch(s, xs, x0s, out)
    }
}

impl<T: DriftField + ?Sized> DriftField for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn drift_into(&self, s: f64, x: &[f64], x0: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).drift_into(s, x, x0, out)
    }
    fn drift_batch(&self, s: &[f64], xs: &[f64], x0s: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).drift_batch(s, xs, x0s, out)
    }
}

impl<T: DriftField + ?Sized> DriftField for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn drift_into(&self, s: f64, x: &[f64], x0: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).drift_into(s, x, x0, out)
    }
    fn drift_batch(&self, s: &[f64], xs: &[f64], x0s: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).drift_batch(s, xs, x0s, out)
    }
}

/// Adapter turning a closure `(s, x, x0, out)` into a [`DriftField`].
pub struct FnDrift<F> {
    dim: usize,
    f: F,
}

impl<F> FnDrift<F>
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) + Sync + Send,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> DriftField for FnDrift<F>
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) + Sync + Send,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift_into(&self, s: f64, x: &[f64], x0: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(s, x, x0, out);
        Ok(())
    }
}

/// `b + delta` for a fixed vector `delta`.
pub struct ShiftedDrift<D> {
    pub inner: D,
    pub delta: Vec<f64>,
}

impl<D: DriftField> DriftField for ShiftedDrift<D> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn drift_into(&self, s: f64, x: &[f64], x0: &[f64], out: &mut [f64]) -> Result<()> {
        self.inner.drift_into(s, x, x0, out)?;
        for (o, d) in out.iter_mut().zip(&self.delta) {
            *o += d;
        }
        Ok(())
    }
}
