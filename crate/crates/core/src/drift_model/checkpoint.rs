//! Binary checkpoint for [`NeuralDrift`] models.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic         4 bytes  "SIFD"
//! version       u32      1
//! n_widths      u32
//! widths        n_widths x u32   (input, hidden.., output)
//! activation    u8       0 = silu, 1 = tanh
//! schedule      u8       0 = linear beta, 1 = quadratic beta, 2 = tabulated
//! epsilon       f64
//! n_params      u64
//! params        n_params x f64   layer by layer: weights (out x in, row-major), biases
//! step          u64      optimizer steps taken
//! has_opt       u8       1 if optimizer moments follow
//! [m, v]        2 x n_params x f64
//! [n_knots      u32, then per knot 7 x f64: s, alpha, alpha', beta, beta', sigma, sigma']
//!               present only for tabulated schedules
//! ```

use std::io::{Read, Write};

use crate::drift_model::mlp::{param_count, Activation, NeuralDrift};
use crate::drift_model::optim::{AdamW, AdamWConfig};
use crate::error::{Error, Result};
use crate::schedules::{Schedule, ScheduleKind, ScheduleKnot};

pub const MAGIC: &[u8; 4] = b"SIFD";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: NeuralDrift,
    pub schedule: Schedule,
    pub step: u64,
    /// First and second moments, when saved for resuming.
    pub moments: Option<(Vec<f64>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn optimizer(&self, cfg: AdamWConfig) -> AdamW {
        let mut opt = AdamW::new(cfg, self.model.n_params());
        opt.step = self.step;
        if let Some((m, v)) = &self.moments {
            opt.m.clone_from(m);
            opt.v.clone_from(v);
        }
        opt
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let widths = self.model.widths();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(widths.len() as u32).to_le_bytes())?;
        for &k in widths {
            w.write_all(&(k as u32).to_le_bytes())?;
        }
        w.write_all(&[self.model.activation().id()])?;
        let kind = match self.schedule.kind() {
            ScheduleKind::LinearBeta => 0u8,
            ScheduleKind::QuadraticBeta => 1,
            ScheduleKind::Tabulated { .. } => 2,
        };
        w.write_all(&[kind])?;
        w.write_all(&self.schedule.epsilon().to_le_bytes())?;
        w.write_all(&(self.model.n_params() as u64).to_le_bytes())?;
        write_f64s(w, self.model.params())?;
        w.write_all(&self.step.to_le_bytes())?;
        match &self.moments {
            Some((m, v)) => {
                w.write_all(&[1])?;
                write_f64s(w, m)?;
                write_f64s(w, v)?;
            }
            None => w.write_all(&[0])?,
        }
        if let ScheduleKind::Tabulated { knots } = self.schedule.kind() {
            w.write_all(&(knots.len() as u32).to_le_bytes())?;
            for k in knots {
                write_f64s(w, &[k.s, k.alpha, k.alpha_dot, k.beta, k.beta_dot, k.sigma, k.sigma_dot])?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a drift checkpoint (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let nw = read_u32(r)? as usize;
        if nw > 1024 {
            return Err(Error::Format(format!("implausible layer count {nw}")));
        }
        let widths = (0..nw).map(|_| read_u32(r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let activation = Activation::from_id(read_u8(r)?)?;
        let kind = read_u8(r)?;
        let epsilon = read_f64(r)?;
        let n = read_u64(r)? as usize;
        if n != param_count(&widths) {
            return Err(Error::Format(format!("parameter count {n} does not match widths {widths:?}")));
        }
        let params = read_f64s(r, n)?;
        let step = read_u64(r)?;
        let moments = match read_u8(r)? {
            0 => None,
            1 => Some((read_f64s(r, n)?, read_f64s(r, n)?)),
            b => return Err(Error::Format(format!("bad optimizer flag {b}"))),
        };
        let schedule = match kind {
            0 => Schedule::linear(epsilon)?,
            1 => Schedule::quadratic(epsilon)?,
            2 => {
                let nk = read_u32(r)? as usize;
                let mut knots = Vec::with_capacity(nk.min(1 << 16));
                for _ in 0..nk {
                    let v = read_f64s(r, 7)?;
                    knots.push(ScheduleKnot {
                        s: v[0],
                        alpha: v[1],
                        alpha_dot: v[2],
                        beta: v[3],
                        beta_dot: v[4],
                        sigma: v[5],
                        sigma_dot: v[6],
                    });
                }
                Schedule::tabulated(knots, epsilon)?
            }
            k => return Err(Error::Format(format!("unknown schedule kind {k}"))),
        };
        let model = NeuralDrift::from_params(widths, activation, params).map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self {
            model,
            schedule,
            step,
            moments,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

fn write_f64s(w: &mut impl Write, v: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 8);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}
