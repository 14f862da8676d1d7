//! Interpolant coefficient schedules and the quantities derived from them.
//!
//! A [`Schedule`] provides `alpha`, `beta`, `sigma` and their derivatives on
//! `[0, 1]`. The builtin kinds use `alpha = 1 - s`, `sigma = eps (1 - s)` with
//! `beta = s` or `beta = s^2`; tabulated schedules interpolate caller-supplied
//! (value, derivative) knots with cubic Hermite polynomials.
//!
//! From a schedule we derive
//!
//! * `A_s = [s sigma (beta' sigma - beta sigma')]^-1`,
//! * `c_s(x, x0) = beta' x + (beta alpha' - beta' alpha) x0`,
//! * the score `A_s [beta_s b - c_s]` of the time-`s` conditional density,
//! * the diffusion-tuned drift `b + (g^2 - sigma^2) / 2 * score`,
//! * the KL-optimal (Föllmer) diffusion coefficient `g^F`,
//! * the rate `a_s = d/ds log[(beta^2 + s sigma^2) / beta]` of the linear
//!   reference process.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Coefficient values and their `s`-derivatives at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub alpha_dot: f64,
    pub beta_dot: f64,
    pub sigma_dot: f64,
}

/// One knot of a tabulated schedule. `sigma` values are multiplied by the
/// schedule's `epsilon`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleKnot {
    pub s: f64,
    pub alpha: f64,
    pub alpha_dot: f64,
    pub beta: f64,
    pub beta_dot: f64,
    pub sigma: f64,
    pub sigma_dot: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    LinearBeta,
    QuadraticBeta,
    Tabulated { knots: Vec<ScheduleKnot> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    kind: ScheduleKind,
    epsilon: f64,
}

/// Grid resolution used to validate tabulated schedules at load time.
const VALIDATION_GRID: usize = 4096;

fn check_time(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::Domain { s })
    }
}

fn check_interior(s: f64, what: &'static str) -> Result<()> {
    check_time(s)?;
    if s == 0.0 || s == 1.0 {
        Err(Error::Singular { what, s })
    } else {
        Ok(())
    }
}

impl Schedule {
    pub fn linear(epsilon: f64) -> Result<Self> {
        Self::new(ScheduleKind::LinearBeta, epsilon)
    }

    pub fn quadratic(epsilon: f64) -> Result<Self> {
        Self::new(ScheduleKind::QuadraticBeta, epsilon)
    }

    pub fn tabulated(knots: Vec<ScheduleKnot>, epsilon: f64) -> Result<Self> {
        Self::new(ScheduleKind::Tabulated { knots }, epsilon)
    }

    pub fn new(kind: ScheduleKind, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidSchedule(format!("epsilon must be positive, got {epsilon}")));
        }
        let sched = Self { kind, epsilon };
        if let ScheduleKind::Tabulated { knots } = &sched.kind {
            validate_knots(knots)?;
            sched.validate_on_grid(VALIDATION_GRID)?;
        }
        Ok(sched)
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Coefficients and derivatives at `s`.
    pub fn eval(&self, s: f64) -> Result<Coefficients> {
        check_time(s)?;
        Ok(self.eval_unchecked(s))
    }

    pub(crate) fn eval_unchecked(&self, s: f64) -> Coefficients {
        let eps = self.epsilon;
        match &self.kind {
            ScheduleKind::LinearBeta => Coefficients {
                alpha: 1.0 - s,
                beta: s,
                sigma: eps * (1.0 - s),
                alpha_dot: -1.0,
                beta_dot: 1.0,
                sigma_dot: -eps,
            },
            ScheduleKind::QuadraticBeta => Coefficients {
                alpha: 1.0 - s,
                beta: s * s,
                sigma: eps * (1.0 - s),
                alpha_dot: -1.0,
                beta_dot: 2.0 * s,
                sigma_dot: -eps,
            },
            ScheduleKind::Tabulated { knots } => {
                let (lo, hi) = bracket(knots, s);
                let (a, b) = (&knots[lo], &knots[hi]);
                let (alpha, alpha_dot) = hermite(a.s, b.s, a.alpha, a.alpha_dot, b.alpha, b.alpha_dot, s);
                let (beta, beta_dot) = hermite(a.s, b.s, a.beta, a.beta_dot, b.beta, b.beta_dot, s);
                let (sigma, sigma_dot) = hermite(a.s, b.s, a.sigma, a.sigma_dot, b.sigma, b.sigma_dot, s);
                Coefficients {
                    alpha,
                    beta,
                    sigma: eps * sigma,
                    alpha_dot,
                    beta_dot,
                    sigma_dot: eps * sigma_dot,
                }
            }
        }
    }

    /// `A_s`; singular at both endpoints.
    pub fn coeff_a(&self, s: f64) -> Result<f64> {
        check_interior(s, "A_s")?;
        let c = self.eval_unchecked(s);
        Ok(1.0 / (s * c.sigma * (c.beta_dot * c.sigma - c.beta * c.sigma_dot)))
    }

    /// `c_s(x, x0) = beta' x + (beta alpha' - beta' alpha) x0`.
    pub fn coeff_c(&self, s: f64, x: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
        check_time(s)?;
        check_dim(x.len(), x0.len())?;
        let c = self.eval_unchecked(s);
        let k0 = c.beta * c.alpha_dot - c.beta_dot * c.alpha;
        Ok(x.iter().zip(x0).map(|(&xi, &x0i)| c.beta_dot * xi + k0 * x0i).collect())
    }

    /// `lim s beta'/beta`, with the analytic value at `s = 0`.
    fn log_beta_rate_times_s(&self, s: f64) -> f64 {
        if s > 0.0 {
            let c = self.eval_unchecked(s);
            return s * c.beta_dot / c.beta;
        }
        match &self.kind {
            ScheduleKind::LinearBeta => 1.0,
            ScheduleKind::QuadraticBeta => 2.0,
            ScheduleKind::Tabulated { knots } => {
                // Leading order of beta at 0 from the first Hermite segment.
                let (a, b) = (&knots[0], &knots[1]);
                let h = b.s - a.s;
                let second = (-6.0 * a.beta - 4.0 * h * a.beta_dot + 6.0 * b.beta - 2.0 * h * b.beta_dot) / (h * h);
                if a.beta_dot > 1e-12 {
                    1.0
                } else if second > 1e-12 {
                    2.0
                } else {
                    3.0
                }
            }
        }
    }

    /// `|g^F_s|^2 = 2 s sigma (beta'/beta sigma - sigma') - sigma^2` (signed).
    fn follmer_g_sq_signed(&self, s: f64) -> f64 {
        let c = self.eval_unchecked(s);
        let r = self.log_beta_rate_times_s(s);
        2.0 * r * c.sigma * c.sigma - 2.0 * s * c.sigma * c.sigma_dot - c.sigma * c.sigma
    }

    /// KL-optimal diffusion coefficient; finite on all of `[0, 1]`.
    pub fn follmer_g(&self, s: f64) -> Result<f64> {
        check_time(s)?;
        Ok(self.follmer_g_sq_signed(s).abs().sqrt())
    }

    /// Score of the time-`s` conditional density expressed through the drift.
    pub fn score_from_drift(&self, b: &[f64], s: f64, x: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
        check_interior(s, "score_from_drift")?;
        check_dim(x.len(), b.len())?;
        let a = self.coeff_a(s)?;
        let beta = self.eval_unchecked(s).beta;
        let c = self.coeff_c(s, x, x0)?;
        Ok(b.iter().zip(&c).map(|(&bi, &ci)| a * (beta * bi - ci)).collect())
    }

    /// `a_s = beta'/beta - |g^F_s|^2 / (beta^2 + s sigma^2)`.
    pub fn reference_rate(&self, s: f64) -> Result<f64> {
        check_interior(s, "reference_rate")?;
        let c = self.eval_unchecked(s);
        let var = c.beta * c.beta + s * c.sigma * c.sigma;
        Ok(c.beta_dot / c.beta - self.follmer_g_sq_signed(s) / var)
    }

    /// Variance `beta^2 + s sigma^2` of `I_s | x0` per unit target variance.
    pub fn reference_variance(&self, s: f64, target_var: f64) -> Result<f64> {
        let c = self.eval(s)?;
        Ok(c.beta * c.beta * target_var + s * c.sigma * c.sigma)
    }

    fn validate_on_grid(&self, n: usize) -> Result<()> {
        let tol = 1e-14;
        let c0 = self.eval_unchecked(0.0);
        let c1 = self.eval_unchecked(1.0);
        let bad = |what: &str, v: f64| Error::InvalidSchedule(format!("{what} (got {v})"));
        if (c0.alpha - 1.0).abs() > tol {
            return Err(bad("alpha(0) must be 1", c0.alpha));
        }
        if c0.beta.abs() > tol {
            return Err(bad("beta(0) must be 0", c0.beta));
        }
        if (c1.alpha).abs() > tol {
            return Err(bad("alpha(1) must be 0", c1.alpha));
        }
        if (c1.beta - 1.0).abs() > tol {
            return Err(bad("beta(1) must be 1", c1.beta));
        }
        if c1.sigma.abs() > tol {
            return Err(bad("sigma(1) must be 0", c1.sigma));
        }
        for i in 0..=n {
            let s = i as f64 / n as f64;
            let c = self.eval_unchecked(s);
            if s > 0.0 && c.beta_dot <= 0.0 {
                return Err(Error::InvalidSchedule(format!("beta' must be positive on (0,1], fails at s = {s}")));
            }
            if c.sigma_dot >= 0.0 {
                return Err(Error::InvalidSchedule(format!("sigma' must be negative on [0,1], fails at s = {s}")));
            }
            if c.alpha * c.alpha + c.beta * c.beta + c.sigma * c.sigma <= 0.0 {
                return Err(Error::InvalidSchedule(format!("alpha^2+beta^2+sigma^2 vanishes at s = {s}")));
            }
        }
        Ok(())
    }
}

fn validate_knots(knots: &[ScheduleKnot]) -> Result<()> {
    if knots.len() < 2 {
        return Err(Error::InvalidSchedule("a tabulated schedule needs at least two knots".into()));
    }
    if knots[0].s != 0.0 || knots[knots.len() - 1].s != 1.0 {
        return Err(Error::InvalidSchedule("knots must start at s = 0 and end at s = 1".into()));
    }
    if knots.windows(2).any(|w| !(w[1].s > w[0].s)) {
        return Err(Error::InvalidSchedule("knot times must be strictly increasing".into()));
    }
    let finite = knots.iter().all(|k| {
        [k.alpha, k.alpha_dot, k.beta, k.beta_dot, k.sigma, k.sigma_dot]
            .iter()
            .all(|v| v.is_finite())
    });
    if !finite {
        return Err(Error::InvalidSchedule("knot values must be finite".into()));
    }
    Ok(())
}

fn bracket(knots: &[ScheduleKnot], s: f64) -> (usize, usize) {
    let hi = knots.partition_point(|k| k.s < s).clamp(1, knots.len() - 1);
    (hi - 1, hi)
}

/// Cubic Hermite value and derivative on `[s0, s1]`.
fn hermite(s0: f64, s1: f64, p0: f64, m0: f64, p1: f64, m1: f64, s: f64) -> (f64, f64) {
    let h = s1 - s0;
    let t = (s - s0) / h;
    let (t2, t3) = (t * t, t * t * t);
    let value = (2.0 * t3 - 3.0 * t2 + 1.0) * p0
        + (t3 - 2.0 * t2 + t) * h * m0
        + (-2.0 * t3 + 3.0 * t2) * p1
        + (t3 - t2) * h * m1;
    let deriv = ((6.0 * t2 - 6.0 * t) * p0
        + (3.0 * t2 - 4.0 * t + 1.0) * h * m0
        + (-6.0 * t2 + 6.0 * t) * p1
        + (3.0 * t2 - 2.0 * t) * h * m1)
        / h;
    (value, deriv)
}

/// Choice of the diffusion coefficient `g_s` used at sampling time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionKind {
    /// `g = sigma`: the SDE the drift was trained for.
    MatchSigma,
    /// `g = g^F`, the minimizer of the path KL.
    Follmer,
    /// Piecewise-linear `g` through `(s, g)` knots covering `[0, 1]`.
    Tabulated { s: Vec<f64>, g: Vec<f64> },
}

/// Scalars such that `b^g = scale_b b + scale_x x + scale_x0 x0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformCoeffs {
    pub scale_b: f64,
    pub scale_x: f64,
    pub scale_x0: f64,
}

impl TransformCoeffs {
    pub const IDENTITY: Self = Self {
        scale_b: 1.0,
        scale_x: 0.0,
        scale_x0: 0.0,
    };

    pub fn apply(&self, b: &mut [f64], x: &[f64], x0: &[f64]) {
        if *self == Self::IDENTITY {
            return;
        }
        for ((bi, &xi), &x0i) in b.iter_mut().zip(x).zip(x0) {
            *bi = self.scale_b * *bi + self.scale_x * xi + self.scale_x0 * x0i;
        }
    }
}

/// Estimated endpoint limits `s^-1 (g^2 - sigma^2)` at 0 and `g^2 / sigma` at 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndpointLimits {
    pub at_zero: f64,
    pub at_one: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    kind: DiffusionKind,
    reference: Schedule,
}

impl DiffusionSchedule {
    pub fn new(kind: DiffusionKind, reference: &Schedule) -> Result<Self> {
        if let DiffusionKind::Tabulated { s, g } = &kind {
            if s.len() < 2 || s.len() != g.len() {
                return Err(Error::InvalidSchedule("tabulated g needs matching s/g knots (>= 2)".into()));
            }
            if s[0] != 0.0 || s[s.len() - 1] != 1.0 || s.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidSchedule("tabulated g knots must increase from 0 to 1".into()));
            }
            if g.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidSchedule("tabulated g must be finite and nonnegative".into()));
            }
        }
        Ok(Self {
            kind,
            reference: reference.clone(),
        })
    }

    pub fn match_sigma(reference: &Schedule) -> Self {
        Self {
            kind: DiffusionKind::MatchSigma,
            reference: reference.clone(),
        }
    }

    pub fn follmer(reference: &Schedule) -> Self {
        Self {
            kind: DiffusionKind::Follmer,
            reference: reference.clone(),
        }
    }

    pub fn kind(&self) -> &DiffusionKind {
        &self.kind
    }

    pub fn reference(&self) -> &Schedule {
        &self.reference
    }

    /// `g_s`.
    pub fn g(&self, s: f64) -> Result<f64> {
        check_time(s)?;
        Ok(self.g_unchecked(s))
    }

    pub(crate) fn g_unchecked(&self, s: f64) -> f64 {
        match &self.kind {
            DiffusionKind::MatchSigma => self.reference.eval_unchecked(s).sigma,
            DiffusionKind::Follmer => self.reference.follmer_g_sq_signed(s).abs().sqrt(),
            DiffusionKind::Tabulated { s: knots, g } => {
                let hi = knots.partition_point(|&k| k < s).clamp(1, knots.len() - 1);
                let t = (s - knots[hi - 1]) / (knots[hi] - knots[hi - 1]);
                g[hi - 1] + t * (g[hi] - g[hi - 1])
            }
        }
    }

    /// Coefficients of the affine map `b -> b^g` at an interior time.
    pub fn transform_coeffs(&self, s: f64) -> Result<TransformCoeffs> {
        if self.kind == DiffusionKind::MatchSigma {
            check_time(s)?;
            return Ok(TransformCoeffs::IDENTITY);
        }
        check_interior(s, "transform_drift")?;
        let c = self.reference.eval_unchecked(s);
        let g = self.g_unchecked(s);
        let a = self.reference.coeff_a(s)?;
        let k = 0.5 * (g * g - c.sigma * c.sigma) * a;
        Ok(TransformCoeffs {
            scale_b: 1.0 + k * c.beta,
            scale_x: -k * c.beta_dot,
            scale_x0: -k * (c.beta * c.alpha_dot - c.beta_dot * c.alpha),
        })
    }

    /// `b^g = b + (g^2 - sigma^2) / 2 * A_s [beta b - c_s(x, x0)]`.
    pub fn transform_drift(&self, b: &[f64], s: f64, x: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
        check_dim(b.len(), x.len())?;
        check_dim(x.len(), x0.len())?;
        let coeffs = self.transform_coeffs(s)?;
        let mut out = b.to_vec();
        coeffs.apply(&mut out, x, x0);
        Ok(out)
    }

    /// Path-KL weight `|1 + beta A (g^2 - sigma^2) / 2|^2 / (2 g^2)` at an interior time.
    pub fn path_kl_weight(&self, s: f64) -> Result<f64> {
        let c = self.reference.eval(s)?;
        let g = self.g_unchecked(s);
        if g == 0.0 {
            return Err(Error::Singular { what: "path-KL weight (g = 0)", s });
        }
        if self.kind == DiffusionKind::MatchSigma {
            return Ok(1.0 / (2.0 * g * g));
        }
        let a = self.reference.coeff_a(s)?;
        let bracket = 1.0 + 0.5 * c.beta * a * (g * g - c.sigma * c.sigma);
        Ok(bracket * bracket / (2.0 * g * g))
    }

    /// Probe the well-posedness limits on geometric grids approaching the
    /// endpoints; errors if either fails to settle to a finite value.
    pub fn endpoint_limits(&self) -> Result<EndpointLimits> {
        let near_zero = |s: f64| {
            let g = self.g_unchecked(s);
            let sigma = self.reference.eval_unchecked(s).sigma;
            (g * g - sigma * sigma) / s
        };
        let near_one = |s: f64| {
            let g = self.g_unchecked(s);
            let sigma = self.reference.eval_unchecked(s).sigma;
            g * g / sigma
        };
        let at_zero = settle((4..=9).map(|k| near_zero(10f64.powi(-k))))
            .ok_or_else(|| Error::Singular { what: "limit of (g^2 - sigma^2)/s", s: 0.0 })?;
        let at_one = settle((4..=9).map(|k| near_one(1.0 - 10f64.powi(-k))))
            .ok_or_else(|| Error::Singular { what: "limit of g^2/sigma", s: 1.0 })?;
        Ok(EndpointLimits { at_zero, at_one })
    }
}

/// Last value of a sequence if its final increments shrink to a small,
/// finite limit.
fn settle(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    if v.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let n = v.len();
    let last = (v[n - 1] - v[n - 2]).abs();
    let prev = (v[n - 2] - v[n - 3]).abs();
    let scale = v[n - 1].abs().max(1.0);
    if last <= 1e-3 * scale && last <= prev + 1e-12 * scale {
        Some(v[n - 1])
    } else {
        None
    }
}

/// Free-function form of [`DiffusionSchedule::transform_drift`] that also
/// checks `g` was built for `sched`.
pub fn transform_drift(
    sched: &Schedule,
    g: &DiffusionSchedule,
    b: &[f64],
    s: f64,
    x: &[f64],
    x0: &[f64],
) -> Result<Vec<f64>> {
    if g.reference() != sched {
        return Err(Error::Config("diffusion schedule was built for a different interpolant".into()));
    }
    g.transform_drift(b, s, x, x0)
}
