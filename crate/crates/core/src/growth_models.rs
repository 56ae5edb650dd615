//! Sigmoid growth curves for yearly cumulative series.
//!
//! Four parameterisations share one ODE family, `dN/dt = w·N·(mⁿ − Nⁿ)/n`:
//!
//! - [`GrowthParams::Logistic`]: `n = 1`, closed form anchored at `N(1) = 1`.
//! - [`GrowthParams::Generalized`]: any real `n > 0`, same anchoring.
//! - [`GrowthParams::GompertzStrict`]: the `n → 0` limit, `dN/dt = w·N·ln(m/N)`,
//!   anchored at `N(1) = 1`.
//! - [`GrowthParams::GompertzFree`]: `N(t) = m·exp(−b·exp(−c·t))` with `b` and `c`
//!   released from the anchoring; evaluated on the caller's raw time axis.
//!
//! Time is measured in days; `t = 1` is the first day of the year.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First fiscal day. The anchored closed forms satisfy `N(T0) = 1`.
pub const T0: f64 = 1.0;

/// Largest fixed RK4 step accepted by [`integrate_with_step`], in days.
pub const MAX_RK4_STEP: f64 = 0.1;

/// Step used by [`integrate`]. At 0.1 day the Gompertz early phase (rate up to
/// `w·ln m`) accumulates errors near 1e-7; 0.01 day keeps them below 1e-10.
pub const DEFAULT_RK4_STEP: f64 = 0.01;

const EXP_LIMIT: f64 = 700.0;

#[inline]
fn exp_guarded(x: f64) -> f64 {
    x.clamp(-EXP_LIMIT, EXP_LIMIT).exp()
}

#[inline]
fn expm1_guarded(x: f64) -> f64 {
    x.clamp(-EXP_LIMIT, EXP_LIMIT).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    GompertzStrict,
    GompertzFree,
    Generalized,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Logistic,
        ModelKind::GompertzStrict,
        ModelKind::GompertzFree,
        ModelKind::Generalized,
    ];

    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Logistic | ModelKind::GompertzStrict => &["m", "w"],
            ModelKind::GompertzFree => &["m", "b", "c"],
            ModelKind::Generalized => &["m", "w", "n"],
        }
    }

    pub fn parameter_count(self) -> usize {
        self.parameter_names().len()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::GompertzStrict => "gompertz_strict",
            ModelKind::GompertzFree => "gompertz_free",
            ModelKind::Generalized => "generalized",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters of one growth model.
///
/// `m` is the saturation level in series units, `w` and `c` are rates per day,
/// `b` and `n` are dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthParams {
    Logistic { m: f64, w: f64 },
    GompertzStrict { m: f64, w: f64 },
    GompertzFree { m: f64, b: f64, c: f64 },
    Generalized { m: f64, w: f64, n: f64 },
}

fn require(cond: bool, what: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::ParameterDomain(what()))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    require(v.is_finite() && v > 0.0, || format!("{name} must be positive and finite, got {v}"))
}

fn above_one(v: f64) -> Result<()> {
    require(v.is_finite() && v > 1.0, || format!("m must exceed 1 for anchored models, got {v}"))
}

impl GrowthParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            GrowthParams::Logistic { .. } => ModelKind::Logistic,
            GrowthParams::GompertzStrict { .. } => ModelKind::GompertzStrict,
            GrowthParams::GompertzFree { .. } => ModelKind::GompertzFree,
            GrowthParams::Generalized { .. } => ModelKind::Generalized,
        }
    }

    /// Saturation level `m`.
    pub fn saturation(&self) -> f64 {
        match *self {
            GrowthParams::Logistic { m, .. }
            | GrowthParams::GompertzStrict { m, .. }
            | GrowthParams::GompertzFree { m, .. }
            | GrowthParams::Generalized { m, .. } => m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GrowthParams::Logistic { m, w } | GrowthParams::GompertzStrict { m, w } => {
                above_one(m)?;
                positive("w", w)
            }
            GrowthParams::GompertzFree { m, b, c } => {
                positive("m", m)?;
                positive("b", b)?;
                positive("c", c)
            }
            GrowthParams::Generalized { m, w, n } => {
                above_one(m)?;
                positive("w", w)?;
                positive("n", n)
            }
        }
    }

    /// Free parameters in the order given by [`ModelKind::parameter_names`].
    pub fn values(&self) -> Vec<f64> {
        match *self {
            GrowthParams::Logistic { m, w } | GrowthParams::GompertzStrict { m, w } => vec![m, w],
            GrowthParams::GompertzFree { m, b, c } => vec![m, b, c],
            GrowthParams::Generalized { m, w, n } => vec![m, w, n],
        }
    }

    pub fn from_values(kind: ModelKind, values: &[f64]) -> Result<Self> {
        if values.len() != kind.parameter_count() {
            return Err(Error::ParameterDomain(format!(
                "{kind} takes {} parameters, got {}",
                kind.parameter_count(),
                values.len()
            )));
        }
        let p = match kind {
            ModelKind::Logistic => GrowthParams::Logistic {
                m: values[0],
                w: values[1],
            },
            ModelKind::GompertzStrict => GrowthParams::GompertzStrict {
                m: values[0],
                w: values[1],
            },
            ModelKind::GompertzFree => GrowthParams::GompertzFree {
                m: values[0],
                b: values[1],
                c: values[2],
            },
            ModelKind::Generalized => GrowthParams::Generalized {
                m: values[0],
                w: values[1],
                n: values[2],
            },
        };
        p.validate()?;
        Ok(p)
    }

    /// Re-express an anchored Gompertz curve with free `(b, c)`: `c = w`, `b = ln(m)·exp(w)`.
    pub fn to_gompertz_free(&self) -> Option<GrowthParams> {
        match *self {
            GrowthParams::GompertzStrict { m, w } => Some(GrowthParams::GompertzFree {
                m,
                b: m.ln() * w.exp(),
                c: w,
            }),
            GrowthParams::GompertzFree { .. } => Some(*self),
            _ => None,
        }
    }

    /// Curve value at day `t`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        self.validate()?;
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> f64 {
        match *self {
            GrowthParams::Logistic { m, w } => logistic(m, w, t),
            GrowthParams::GompertzStrict { m, w } => gompertz_strict(m, w, t),
            GrowthParams::GompertzFree { m, b, c } => gompertz_free(m, b, c, t),
            GrowthParams::Generalized { m, w, n } => generalized(m, w, n, t),
        }
    }

    /// Growth rate `dN/dt` as a function of the current level.
    pub fn ode_rhs(&self, level: f64) -> Result<f64> {
        self.validate()?;
        let m = self.saturation();
        if !(level > 0.0 && level <= m) {
            return Err(Error::Domain(format!("level {level} outside (0, {m}]")));
        }
        if level == m {
            return Ok(0.0);
        }
        Ok(self.rate_unchecked(level))
    }

    fn rate_unchecked(&self, level: f64) -> f64 {
        match *self {
            GrowthParams::Logistic { m, w } => w * level * (m - level),
            GrowthParams::GompertzStrict { m, w } => w * level * (m / level).ln(),
            GrowthParams::GompertzFree { m, c, .. } => c * level * (m / level).ln(),
            GrowthParams::Generalized { m, w, n } => {
                // mⁿ − Nⁿ = Nⁿ·(exp(n·ln(m/N)) − 1), stable as n → 0
                let gap = level.powf(n) * (n * (m / level).ln()).exp_m1();
                w * level * gap / n
            }
        }
    }

    /// Partial derivatives of `N(t)` with respect to the free parameters.
    pub fn jacobian(&self, t: f64) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(self.jacobian_unchecked(t))
    }

    pub(crate) fn jacobian_unchecked(&self, t: f64) -> Vec<f64> {
        let tau = t - T0;
        match *self {
            GrowthParams::Logistic { m, w } => {
                let a = m - 1.0;
                let e = exp_guarded(-w * m * tau);
                let den = 1.0 + a * e;
                let d_m = 1.0 / den - m * e * (1.0 - a * w * tau) / (den * den);
                let d_w = m * m * a * tau * e / (den * den);
                vec![d_m, d_w]
            }
            GrowthParams::GompertzStrict { m, w } => {
                let n_t = gompertz_strict(m, w, t);
                let decay = exp_guarded(-w * tau);
                let d = -expm1_guarded(-w * tau);
                vec![n_t * d / m, n_t * m.ln() * tau * decay]
            }
            GrowthParams::GompertzFree { m, b, c } => {
                let decay = exp_guarded(-c * t);
                let u = b * decay;
                let n_t = m * exp_guarded(-u);
                vec![exp_guarded(-u), -n_t * decay, n_t * u * t]
            }
            GrowthParams::Generalized { m, w, n } => {
                let ln_m = m.ln();
                let p = exp_guarded(n * ln_m);
                let a = expm1_guarded(n * ln_m);
                let e = exp_guarded(-w * p * tau);
                let s = 1.0 + a * e;
                let ln_s = (a * e).ln_1p();
                let n_t = generalized(m, w, n, t);
                let shape = 1.0 - a * w * tau;
                let dl_dm = 1.0 / m - (p / m) * e * shape / s;
                let dl_dw = a * p * tau * e / (n * s);
                let dl_dn = ln_s / (n * n) - p * ln_m * e * shape / (n * s);
                vec![n_t * dl_dm, n_t * dl_dw, n_t * dl_dn]
            }
        }
    }

    /// Analytic time of maximum growth rate.
    pub fn inflection_time(&self) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            GrowthParams::Logistic { m, w } => T0 + (m - 1.0).ln() / (w * m),
            GrowthParams::GompertzStrict { m, w } => T0 + m.ln().ln() / w,
            GrowthParams::GompertzFree { b, c, .. } => b.ln() / c,
            GrowthParams::Generalized { m, w, n } => {
                let p = (n * m.ln()).exp();
                let a = (n * m.ln()).exp_m1();
                T0 + (a / n).ln() / (w * p)
            }
        })
    }
}

impl fmt::Display for GrowthParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GrowthParams::Logistic { m, w } => write!(f, "logistic(m={m}, w={w})"),
            GrowthParams::GompertzStrict { m, w } => write!(f, "gompertz_strict(m={m}, w={w})"),
            GrowthParams::GompertzFree { m, b, c } => write!(f, "gompertz_free(m={m}, b={b}, c={c})"),
            GrowthParams::Generalized { m, w, n } => write!(f, "generalized(m={m}, w={w}, n={n})"),
        }
    }
}

fn logistic(m: f64, w: f64, t: f64) -> f64 {
    m / (1.0 + (m - 1.0) * exp_guarded(-w * m * (t - T0)))
}

fn gompertz_strict(m: f64, w: f64, t: f64) -> f64 {
    // ln N = ln(m)·(1 − exp(−w(t−1))); exactly 1 at t = 1
    let d = -expm1_guarded(-w * (t - T0));
    exp_guarded(m.ln() * d).min(m)
}

fn gompertz_free(m: f64, b: f64, c: f64, t: f64) -> f64 {
    m * exp_guarded(-b * exp_guarded(-c * t))
}

fn generalized(m: f64, w: f64, n: f64, t: f64) -> f64 {
    if n == 1.0 {
        return logistic(m, w, t);
    }
    // N = s^(−1/n) with s = 1 − q·D = m⁻ⁿ + q·E, q = 1 − m⁻ⁿ, E = exp(−w·mⁿ·(t−1)), D = 1 − E.
    // The D form is exact at t = 1; the E form avoids cancellation near saturation.
    let n_ln_m = n * m.ln();
    let q = -expm1_guarded(-n_ln_m);
    let rate = w * exp_guarded(n_ln_m) * (t - T0);
    let d = -expm1_guarded(-rate);
    let ln_s = if q * d <= 0.5 {
        (-q * d).ln_1p()
    } else {
        (exp_guarded(-n_ln_m) + q * exp_guarded(-rate)).ln()
    };
    exp_guarded(-ln_s / n).min(m)
}

/// Logistic curve `m / (1 + (m−1)·exp(−w·m·(t−1)))`.
pub fn eval_logistic(m: f64, w: f64, t: f64) -> Result<f64> {
    GrowthParams::Logistic { m, w }.eval(t)
}

/// Anchored Gompertz curve `m·exp(−ln(m)·exp(−w·(t−1)))`.
pub fn eval_gompertz_strict(m: f64, w: f64, t: f64) -> Result<f64> {
    GrowthParams::GompertzStrict { m, w }.eval(t)
}

/// Free Gompertz curve `m·exp(−b·exp(−c·t))` on the raw time axis.
pub fn eval_gompertz_free(m: f64, b: f64, c: f64, t: f64) -> Result<f64> {
    GrowthParams::GompertzFree { m, b, c }.eval(t)
}

/// Generalized curve `m·(1 + (mⁿ−1)·exp(−w·mⁿ·(t−1)))^(−1/n)`.
pub fn eval_generalized(m: f64, w: f64, n: f64, t: f64) -> Result<f64> {
    GrowthParams::Generalized { m, w, n }.eval(t)
}

/// Observation days for integration, starting no earlier than [`T0`].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("time grid is empty".into()));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("time grid contains non-finite points".into()));
        }
        if points[0] < T0 {
            return Err(Error::Domain(format!("time grid starts at {} before t0 = {T0}", points[0])));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("time grid must be strictly increasing".into()));
        }
        Ok(Self { t0: T0, points })
    }

    /// Whole days `first..=last`.
    pub fn daily(first: u32, last: u32) -> Result<Self> {
        Self::new((first..=last).map(f64::from).collect())
    }

    /// Every `step` days from `first` up to and including `last` when it falls on the lattice.
    pub fn every(first: u32, last: u32, step: u32) -> Result<Self> {
        if step == 0 {
            return Err(Error::Domain("grid step must be positive".into()));
        }
        Self::new((first..=last).step_by(step as usize).map(f64::from).collect())
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub values: Vec<f64>,
    /// Set when a step overshot the saturation level and was clamped below it.
    pub clamped: bool,
}

/// Integrate the model ODE from `level0` at `t0` with classic RK4 at the default step.
pub fn integrate(params: &GrowthParams, grid: &TimeGrid, level0: f64) -> Result<Trajectory> {
    integrate_with_step(params, grid, level0, DEFAULT_RK4_STEP)
}

/// RK4 with fixed steps no longer than `max_step`; each gap between grid points
/// is split into equal sub-steps so that every grid point is hit exactly.
pub fn integrate_with_step(params: &GrowthParams, grid: &TimeGrid, level0: f64, max_step: f64) -> Result<Trajectory> {
    params.validate()?;
    let m = params.saturation();
    if !(level0 > 0.0 && level0 < m) {
        return Err(Error::Domain(format!("initial level {level0} outside (0, {m})")));
    }
    if !(max_step > 0.0 && max_step <= MAX_RK4_STEP) {
        return Err(Error::Domain(format!("RK4 step {max_step} outside (0, {MAX_RK4_STEP}]")));
    }

    let ceiling = m * (1.0 - f64::EPSILON);
    let mut clamped = false;
    let mut level = level0;
    let mut t = grid.t0();
    let mut values = Vec::with_capacity(grid.len());

    let rate = |y: f64| params.rate_unchecked(y.min(m));

    for &target in grid.points() {
        let gap = target - t;
        if gap > 0.0 {
            let steps = (gap / max_step).ceil().max(1.0) as usize;
            let h = gap / steps as f64;
            for _ in 0..steps {
                let k1 = rate(level);
                let k2 = rate(level + 0.5 * h * k1);
                let k3 = rate(level + 0.5 * h * k2);
                let k4 = rate(level + h * k3);
                level += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                if level >= m {
                    level = ceiling;
                    clamped = true;
                }
            }
            t = target;
        }
        values.push(level);
    }

    Ok(Trajectory { values, clamped })
}
