//! Least-squares calibration of growth models to cumulative series.
//!
//! Levenberg–Marquardt with Marquardt's diagonal scaling and Nielsen's damping
//! update. Positivity is enforced by optimising logarithms of the parameters;
//! the saturation level is kept strictly above the largest observation via
//! `m = m_floor + exp(φ₀)`, `m_floor = (1 + 1e-6)·max(N)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth_models::{GrowthParams, ModelKind};
use crate::series::CumulativeSeries;

const MIN_POINTS: usize = 4;
const M_FLOOR_MARGIN: f64 = 1e-6;
const GENERALIZED_M_LIFT: f64 = 1.02;
const LAMBDA_MAX: f64 = 1e16;
/// R² differences below this are ties, resolved toward fewer parameters.
pub const TIE_TOLERANCE: f64 = 1e-9;
/// Default inflation of the largest observation for the saturation guess.
pub const DEFAULT_M_INFLATION: f64 = 1.05;

/// Time axis handed to the free Gompertz curve. Anchored models always use
/// the day of year, since their closed forms carry the `t − 1` shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeAxis {
    /// `t = 1` on 1 January.
    #[default]
    DayOfYear,
    /// `t = 0` on 1 January.
    ShiftedZero,
}

impl TimeAxis {
    pub fn model_time(self, kind: ModelKind, day: f64) -> f64 {
        match (self, kind) {
            (TimeAxis::ShiftedZero, ModelKind::GompertzFree) => day - 1.0,
            _ => day,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TimeAxis::DayOfYear => "day_of_year",
            TimeAxis::ShiftedZero => "shifted_zero",
        }
    }
}

impl fmt::Display for TimeAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub relative_residual_tolerance: f64,
    pub parameter_step_tolerance: f64,
    pub initial_damping: f64,
    pub damping_growth: f64,
    pub time_axis: TimeAxis,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            relative_residual_tolerance: 1e-10,
            parameter_step_tolerance: 1e-12,
            initial_damping: 1e-3,
            damping_growth: 2.0,
            time_axis: TimeAxis::DayOfYear,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iterations >= 1
            && self.relative_residual_tolerance > 0.0
            && self.parameter_step_tolerance > 0.0
            && self.initial_damping > 0.0
            && self.damping_growth > 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid fit options {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: GrowthParams,
    pub r_squared: f64,
    pub residual_sum_squares: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Asymptotic variances of the natural parameters, `s²·diag((JᵀJ)⁻¹)`.
    pub covariance_diag: Option<Vec<f64>>,
    pub time_axis: TimeAxis,
}

impl FitResult {
    pub fn model(&self) -> ModelKind {
        self.params.kind()
    }

    /// Curve value on the day-of-year axis, honouring the fit's time axis.
    pub fn predict(&self, day: f64) -> f64 {
        self.params.eval_unchecked(self.time_axis.model_time(self.model(), day))
    }
}

/// Starting point for [`fit`].
pub fn initial_guess(series: &CumulativeSeries, model: ModelKind, axis: TimeAxis) -> Result<GrowthParams> {
    let times = model_times(series, model, axis);
    initial_guess_points(&times, series.values(), model)
}

/// Starting point from raw `(t, N)` points, `t` already on the model's time axis.
///
/// Each candidate saturation `m₀ = k·max(N)` (k = 1.05 plus a geometric sweep
/// refined by golden-section search) yields rate/shape parameters by ordinary
/// least squares on the model's linearisation; the candidate with the smallest
/// residual sum of squares in the original units wins.
pub fn initial_guess_points(times: &[f64], values: &[f64], model: ModelKind) -> Result<GrowthParams> {
    check_points(times, values)?;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let usable = values.iter().filter(|&&v| v > 0.0).count();
    if usable < MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_POINTS,
            got: usable,
        });
    }

    let linear_kind = if model == ModelKind::Generalized {
        ModelKind::Logistic
    } else {
        model
    };
    let score = |excess: f64| -> Option<(f64, GrowthParams)> {
        let p = linearised_guess(times, values, linear_kind, max * (1.0 + excess))?;
        let rss = rss_of(times, values, &p);
        rss.is_finite().then_some((rss, p))
    };

    let mut best: Option<(f64, f64, GrowthParams)> = None;
    let consider = |best: &mut Option<(f64, f64, GrowthParams)>, excess: f64| {
        if let Some((rss, p)) = score(excess) {
            if best.as_ref().is_none_or(|b| rss < b.0) {
                *best = Some((rss, excess, p));
            }
        }
    };
    consider(&mut best, DEFAULT_M_INFLATION - 1.0);
    for k in 0..48 {
        consider(&mut best, 1e-3 * 1.3f64.powi(k));
    }

    let excess = best
        .as_ref()
        .map(|b| b.1)
        .ok_or_else(|| Error::DegenerateSeries("no admissible starting point".into()))?;
    // golden-section refinement on ln(excess) within one sweep ratio either side
    let (mut lo, mut hi) = (excess.ln() - 1.3f64.ln(), excess.ln() + 1.3f64.ln());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |x: f64| score(x.exp()).map_or(f64::INFINITY, |s| s.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (eval(x1), eval(x2));
    for _ in 0..40 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = eval(x2);
        }
    }
    consider(&mut best, ((lo + hi) / 2.0).exp());

    let (_, _, p) = best.expect("a candidate was already accepted");
    Ok(match (model, p) {
        (ModelKind::Generalized, GrowthParams::Logistic { m, w }) => GrowthParams::Generalized { m, w, n: 1.0 },
        (_, p) => p,
    })
}

fn check_points(times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::Domain(format!("{} times but {} values", times.len(), values.len())));
    }
    if times.len() < MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_POINTS,
            got: times.len(),
        });
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite observation".into()));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if max <= 0.0 {
        return Err(Error::DegenerateSeries("series has no positive values".into()));
    }
    if max == min {
        return Err(Error::DegenerateSeries("series is constant".into()));
    }
    Ok(())
}

/// OLS of `y` on `x`, returning `(intercept, slope)`.
fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

fn linearised_guess(times: &[f64], values: &[f64], model: ModelKind, m0: f64) -> Option<GrowthParams> {
    let (x, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0 && v < m0)
        .map(|(&t, &v)| {
            let y = match model {
                ModelKind::Logistic | ModelKind::Generalized => (v / (m0 - v)).ln(),
                ModelKind::GompertzStrict | ModelKind::GompertzFree => (-(v / m0).ln()).ln(),
            };
            (t, y)
        })
        .unzip();
    let (intercept, slope) = ols(&x, &y)?;
    let span = x.last()? - x.first()?;
    let fallback_rate = 4.0 / span.max(1.0);

    let p = match model {
        ModelKind::Logistic | ModelKind::Generalized => {
            let rate = if slope > 0.0 { slope } else { fallback_rate };
            GrowthParams::Logistic { m: m0, w: rate / m0 }
        }
        ModelKind::GompertzStrict => GrowthParams::GompertzStrict {
            m: m0,
            w: if slope < 0.0 { -slope } else { fallback_rate },
        },
        ModelKind::GompertzFree => {
            let (b, c) = if slope < 0.0 {
                (intercept.exp(), -slope)
            } else {
                let mid = 0.5 * (x[0] + x[x.len() - 1]);
                ((fallback_rate * mid).exp(), fallback_rate)
            };
            GrowthParams::GompertzFree { m: m0, b, c }
        }
    };
    p.validate().ok().map(|_| p)
}

fn rss_of(times: &[f64], values: &[f64], params: &GrowthParams) -> f64 {
    times
        .iter()
        .zip(values)
        .map(|(&t, &v)| (v - params.eval_unchecked(t)).powi(2))
        .sum()
}

fn model_times(series: &CumulativeSeries, model: ModelKind, axis: TimeAxis) -> Vec<f64> {
    series.times().iter().map(|&d| axis.model_time(model, d)).collect()
}

/// Coefficient of determination on the day-of-year axis.
pub fn r_squared(series: &CumulativeSeries, params: &GrowthParams) -> Result<f64> {
    r_squared_on_axis(series, params, TimeAxis::DayOfYear)
}

pub fn r_squared_on_axis(series: &CumulativeSeries, params: &GrowthParams, axis: TimeAxis) -> Result<f64> {
    r_squared_points(&model_times(series, params.kind(), axis), series.values(), params)
}

/// `1 − RSS/TSS` with TSS about the mean of `values`.
pub fn r_squared_points(times: &[f64], values: &[f64], params: &GrowthParams) -> Result<f64> {
    params.validate()?;
    if times.len() != values.len() {
        return Err(Error::Domain("r_squared needs equally many times and values".into()));
    }
    let predictions: Vec<f64> = times.iter().map(|&t| params.eval_unchecked(t)).collect();
    coefficient_of_determination(values, &predictions)
}

pub fn coefficient_of_determination(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.is_empty() || observed.len() != predicted.len() {
        return Err(Error::Domain("need equally many, nonzero observations and predictions".into()));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let tss: f64 = observed.iter().map(|v| (v - mean).powi(2)).sum();
    if tss == 0.0 {
        return Err(Error::DegenerateSeries("zero variance".into()));
    }
    let rss: f64 = observed.iter().zip(predicted).map(|(v, p)| (v - p).powi(2)).sum();
    Ok(1.0 - rss / tss)
}

/// Fit one model to a series.
pub fn fit(series: &CumulativeSeries, model: ModelKind, opts: &FitOptions) -> Result<FitResult> {
    let times = model_times(series, model, opts.time_axis);
    let mut result = fit_points(&times, series.values(), model, opts)?;
    result.time_axis = opts.time_axis;
    Ok(result)
}

/// Fit to raw points already on the model's time axis.
pub fn fit_points(times: &[f64], values: &[f64], model: ModelKind, opts: &FitOptions) -> Result<FitResult> {
    fit_points_traced(times, values, model, opts).map(|(r, _)| r)
}

/// As [`fit_points`], also returning the RSS after every accepted step
/// (starting with the RSS of the initial guess).
pub fn fit_points_traced(times: &[f64], values: &[f64], model: ModelKind, opts: &FitOptions) -> Result<(FitResult, Vec<f64>)> {
    opts.validate()?;
    let problem = Problem::new(times, values, model);
    let starts = if model == ModelKind::Generalized {
        generalized_starts(times, values, opts, problem.m_floor)?
    } else {
        vec![initial_guess_points(times, values, model)?]
    };
    let mut best: Option<(DVector<f64>, usize, bool, Vec<f64>)> = None;
    let mut last_err = None;
    for start in starts {
        match problem.levenberg_marquardt(problem.encode(&start), opts) {
            Ok(run) => {
                let better = best.as_ref().is_none_or(|b| run.3.last() < b.3.last());
                if better {
                    best = Some(run);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (phi, iterations, converged, trace) = match (best, last_err) {
        (Some(run), _) => run,
        (None, Some(e)) => return Err(e),
        (None, None) => unreachable!("at least one start"),
    };

    let params = problem.decode(&phi);
    params
        .validate()
        .map_err(|e| Error::NumericalFailure(format!("fit left the parameter domain: {e}")))?;
    let r_squared = r_squared_points(times, values, &params)?;
    let residual_sum_squares = rss_of(times, values, &params);
    let covariance_diag = problem.covariance_diag(&params, residual_sum_squares);
    Ok((
        FitResult {
            params,
            r_squared,
            residual_sum_squares,
            iterations,
            converged,
            covariance_diag,
            time_axis: TimeAxis::DayOfYear,
        },
        trace,
    ))
}

/// Starting points for the generalized model: the logistic (n = 1) and
/// Gompertz (n → 0) members fitted first, with `m` lifted off the floor so
/// the log-reparameterised gradient does not vanish.
fn generalized_starts(times: &[f64], values: &[f64], opts: &FitOptions, m_floor: f64) -> Result<Vec<GrowthParams>> {
    let lift = |m: f64| m.max(GENERALIZED_M_LIFT * m_floor);
    let mut starts = Vec::new();
    if let Ok(r) = fit_points(times, values, ModelKind::Logistic, opts) {
        if let GrowthParams::Logistic { m, w } = r.params {
            starts.push(GrowthParams::Generalized { m: lift(m), w, n: 1.0 });
        }
    }
    if let Ok(r) = fit_points(times, values, ModelKind::GompertzStrict, opts) {
        if let GrowthParams::GompertzStrict { m, w } = r.params {
            let n = 0.1;
            // match the initial per-capita rate w·(mⁿ − 1)/n to the Gompertz w·ln m
            let m = lift(m);
            let w = w * m.ln() * n / (n * m.ln()).exp_m1();
            starts.push(GrowthParams::Generalized { m, w, n });
        }
    }
    if starts.is_empty() {
        starts.push(initial_guess_points(times, values, ModelKind::Generalized)?);
    }
    Ok(starts)
}

struct Problem<'a> {
    times: &'a [f64],
    values: &'a [f64],
    kind: ModelKind,
    m_floor: f64,
}

impl<'a> Problem<'a> {
    fn new(times: &'a [f64], values: &'a [f64], kind: ModelKind) -> Self {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut m_floor = (1.0 + M_FLOOR_MARGIN) * max;
        if kind != ModelKind::GompertzFree {
            m_floor = m_floor.max(1.0 + M_FLOOR_MARGIN);
        }
        Self {
            times,
            values,
            kind,
            m_floor,
        }
    }

    fn encode(&self, p: &GrowthParams) -> DVector<f64> {
        let v = p.values();
        let mut phi = DVector::from_iterator(v.len(), v.iter().map(|x| x.ln()));
        phi[0] = (v[0] - self.m_floor).max(self.m_floor * 1e-9).ln();
        phi
    }

    fn natural(&self, phi: &DVector<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = phi.iter().map(|x| x.exp()).collect();
        v[0] += self.m_floor;
        v
    }

    fn decode(&self, phi: &DVector<f64>) -> GrowthParams {
        let v = self.natural(phi);
        match self.kind {
            ModelKind::Logistic => GrowthParams::Logistic { m: v[0], w: v[1] },
            ModelKind::GompertzStrict => GrowthParams::GompertzStrict { m: v[0], w: v[1] },
            ModelKind::GompertzFree => GrowthParams::GompertzFree { m: v[0], b: v[1], c: v[2] },
            ModelKind::Generalized => GrowthParams::Generalized { m: v[0], w: v[1], n: v[2] },
        }
    }

    /// Residuals `model − observed` and their sum of squares.
    fn residuals(&self, phi: &DVector<f64>) -> (DVector<f64>, f64) {
        let p = self.decode(phi);
        let r = DVector::from_iterator(
            self.times.len(),
            self.times.iter().zip(self.values).map(|(&t, &v)| p.eval_unchecked(t) - v),
        );
        let rss = r.norm_squared();
        (r, rss)
    }

    fn jacobian(&self, phi: &DVector<f64>) -> DMatrix<f64> {
        let p = self.decode(phi);
        let chain: Vec<f64> = phi.iter().map(|x| x.exp()).collect();
        let mut j = DMatrix::zeros(self.times.len(), phi.len());
        for (i, &t) in self.times.iter().enumerate() {
            for (k, d) in p.jacobian_unchecked(t).into_iter().enumerate() {
                j[(i, k)] = d * chain[k];
            }
        }
        j
    }

    fn levenberg_marquardt(&self, mut phi: DVector<f64>, opts: &FitOptions) -> Result<(DVector<f64>, usize, bool, Vec<f64>)> {
        let (mut r, mut rss) = self.residuals(&phi);
        if !rss.is_finite() {
            return Err(Error::NumericalFailure("initial residuals are not finite".into()));
        }
        let mut trace = vec![rss];
        let mut lambda = opts.initial_damping;
        let mut nu = opts.damping_growth;
        let mut iterations = 0;
        let mut converged = false;
        let mut small_drops = 0;

        let mut jac = self.jacobian(&phi);
        let mut normal = jac.tr_mul(&jac);
        let mut grad = jac.tr_mul(&r);

        while iterations < opts.max_iterations {
            if rss == 0.0 {
                converged = true;
                break;
            }
            let scale = damping_scale(&normal);
            // cosine between residual vector and each Jacobian column
            let cosine = (0..grad.len())
                .map(|k| grad[k].abs() / (normal[(k, k)] * rss).sqrt().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            if cosine <= opts.relative_residual_tolerance {
                converged = true;
                break;
            }

            iterations += 1;
            let mut damped = normal.clone();
            for k in 0..scale.len() {
                damped[(k, k)] += lambda * scale[k];
            }
            let step = match damped.cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => {
                    lambda *= nu;
                    nu *= 2.0;
                    if lambda > LAMBDA_MAX {
                        return Err(Error::NumericalFailure("normal equations singular at the damping ceiling".into()));
                    }
                    continue;
                }
            };

            if step.norm() <= opts.parameter_step_tolerance * (phi.norm() + opts.parameter_step_tolerance) {
                converged = true;
                break;
            }

            let trial = &phi + &step;
            let (trial_r, trial_rss) = self.residuals(&trial);
            let scaled_step = DVector::from_iterator(step.len(), step.iter().zip(&scale).map(|(s, d)| lambda * d * s));
            let predicted = step.dot(&(scaled_step - &grad));
            if trial_rss.is_finite() && trial_rss < rss {
                let relative_drop = (rss - trial_rss) / rss;
                let rho = (rss - trial_rss) / predicted.max(f64::MIN_POSITIVE);
                phi = trial;
                r = trial_r;
                rss = trial_rss;
                trace.push(rss);
                lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                nu = opts.damping_growth;
                // one small drop can be a damped step along a shallow valley;
                // two in a row means the minimum is reached
                if relative_drop <= opts.relative_residual_tolerance {
                    small_drops += 1;
                    if small_drops >= 2 {
                        converged = true;
                        break;
                    }
                } else {
                    small_drops = 0;
                }
                jac = self.jacobian(&phi);
                normal = jac.tr_mul(&jac);
                grad = jac.tr_mul(&r);
            } else {
                lambda *= nu;
                nu *= 2.0;
                if lambda > LAMBDA_MAX {
                    // no descent left at working precision
                    converged = cosine <= opts.relative_residual_tolerance.sqrt();
                    break;
                }
            }
        }
        Ok((phi, iterations, converged, trace))
    }

    fn covariance_diag(&self, params: &GrowthParams, rss: f64) -> Option<Vec<f64>> {
        let n = self.times.len();
        let p = self.kind.parameter_count();
        if n <= p {
            return None;
        }
        let mut j = DMatrix::zeros(n, p);
        for (i, &t) in self.times.iter().enumerate() {
            for (k, d) in params.jacobian_unchecked(t).into_iter().enumerate() {
                j[(i, k)] = d;
            }
        }
        let inv = j.tr_mul(&j).cholesky()?.inverse();
        let s2 = rss / (n - p) as f64;
        let diag: Vec<f64> = (0..p).map(|k| s2 * inv[(k, k)]).collect();
        diag.iter().all(|v| v.is_finite()).then_some(diag)
    }
}

fn damping_scale(normal: &DMatrix<f64>) -> Vec<f64> {
    let n = normal.nrows();
    let max = (0..n).map(|k| normal[(k, k)]).fold(0.0, f64::max);
    let floor = (max * 1e-12).max(f64::MIN_POSITIVE);
    (0..n).map(|k| normal[(k, k)].max(floor)).collect()
}

/// Candidates from [`select_model`].
#[derive(Debug)]
pub struct ModelSelection {
    pub candidates: Vec<FitResult>,
    pub failures: Vec<(ModelKind, Error)>,
    pub chosen: ModelKind,
}

impl ModelSelection {
    pub fn chosen_fit(&self) -> &FitResult {
        self.candidates
            .iter()
            .find(|c| c.model() == self.chosen)
            .expect("chosen model is among the candidates")
    }
}

/// Index of the preferred fit: highest R², with near-ties going to the model
/// with fewer free parameters, then to the earlier candidate.
pub fn choose(candidates: &[FitResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        let Some(b) = best else {
            best = Some(i);
            continue;
        };
        let incumbent = &candidates[b];
        let diff = c.r_squared - incumbent.r_squared;
        let better = if diff.abs() < TIE_TOLERANCE {
            c.model().parameter_count() < incumbent.model().parameter_count()
        } else {
            diff > 0.0
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Fit the logistic and free Gompertz models and keep the better one.
pub fn select_model(series: &CumulativeSeries, opts: &FitOptions) -> Result<ModelSelection> {
    select_among(series, &[ModelKind::Logistic, ModelKind::GompertzFree], opts)
}

pub fn select_among(series: &CumulativeSeries, models: &[ModelKind], opts: &FitOptions) -> Result<ModelSelection> {
    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for &model in models {
        match fit(series, model, opts) {
            Ok(r) => candidates.push(r),
            Err(e) => failures.push((model, e)),
        }
    }
    match choose(&candidates) {
        Some(i) => {
            let chosen = candidates[i].model();
            Ok(ModelSelection {
                candidates,
                failures,
                chosen,
            })
        }
        None => Err(Error::AllFitsFailed(failures)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{Measure, Scope};

    fn series(times: Vec<f64>, values: Vec<f64>) -> CumulativeSeries {
        CumulativeSeries::new(None, Measure::Count, Scope::AllPleas, times, values).unwrap()
    }

    fn sampled(p: &GrowthParams, days: impl Iterator<Item = u32>) -> CumulativeSeries {
        let times: Vec<f64> = days.map(f64::from).collect();
        let values = times.iter().map(|&t| p.eval(t).unwrap()).collect();
        series(times, values)
    }

    #[test]
    fn r_squared_arithmetic() {
        // mean 3.75, TSS = 7.5625 + 3.0625 + 0.0625 + 18.0625 = 28.75, RSS = 4
        let r2 = coefficient_of_determination(&[1.0, 2.0, 4.0, 8.0], &[1.0, 2.0, 4.0, 6.0]).unwrap();
        assert!((r2 - (1.0 - 4.0 / 28.75)).abs() < 1e-15);
        assert!((r2 - 0.860_869_565_217_391_3).abs() < 1e-15);
    }

    #[test]
    fn r_squared_perfect_and_negative() {
        let p = GrowthParams::Logistic { m: 100.0, w: 0.002 };
        let s = sampled(&p, (1..=365).step_by(7));
        assert_eq!(r_squared(&s, &p).unwrap(), 1.0);
        let far = GrowthParams::GompertzFree { m: 1e6, b: 1e-9, c: 1.0 };
        assert!(r_squared(&s, &far).unwrap() < 0.0);
        let flat = series(vec![1.0, 2.0, 3.0, 4.0], vec![5.0; 4]);
        assert!(matches!(r_squared(&flat, &p), Err(Error::DegenerateSeries(_))));
    }

    #[test]
    fn initial_guess_recovers_free_gompertz() {
        let truth = GrowthParams::GompertzFree { m: 50.0, b: 3.0, c: 0.1 };
        let times: Vec<f64> = (0..=30).map(f64::from).collect();
        let values: Vec<f64> = times.iter().map(|&t| truth.eval(t).unwrap()).collect();
        let guess = initial_guess_points(&times, &values, ModelKind::GompertzFree).unwrap();
        for (g, t) in guess.values().iter().zip(truth.values()) {
            assert!((g - t).abs() / t < 0.10, "{guess} vs {truth}");
        }
        // the same through a series on the shifted axis: days 1..31 → t = 0..30
        let s = series((1..=31).map(f64::from).collect(), values);
        let guess = initial_guess(&s, ModelKind::GompertzFree, TimeAxis::ShiftedZero).unwrap();
        assert!((guess.values()[2] - 0.1).abs() < 0.01);
    }

    #[test]
    fn initial_guess_errors() {
        let flat = series(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![3.0; 5]);
        assert!(matches!(
            initial_guess(&flat, ModelKind::Logistic, TimeAxis::DayOfYear),
            Err(Error::DegenerateSeries(_))
        ));
        let short = series(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            initial_guess(&short, ModelKind::GompertzFree, TimeAxis::DayOfYear),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
        let zeros = series(vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            initial_guess(&zeros, ModelKind::Logistic, TimeAxis::DayOfYear),
            Err(Error::DegenerateSeries(_))
        ));
    }

    #[test]
    fn initial_guess_is_valid_for_every_model() {
        let p = GrowthParams::GompertzStrict { m: 400.0, w: 0.03 };
        let s = sampled(&p, (1..=365).step_by(7));
        for kind in ModelKind::ALL {
            let g = initial_guess(&s, kind, TimeAxis::DayOfYear).unwrap();
            assert_eq!(g.kind(), kind);
            g.validate().unwrap();
        }
    }

    #[test]
    fn recovers_strict_gompertz() {
        let truth = GrowthParams::GompertzStrict { m: 400.0, w: 0.03 };
        let s = sampled(&truth, (1..=365).step_by(7));
        let r = fit(&s, ModelKind::GompertzStrict, &FitOptions::default()).unwrap();
        assert!(r.converged);
        for (f, t) in r.params.values().iter().zip(truth.values()) {
            assert!((f - t).abs() / t < 1e-3, "{} vs {truth}", r.params);
        }
        assert!(r.r_squared >= 1.0 - 1e-10);
        assert_eq!(r.r_squared, r_squared(&s, &r.params).unwrap());
    }

    #[test]
    fn rss_never_increases() {
        let truth = GrowthParams::GompertzFree { m: 500.0, b: 4.0, c: 0.05 };
        let times: Vec<f64> = (1..=365).step_by(5).map(f64::from).collect();
        let values: Vec<f64> = times
            .iter()
            .enumerate()
            .map(|(i, &t)| truth.eval(t).unwrap() + if i % 2 == 0 { 6.0 } else { -6.0 })
            .collect();
        let (_, trace) = fit_points_traced(&times, &values, ModelKind::GompertzFree, &FitOptions::default()).unwrap();
        assert!(trace.len() > 1);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let truth = GrowthParams::Logistic {
            m: 300.0,
            w: 0.04 / 300.0 * 3.0,
        };
        let s = sampled(&truth, (1..=365).step_by(3));
        let opts = FitOptions {
            max_iterations: 1,
            ..FitOptions::default()
        };
        let r = fit(&s, ModelKind::Logistic, &opts).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(!r.converged);
    }

    #[test]
    fn invalid_options_rejected() {
        let s = sampled(&GrowthParams::Logistic { m: 300.0, w: 1e-4 }, (1..=365).step_by(7));
        let opts = FitOptions {
            max_iterations: 0,
            ..FitOptions::default()
        };
        assert!(matches!(fit(&s, ModelKind::Logistic, &opts), Err(Error::Domain(_))));
    }

    fn fake(model: ModelKind, r_squared: f64) -> FitResult {
        let params = match model {
            ModelKind::Logistic => GrowthParams::Logistic { m: 2.0, w: 1.0 },
            ModelKind::GompertzStrict => GrowthParams::GompertzStrict { m: 2.0, w: 1.0 },
            ModelKind::GompertzFree => GrowthParams::GompertzFree { m: 2.0, b: 1.0, c: 1.0 },
            ModelKind::Generalized => GrowthParams::Generalized { m: 2.0, w: 1.0, n: 1.0 },
        };
        FitResult {
            params,
            r_squared,
            residual_sum_squares: 0.0,
            iterations: 0,
            converged: true,
            covariance_diag: None,
            time_axis: TimeAxis::DayOfYear,
        }
    }

    #[test]
    fn tie_breaks_toward_fewer_parameters() {
        let c = [fake(ModelKind::GompertzFree, 0.99), fake(ModelKind::Logistic, 0.99 - 1e-10)];
        assert_eq!(choose(&c), Some(1));
        let c = [fake(ModelKind::Logistic, 0.99), fake(ModelKind::GompertzFree, 0.99)];
        assert_eq!(choose(&c), Some(0));
        let c = [fake(ModelKind::Logistic, 0.98), fake(ModelKind::GompertzFree, 0.99)];
        assert_eq!(choose(&c), Some(1));
        let c = [fake(ModelKind::GompertzFree, 0.97), fake(ModelKind::GompertzFree, 0.97)];
        assert_eq!(choose(&c), Some(0));
        assert_eq!(choose(&[]), None);
    }

    #[test]
    fn selection_reports_failures() {
        let short = series(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]);
        match select_model(&short, &FitOptions::default()) {
            Err(Error::AllFitsFailed(f)) => assert_eq!(f.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
