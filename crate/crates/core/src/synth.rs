//! Seeded synthetic scenarios.
//!
//! Randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64`),
//! so a seed reproduces the same output on every platform. Per event the draws
//! are, in order: plea day, entity, value, status.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, LogNormal, Normal, Zipf};
use rust_decimal::prelude::FromPrimitive;
use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth_models::{GrowthParams, TimeGrid};
use crate::series::{days_in_year, CumulativeSeries, Measure, OperationRecord, Scope, Status};

fn default_weight_exponent() -> f64 {
    1.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub year: i32,
    /// Shape of the yearly cumulative curve; only its normalised increments are used.
    pub model: GrowthParams,
    pub total_pleas: usize,
    pub entity_count: usize,
    /// Zipf exponent of the entity activity weights.
    #[serde(default = "default_weight_exponent")]
    pub entity_weight_exponent: f64,
    /// Mean of ln(value).
    pub value_log_mean: f64,
    /// Standard deviation of ln(value).
    pub value_log_sd: f64,
    #[serde(default)]
    pub rejection_rate: f64,
    /// Noise for curve sampling, as a fraction of `m`.
    #[serde(default)]
    pub observation_noise_sd: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let fail = |msg: String| Err(Error::Domain(msg));
        if NaiveDate::from_yo_opt(self.year, 1).is_none() {
            return fail(format!("year {} out of range", self.year));
        }
        if self.entity_count < 1 {
            return fail("entity_count must be at least 1".into());
        }
        if self.total_pleas < self.entity_count {
            return fail(format!("total_pleas {} below entity_count {}", self.total_pleas, self.entity_count));
        }
        if !(self.entity_weight_exponent.is_finite() && self.entity_weight_exponent >= 0.0) {
            return fail(format!(
                "entity_weight_exponent {} must be finite and nonnegative",
                self.entity_weight_exponent
            ));
        }
        if !(self.value_log_sd.is_finite() && self.value_log_sd > 0.0) {
            return fail(format!("value_log_sd {} must be positive", self.value_log_sd));
        }
        // keep values well inside Decimal range (~7.9e28)
        if !(self.value_log_mean.is_finite() && self.value_log_mean + 12.0 * self.value_log_sd < 60.0) {
            return fail("value distribution too wide for decimal amounts".into());
        }
        if !(0.0..1.0).contains(&self.rejection_rate) {
            return fail(format!("rejection_rate {} outside [0, 1)", self.rejection_rate));
        }
        if !(self.observation_noise_sd.is_finite() && self.observation_noise_sd >= 0.0) {
            return fail(format!("observation_noise_sd {} must be nonnegative", self.observation_noise_sd));
        }
        let (lo, hi) = (self.model.eval(1.0)?, self.model.eval(f64::from(days_in_year(self.year)))?);
        if hi - lo <= 0.0 {
            return fail("model curve is flat over the year".into());
        }
        Ok(())
    }
}

/// Normalised increment distribution `F(d) = (N(d) − N(1)) / (N(L) − N(1))`
/// over a year of `L` days.
#[derive(Debug, Clone)]
pub struct PleaDayDistribution {
    model: GrowthParams,
    last_day: f64,
    start: f64,
    span: f64,
}

impl PleaDayDistribution {
    pub fn new(model: GrowthParams, year: i32) -> Result<Self> {
        let last_day = f64::from(days_in_year(year));
        let start = model.eval(1.0)?;
        let span = model.eval(last_day)? - start;
        if span.is_nan() || span <= 0.0 {
            return Err(Error::Domain("model curve is flat over the year".into()));
        }
        Ok(Self {
            model,
            last_day,
            start,
            span,
        })
    }

    pub fn cdf(&self, day: f64) -> f64 {
        let d = day.clamp(1.0, self.last_day);
        ((self.model.eval_unchecked(d) - self.start) / self.span).clamp(0.0, 1.0)
    }

    /// Continuous day in `[1, L]` with `F(day) = u`, by bisection.
    pub fn quantile(&self, u: f64) -> f64 {
        let (mut lo, mut hi) = (1.0, self.last_day);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Calendar day index: the increment over `(d−1, d]` belongs to day `d`.
    pub fn sample_day<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        (self.quantile(u).ceil() as u32).clamp(1, self.last_day as u32)
    }
}

fn entity_id(index: usize, count: usize) -> String {
    let width = count.to_string().len().max(2);
    format!("E{:0width$}", index)
}

/// Operation records whose yearly cumulative count follows the configured curve.
/// Records are returned sorted by date; same-day records keep generation order.
pub fn generate_events(cfg: &ScenarioConfig) -> Result<Vec<OperationRecord>> {
    cfg.validate()?;
    let days = PleaDayDistribution::new(cfg.model, cfg.year)?;
    let entities =
        Zipf::new(cfg.entity_count as f64, cfg.entity_weight_exponent).map_err(|e| Error::Domain(format!("entity weights: {e}")))?;
    let values = LogNormal::new(cfg.value_log_mean, cfg.value_log_sd).map_err(|e| Error::Domain(format!("value distribution: {e}")))?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);

    let mut records = Vec::with_capacity(cfg.total_pleas);
    for _ in 0..cfg.total_pleas {
        let day = days.sample_day(&mut rng);
        let entity = entities.sample(&mut rng) as usize;
        let raw: f64 = values.sample(&mut rng);
        let rejected = rng.random_bool(cfg.rejection_rate);

        let date = NaiveDate::from_yo_opt(cfg.year, day).ok_or_else(|| Error::Domain(format!("day {day} of {}", cfg.year)))?;
        let value = Decimal::from_f64(raw)
            .ok_or_else(|| Error::Domain(format!("value {raw} not representable")))?
            .round_dp_with_strategy(2, RoundingStrategy::MidpointAwayFromZero);
        records.push(OperationRecord {
            date,
            entity_id: entity_id(entity, cfg.entity_count),
            parent_state: None,
            value,
            status: if rejected { Status::Rejected } else { Status::Assented },
        });
    }
    records.sort_by_key(|r| r.date);
    Ok(records)
}

/// Closed-form samples on `grid` plus independent Gaussian noise of standard
/// deviation `noise_sd`, clipped at zero and made nondecreasing by a running maximum.
pub fn sample_curve(params: &GrowthParams, grid: &TimeGrid, noise_sd: f64, seed: u64) -> Result<CumulativeSeries> {
    params.validate()?;
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(Error::Domain(format!("noise_sd {noise_sd} must be nonnegative")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::Domain(e.to_string()))?;
    let mut running = 0.0f64;
    let values = grid
        .points()
        .iter()
        .map(|&t| {
            let mut v = params.eval_unchecked(t);
            if noise_sd > 0.0 {
                v += noise.sample(&mut rng);
            }
            running = running.max(v.max(0.0));
            running
        })
        .collect();
    CumulativeSeries::new(None, Measure::Count, Scope::AllPleas, grid.points().to_vec(), values)
}

/// [`sample_curve`] for a scenario, with noise `observation_noise_sd · m`.
pub fn sample_scenario_curve(cfg: &ScenarioConfig, grid: &TimeGrid) -> Result<CumulativeSeries> {
    cfg.validate()?;
    let mut s = sample_curve(&cfg.model, grid, cfg.observation_noise_sd * cfg.model.saturation(), cfg.seed)?;
    s.year = Some(cfg.year);
    Ok(s)
}
