//! Entity concentration (Lorenz curve, top shares) and value CCDF.
//!
//! Records carrying a `parent_state` are credited to that state; the rest
//! stand alone. Totals are summed in `Decimal` so shares of integer counts
//! are exact before the final conversion to `f64`.

use std::collections::BTreeMap;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{Measure, OperationRecord};

/// Per-entity totals, sorted descending by total, ties by entity id.
pub fn entity_totals(records: &[OperationRecord], basis: Measure) -> Result<Vec<(String, Decimal)>> {
    if records.is_empty() {
        return Err(Error::EmptySelection("no records to group by entity".into()));
    }
    let mut totals: BTreeMap<&str, Decimal> = BTreeMap::new();
    for r in records {
        let amount = match basis {
            Measure::Count => Decimal::ONE,
            Measure::Volume => {
                if r.value.is_sign_negative() && !r.value.is_zero() {
                    return Err(Error::Domain(format!("negative value {} for entity {}", r.value, r.entity_id)));
                }
                r.value
            }
        };
        *totals.entry(r.rollup_entity()).or_default() += amount;
    }
    let mut out: Vec<(String, Decimal)> = totals.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

fn grand_total(totals: &[(String, Decimal)]) -> Result<Decimal> {
    let sum: Decimal = totals.iter().map(|(_, v)| *v).sum();
    if sum.is_zero() {
        return Err(Error::DegenerateSeries("entity totals sum to zero".into()));
    }
    Ok(sum)
}

fn ratio(num: Decimal, den: Decimal) -> f64 {
    (num / den).to_f64().unwrap_or(f64::NAN)
}

/// Number of entities in the top fraction `q`: `ceil(q·E)`, at least one.
pub fn top_count(q: f64, entities: usize) -> Result<usize> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!("top fraction {q} outside (0, 1]")));
    }
    // absorb representation error such as 0.2·5 = 1.0000000000000002
    let raw = q * entities as f64;
    let k = if (raw - raw.round()).abs() < 1e-9 {
        raw.round()
    } else {
        raw.ceil()
    };
    Ok((k as usize).clamp(1, entities))
}

fn share_of_sorted(totals: &[(String, Decimal)], q: f64) -> Result<f64> {
    let k = top_count(q, totals.len())?;
    let grand = grand_total(totals)?;
    if k == totals.len() {
        return Ok(1.0);
    }
    let top: Decimal = totals[..k].iter().map(|(_, v)| *v).sum();
    Ok(ratio(top, grand))
}

/// Share of the grand total held by the largest `ceil(q·E)` entities.
pub fn top_share(records: &[OperationRecord], basis: Measure, q: f64) -> Result<f64> {
    top_count(q, 1)?;
    share_of_sorted(&entity_totals(records, basis)?, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSummary {
    pub basis: Measure,
    /// `(k/E, L(k/E))` for k = 0..=E, smallest entities first.
    pub lorenz_points: Vec<(f64, f64)>,
    /// `(k/E, share of the k largest entities)` for k = 1..=E.
    pub top_shares: Vec<(f64, f64)>,
    /// Entity totals, descending.
    pub entities: Vec<(String, Decimal)>,
}

impl ConcentrationSummary {
    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn share_of_top(&self, q: f64) -> Result<f64> {
        share_of_sorted(&self.entities, q)
    }

    /// Gini coefficient from the trapezoidal area under the Lorenz curve.
    pub fn gini(&self) -> f64 {
        let area: f64 = self
            .lorenz_points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum();
        1.0 - 2.0 * area
    }
}

pub fn lorenz(records: &[OperationRecord], basis: Measure) -> Result<ConcentrationSummary> {
    let entities = entity_totals(records, basis)?;
    let grand = grand_total(&entities)?;
    let e = entities.len();

    let mut lorenz_points = Vec::with_capacity(e + 1);
    lorenz_points.push((0.0, 0.0));
    let mut partial = Decimal::ZERO;
    for (k, (_, v)) in entities.iter().rev().enumerate() {
        partial += *v;
        let p = (k + 1) as f64 / e as f64;
        lorenz_points.push((p, if k + 1 == e { 1.0 } else { ratio(partial, grand) }));
    }

    let mut top_shares = Vec::with_capacity(e);
    let mut partial = Decimal::ZERO;
    for (k, (_, v)) in entities.iter().enumerate() {
        partial += *v;
        let q = (k + 1) as f64 / e as f64;
        top_shares.push((q, if k + 1 == e { 1.0 } else { ratio(partial, grand) }));
    }

    Ok(ConcentrationSummary {
        basis,
        lorenz_points,
        top_shares,
        entities,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcdfPoints {
    /// Distinct positive values, ascending.
    pub thresholds: Vec<f64>,
    /// `P(V ≥ x)` at each threshold.
    pub survival: Vec<f64>,
}

impl CcdfPoints {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.thresholds.iter().copied().zip(self.survival.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcdfReport {
    pub points: CcdfPoints,
    /// Values equal to zero, left out of the distribution.
    pub excluded_zero: usize,
}

/// Empirical survival function with weak inequality, so it starts at 1.
pub fn ccdf(values: &[Decimal]) -> Result<CcdfReport> {
    if let Some(v) = values.iter().find(|v| v.is_sign_negative() && !v.is_zero()) {
        return Err(Error::Domain(format!("negative value {v}")));
    }
    let mut positive: Vec<Decimal> = values.iter().copied().filter(|v| !v.is_zero()).collect();
    let excluded_zero = values.len() - positive.len();
    if positive.is_empty() {
        return Err(Error::EmptySelection("no positive values".into()));
    }
    positive.sort();
    let n = positive.len();
    let mut thresholds = Vec::new();
    let mut survival = Vec::new();
    let mut i = 0;
    while i < n {
        let x = positive[i];
        thresholds.push(x.to_f64().unwrap_or(f64::NAN));
        survival.push((n - i) as f64 / n as f64);
        while i < n && positive[i] == x {
            i += 1;
        }
    }
    Ok(CcdfReport {
        points: CcdfPoints { thresholds, survival },
        excluded_zero,
    })
}

/// Values of the records, in record order.
pub fn record_values(records: &[OperationRecord]) -> Vec<Decimal> {
    records.iter().map(|r| r.value).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Status;
    use chrono::NaiveDate;

    fn rec(entity: &str, parent: Option<&str>, value: i64) -> OperationRecord {
        OperationRecord {
            date: NaiveDate::from_ymd_opt(2014, 3, 1).unwrap(),
            entity_id: entity.into(),
            parent_state: parent.map(Into::into),
            value: Decimal::from(value),
            status: Status::Assented,
        }
    }

    fn counts(totals: &[usize]) -> Vec<OperationRecord> {
        totals
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| (0..n).map(move |_| rec(&format!("S{i}"), None, 1)))
            .collect()
    }

    fn volumes(totals: &[i64]) -> Vec<OperationRecord> {
        totals.iter().enumerate().map(|(i, &v)| rec(&format!("S{i}"), None, v)).collect()
    }

    #[test]
    fn toy_count_share() {
        assert_eq!(top_share(&counts(&[80, 5, 5, 5, 5]), Measure::Count, 0.2).unwrap(), 0.8);
    }

    #[test]
    fn toy_volume_share() {
        assert_eq!(top_share(&volumes(&[40, 15, 15, 15, 15]), Measure::Volume, 0.2).unwrap(), 0.4);
    }

    #[test]
    fn single_entity_holds_all() {
        for q in [0.01, 0.2, 0.5, 1.0] {
            assert_eq!(top_share(&counts(&[7]), Measure::Count, q).unwrap(), 1.0);
        }
    }

    #[test]
    fn top_share_errors() {
        assert!(matches!(top_share(&[], Measure::Count, 0.2), Err(Error::EmptySelection(_))));
        for q in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(top_share(&counts(&[3, 1]), Measure::Count, q), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn municipalities_roll_up() {
        let recs = vec![
            rec("M1", Some("SP"), 1),
            rec("M2", Some("SP"), 1),
            rec("SP", None, 1),
            rec("RJ", None, 1),
        ];
        let totals = entity_totals(&recs, Measure::Count).unwrap();
        assert_eq!(totals, vec![("SP".to_string(), Decimal::from(3)), ("RJ".to_string(), Decimal::ONE)]);
    }

    #[test]
    fn ceiling_of_fraction() {
        assert_eq!(top_count(0.2, 27).unwrap(), 6);
        assert_eq!(top_count(0.2, 5).unwrap(), 1);
        assert_eq!(top_count(0.3, 10).unwrap(), 3);
        assert_eq!(top_count(0.01, 5).unwrap(), 1);
    }

    #[test]
    fn lorenz_equality() {
        let s = lorenz(&counts(&[4, 4, 4, 4]), Measure::Count).unwrap();
        for (p, l) in &s.lorenz_points {
            assert!((p - l).abs() < 1e-15);
        }
        assert!(s.gini().abs() < 1e-12);
    }

    #[test]
    fn lorenz_toy() {
        let s = lorenz(&counts(&[80, 5, 5, 5, 5]), Measure::Count).unwrap();
        assert_eq!(s.lorenz_points.len(), 6);
        assert_eq!(s.lorenz_points[0], (0.0, 0.0));
        assert_eq!(s.lorenz_points[4], (0.8, 0.2));
        assert_eq!(s.lorenz_points[5], (1.0, 1.0));
        assert_eq!(s.share_of_top(0.2).unwrap(), 0.8);
        assert_eq!(s.top_shares[0], (0.2, 0.8));
    }

    #[test]
    fn lorenz_one_holder() {
        let recs = vec![rec("A", None, 0), rec("B", None, 0), rec("C", None, 9)];
        let s = lorenz(&recs, Measure::Volume).unwrap();
        for (p, l) in &s.lorenz_points[..3] {
            assert!(*p < 1.0);
            assert_eq!(*l, 0.0);
        }
        assert_eq!(s.lorenz_points[3], (1.0, 1.0));
    }

    #[test]
    fn ccdf_examples() {
        let d = |v: &[i64]| v.iter().map(|&x| Decimal::from(x)).collect::<Vec<_>>();
        let c = ccdf(&d(&[1, 2, 3, 4])).unwrap().points;
        assert_eq!(c.thresholds, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(c.survival[2], 0.5);

        let c = ccdf(&d(&[7, 7, 7])).unwrap().points;
        assert_eq!(c.iter().collect::<Vec<_>>(), vec![(7.0, 1.0)]);

        let c = ccdf(&d(&[10, 10, 100])).unwrap().points;
        assert_eq!(c.thresholds, vec![10.0, 100.0]);
        assert_eq!(c.survival, vec![1.0, 1.0 / 3.0]);
    }

    #[test]
    fn ccdf_zero_handling() {
        let r = ccdf(&[Decimal::ZERO, Decimal::ONE, Decimal::ZERO]).unwrap();
        assert_eq!(r.excluded_zero, 2);
        assert_eq!(r.points.survival, vec![1.0]);
        assert!(matches!(ccdf(&[Decimal::ZERO]), Err(Error::EmptySelection(_))));
        assert!(matches!(ccdf(&[Decimal::NEGATIVE_ONE]), Err(Error::Domain(_))));
    }
}
