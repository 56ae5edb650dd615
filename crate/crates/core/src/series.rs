//! Operation records, yearly cumulative series and their empirical derivatives.
//!
//! Input CSV, header required:
//!
//! ```text
//! date,entity_id,parent_state,value,status
//! 2014-03-05,SP,,1500000.00,assented
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["date", "entity_id", "parent_state", "value", "status"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Assented,
    Rejected,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Assented => "assented",
            Status::Rejected => "rejected",
        }
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "assented" => Ok(Status::Assented),
            "rejected" => Ok(Status::Rejected),
            other => Err(format!("unknown status {other:?} (expected assented or rejected)")),
        }
    }
}

/// One credit plea.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OperationRecord {
    pub date: NaiveDate,
    pub entity_id: String,
    /// State a municipal record rolls up to; `None` for state-level records.
    pub parent_state: Option<String>,
    pub value: Decimal,
    pub status: Status,
}

impl OperationRecord {
    /// Entity the record is attributed to after municipal rollup.
    pub fn rollup_entity(&self) -> &str {
        self.parent_state.as_deref().unwrap_or(&self.entity_id)
    }

    pub fn year(&self) -> i32 {
        self.date.year()
    }
}

/// What a series or concentration statistic measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Count,
    Volume,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Count => "count",
            Measure::Volume => "volume",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    AssentedOnly,
    AllPleas,
}

impl Scope {
    pub fn admits(self, status: Status) -> bool {
        match self {
            Scope::AssentedOnly => status == Status::Assented,
            Scope::AllPleas => true,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scope::AssentedOnly => "assented_only",
            Scope::AllPleas => "all_pleas",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowErrorPolicy {
    #[default]
    FailFast,
    SkipAndReport,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub records: Vec<OperationRecord>,
    /// Data rows seen, valid or not.
    pub rows_read: usize,
    pub skipped: Vec<RowError>,
}

/// Read operation records from CSV, in file order.
pub fn parse_records<R: Read>(reader: R, policy: RowErrorPolicy) -> Result<ParseReport> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let header = csv.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header {:?}, got {:?}",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut report = ParseReport::default();
    for row in csv.records() {
        let row = row?;
        report.rows_read += 1;
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row) {
            Ok(record) => report.records.push(record),
            Err(message) => match policy {
                RowErrorPolicy::FailFast => return Err(Error::Parse { line, message }),
                RowErrorPolicy::SkipAndReport => report.skipped.push(RowError { line, message }),
            },
        }
    }
    Ok(report)
}

fn parse_row(row: &csv::StringRecord) -> std::result::Result<OperationRecord, String> {
    if row.len() != CSV_HEADER.len() {
        return Err(format!("expected {} fields, got {}", CSV_HEADER.len(), row.len()));
    }
    let date = NaiveDate::parse_from_str(&row[0], "%Y-%m-%d").map_err(|e| format!("malformed date {:?}: {e}", &row[0]))?;
    let entity_id = row[1].to_string();
    if entity_id.is_empty() {
        return Err("empty entity_id".into());
    }
    let parent_state = Some(row[2].to_string()).filter(|s| !s.is_empty());
    let value = Decimal::from_str(&row[3]).map_err(|e| format!("malformed value {:?}: {e}", &row[3]))?;
    if value.is_sign_negative() && !value.is_zero() {
        return Err(format!("negative value {value}"));
    }
    let status = row[4].parse::<Status>()?;
    Ok(OperationRecord {
        date,
        entity_id,
        parent_state,
        value,
        status,
    })
}

/// Write records in the same schema [`parse_records`] reads.
pub fn write_records<W: Write>(writer: W, records: &[OperationRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(CSV_HEADER)?;
    for r in records {
        let date = r.date.format("%Y-%m-%d").to_string();
        let value = r.value.to_string();
        csv.write_record([
            date.as_str(),
            r.entity_id.as_str(),
            r.parent_state.as_deref().unwrap_or(""),
            value.as_str(),
            r.status.as_str(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Yearly cumulative trajectory on a day-of-year axis (day 1 = 1 January).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeSeries {
    /// Calendar year, when the series comes from dated records.
    pub year: Option<i32>,
    pub kind: Measure,
    pub scope: Scope,
    times: Vec<f64>,
    values: Vec<f64>,
    /// Exact decimal totals backing `values`, when aggregated from records.
    #[serde(skip)]
    exact: Option<Vec<Decimal>>,
}

impl CumulativeSeries {
    pub fn new(year: Option<i32>, kind: Measure, scope: Scope, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Domain(format!("{} times but {} values", times.len(), values.len())));
        }
        if times.iter().any(|t| !(1.0..=366.0).contains(t)) {
            return Err(Error::Domain("times must lie within day 1..=366".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("times must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("values must be finite".into()));
        }
        if values.first().is_some_and(|&v| v < 0.0) {
            return Err(Error::Domain("cumulative values must start nonnegative".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Domain("cumulative values must be nondecreasing".into()));
        }
        Ok(Self {
            year,
            kind,
            scope,
            times,
            values,
            exact: None,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn exact_totals(&self) -> Option<&[Decimal]> {
        self.exact.as_deref()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Same series with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.year,
            self.kind,
            self.scope,
            self.times.clone(),
            self.values.iter().map(|v| v * factor).collect(),
        )
    }

    /// Forward-filled daily view over `1..=last_day`; days before the first
    /// observation are `None`.
    pub fn daily(&self, last_day: u32) -> Vec<(u32, Option<f64>)> {
        let mut out = Vec::with_capacity(last_day as usize);
        let mut idx = 0;
        let mut current = None;
        for day in 1..=last_day {
            while idx < self.times.len() && self.times[idx] <= f64::from(day) {
                current = Some(self.values[idx]);
                idx += 1;
            }
            out.push((day, current));
        }
        out
    }
}

pub fn days_in_year(year: i32) -> u32 {
    if NaiveDate::from_ymd_opt(year, 2, 29).is_some() {
        366
    } else {
        365
    }
}

/// Years present in `records`, ascending.
pub fn years(records: &[OperationRecord]) -> Vec<i32> {
    let mut ys: Vec<i32> = records.iter().map(|r| r.date.year()).collect();
    ys.sort_unstable();
    ys.dedup();
    ys
}

/// Cumulative count or volume per event day for one year and scope.
pub fn aggregate(records: &[OperationRecord], year: i32, kind: Measure, scope: Scope) -> Result<CumulativeSeries> {
    let mut per_day: BTreeMap<u32, Decimal> = BTreeMap::new();
    for r in records.iter().filter(|r| r.date.year() == year && scope.admits(r.status)) {
        let increment = match kind {
            Measure::Count => Decimal::ONE,
            Measure::Volume => r.value,
        };
        *per_day.entry(r.date.ordinal()).or_default() += increment;
    }
    if per_day.is_empty() {
        return Err(Error::EmptySelection(format!("no {scope} records in {year}")));
    }

    let mut running = Decimal::ZERO;
    let mut times = Vec::with_capacity(per_day.len());
    let mut exact = Vec::with_capacity(per_day.len());
    for (day, inc) in per_day {
        running += inc;
        times.push(f64::from(day));
        exact.push(running);
    }
    let values = exact
        .iter()
        .map(|d| {
            d.to_f64()
                .ok_or_else(|| Error::Domain(format!("total {d} not representable as f64")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut series = CumulativeSeries::new(Some(year), kind, scope, times, values)?;
    series.exact = Some(exact);
    Ok(series)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSeries {
    pub times: Vec<f64>,
    /// Units of the series kind per day.
    pub rates: Vec<f64>,
}

/// Central differences in the interior, one-sided first-order differences at both ends.
pub fn central_difference(series: &CumulativeSeries) -> Result<DerivativeSeries> {
    let (t, v) = (series.times(), series.values());
    let n = t.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("duplicate or unsorted times".into()));
    }
    let mut rates = Vec::with_capacity(n);
    rates.push((v[1] - v[0]) / (t[1] - t[0]));
    for i in 1..n - 1 {
        rates.push((v[i + 1] - v[i - 1]) / (t[i + 1] - t[i - 1]));
    }
    rates.push((v[n - 1] - v[n - 2]) / (t[n - 1] - t[n - 2]));
    Ok(DerivativeSeries { times: t.to_vec(), rates })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub time: f64,
    pub rate: f64,
}

/// Time of the largest rate; ties go to the earliest time.
pub fn find_peak(derivative: &DerivativeSeries) -> Result<Peak> {
    let mut best: Option<Peak> = None;
    for (&time, &rate) in derivative.times.iter().zip(&derivative.rates) {
        if best.is_none_or(|b| rate > b.rate) {
            best = Some(Peak { time, rate });
        }
    }
    best.ok_or_else(|| Error::EmptySelection("derivative series is empty".into()))
}
