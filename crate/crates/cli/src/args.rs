use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diffusion_core::fitter::TimeAxis;
use diffusion_core::growth_models::ModelKind;
use diffusion_core::series::{Measure, Scope};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "diffusion",
    version,
    about = "Fit sigmoid growth curves to yearly credit-operation records"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit growth models to the cumulative series of one or every year.
    Fit(FitArgs),
    /// Daily rate by central differences, with the peak day.
    Derive(DeriveArgs),
    /// Lorenz curve, top shares and value CCDF across entities.
    Concentration(ConcentrationArgs),
    /// Generate synthetic operation records from a scenario file.
    Simulate(SimulateArgs),
    /// Re-run a command from its run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    Count,
    Volume,
}

impl From<KindArg> for Measure {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Count => Measure::Count,
            KindArg::Volume => Measure::Volume,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeArg {
    /// Assented pleas only.
    Assented,
    /// Assented and rejected pleas.
    All,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Assented => Scope::AssentedOnly,
            ScopeArg::All => Scope::AllPleas,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Logistic,
    /// Three-parameter Gompertz, N = m·exp(−b·e^(−ct)).
    Gompertz,
    /// Two-parameter Gompertz anchored at N(1) = 1.
    GompertzStrict,
    Generalized,
    /// Logistic and Gompertz, keeping the better fit.
    Auto,
}

impl ModelArg {
    pub fn candidates(self) -> Vec<ModelKind> {
        match self {
            ModelArg::Logistic => vec![ModelKind::Logistic],
            ModelArg::Gompertz => vec![ModelKind::GompertzFree],
            ModelArg::GompertzStrict => vec![ModelKind::GompertzStrict],
            ModelArg::Generalized => vec![ModelKind::Generalized],
            ModelArg::Auto => vec![ModelKind::Logistic, ModelKind::GompertzFree],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeAxisArg {
    /// t = 1 on January 1.
    DayOfYear,
    /// t = 0 on January 1 (three-parameter Gompertz only).
    ShiftedZero,
}

impl From<TimeAxisArg> for TimeAxis {
    fn from(a: TimeAxisArg) -> Self {
        match a {
            TimeAxisArg::DayOfYear => TimeAxis::DayOfYear,
            TimeAxisArg::ShiftedZero => TimeAxis::ShiftedZero,
        }
    }
}

/// A single year, or every year present in the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Value", into = "serde_json::Value")]
pub enum YearSel {
    One(i32),
    All,
}

impl FromStr for YearSel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(YearSel::All);
        }
        s.parse()
            .map(YearSel::One)
            .map_err(|_| format!("expected a year or \"all\", got {s:?}"))
    }
}

impl fmt::Display for YearSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            YearSel::One(y) => write!(f, "{y}"),
            YearSel::All => f.write_str("all"),
        }
    }
}

impl TryFrom<serde_json::Value> for YearSel {
    type Error = String;

    fn try_from(v: serde_json::Value) -> Result<Self, Self::Error> {
        match v {
            serde_json::Value::String(s) => s.parse(),
            serde_json::Value::Number(n) => n
                .as_i64()
                .and_then(|y| i32::try_from(y).ok())
                .map(YearSel::One)
                .ok_or(format!("bad year {n}")),
            other => Err(format!("bad year {other}")),
        }
    }
}

impl From<YearSel> for serde_json::Value {
    fn from(y: YearSel) -> Self {
        match y {
            YearSel::One(y) => y.into(),
            YearSel::All => "all".into(),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Operation records CSV (date,entity_id,parent_state,value,status).
    pub input: PathBuf,
    /// Year to fit, or "all" for one output directory per year.
    #[arg(long, default_value = "all")]
    pub year: YearSel,
    #[arg(long, value_enum, default_value_t = KindArg::Count)]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value_t = ScopeArg::All)]
    pub scope: ScopeArg,
    #[arg(long, value_enum, default_value_t = ModelArg::Auto)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value_t = TimeAxisArg::DayOfYear)]
    pub time_axis: TimeAxisArg,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DeriveArgs {
    pub input: PathBuf,
    #[arg(long, default_value = "all")]
    pub year: YearSel,
    #[arg(long, value_enum, default_value_t = KindArg::Count)]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value_t = ScopeArg::All)]
    pub scope: ScopeArg,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConcentrationArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Count)]
    pub basis: KindArg,
    /// Top fraction of entities for the headline share, in (0, 1].
    #[arg(long, default_value_t = 0.2)]
    pub top_q: f64,
    /// Restrict to one year; all records by default.
    #[arg(long, default_value = "all")]
    pub year: YearSel,
    #[arg(long, value_enum, default_value_t = ScopeArg::All)]
    pub scope: ScopeArg,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario TOML file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Records CSV to write; the manifest goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Run manifest written by an earlier command.
    pub manifest: PathBuf,
    /// Output directory (or CSV path for simulate runs).
    #[arg(long)]
    pub out: PathBuf,
}
