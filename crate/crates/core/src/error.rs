use thiserror::Error;

use crate::growth_models::ModelKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("all candidate fits failed: {}", format_failures(.0))]
    AllFitsFailed(Vec<(ModelKind, Error)>),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery itself, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalFailure(_) => true,
            Error::AllFitsFailed(failures) => !failures.is_empty() && failures.iter().all(|(_, e)| e.is_numerical()),
            _ => false,
        }
    }
}

fn format_failures(failures: &[(ModelKind, Error)]) -> String {
    failures
        .iter()
        .map(|(kind, msg)| format!("{kind}: {msg}"))
        .collect::<Vec<_>>()
        .join("; ")
}
