//! Growth-curve estimation for yearly cumulative series of credit operations.
//!
//! The crate is organised bottom-up:
//!
//! - [`growth_models`]: logistic, Gompertz and generalized closed forms, ODE
//!   right-hand sides, parameter gradients and an RK4 reference integrator.
//! - [`fitter`]: Levenberg–Marquardt calibration, R² adherence and model selection.
//! - [`series`]: CSV ingestion of operation records, cumulative aggregation,
//!   central differences and peak detection.
//! - [`concentration`]: top-share, Lorenz and CCDF statistics across entities.
//! - [`synth`]: seeded synthetic scenarios and noisy curve samples.

pub mod concentration;
pub mod error;
pub mod fitter;
pub mod growth_models;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
pub use growth_models::{GrowthParams, ModelKind, TimeGrid};
