//! Normalization schemes for multi-scale time series, linear forecasters
//! trained under each of them, and a leave-one-dataset-out benchmark harness.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom of this module fix the precision for callers that
//! do not need the choice.

pub mod data;
pub mod domain;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod norm;
pub mod scalar;

pub use domain::{
    Aggregate, Dataset, DatasetParts, EvalEntry, EvalReport, Forecast, ForecastKind, ForecastPayload, ImprovementTable,
    Instance, Method, NormStats, Origin, Scheme, Scope, Setting, AVG_MODEL,
};
pub use error::{Error, Result};
pub use scalar::{Scalar, EPSILON};

pub type DatasetF64 = Dataset<f64>;
pub type DatasetF32 = Dataset<f32>;
pub type NormStatsF64 = NormStats<f64>;
pub type NormStatsF32 = NormStats<f32>;
pub type InstanceF64 = Instance<f64>;
pub type InstanceF32 = Instance<f32>;
pub type ForecastF64 = Forecast<f64>;
pub type ForecastF32 = Forecast<f32>;
pub type LinearForecasterF64 = models::LinearForecaster<f64>;
pub type LinearForecasterF32 = models::LinearForecaster<f32>;
