//! Leave-one-dataset-out benchmark: plan, instrumented execution, scoring
//! and reporting.

mod access;
mod eval;
mod plan;
mod render;
mod report;
mod run;

pub use access::{Access, AccessExtent, AccessSummary, CorpusView, Purpose};
pub use eval::{evaluate, evaluate_mean, forecast_window, point_forecast, test_window_offsets, WindowScore};
pub use plan::{CsvSource, DataSource, ExperimentPlan, NaiveLag, Variant, VariantSeeds};
pub use render::{parse_aggregates_csv, render_csv, render_markdown};
pub use report::{
    assemble_report, ReportMetadata, RunReport, SeedRecord, VariantSeedRecord, VariantTraining, REPORT_SCHEMA_VERSION,
};
pub use run::{run_plan, run_variant, RunOptions, TrainingSummary, VariantOutcome, VariantRecord};
