//! Experiment driver: configuration, synthetic data, the MCMC reference,
//! the approximations, error metrics, forecasts and reports.

mod config;
mod data;
mod experiment;
mod forecast;
mod gold;
mod methods;
mod metrics;
mod report;
mod setup;

pub use config::{
    ExperimentConfig, ForecastScenario, McmcConfig, MeasurementConfig, MethodConfig, MethodKind, ModelConfig, NewWell,
    NoiseConfig, PriorConfig, ScheduleChange,
};
pub use data::{generate_truth_and_data, Dataset, Observation};
pub use experiment::{
    assemble_report, domains, evaluate, generate, load_json, run_experiment, run_forecast, run_methods, save_json,
    write_dataset, Artifacts,
};
pub use forecast::{
    forecast, histograms, quantile, CurvePoint, ForecastModel, ForecastReport, ForecastTable, HistogramRow, QuantileRow,
    TerminalValues, LEVELS,
};
pub use gold::{cache_key, load_or_run, run_gold_standard, GoldStandard, PsrfPoint};
pub use methods::{run_method, MapState, MethodResult};
pub use metrics::relative_errors;
pub use report::{emit_report, read_report, write_error_table, ExperimentReport, GoldSummary, MethodReport};
pub use setup::{FlowModel, ObsSlot, Setup};
