//! Stage functions and the end-to-end experiment.
//!
//! Each stage reads its inputs from and writes its outputs to an output
//! directory, so the CLI can run stages separately:
//!
//! ```text
//! data/        truth.csv, observations.csv, truth curves
//! gold.json    reference posterior; chains/chain_<c>.csv traces
//! methods/     <label>.json per approximation
//! evaluation.json, forecast.json
//! report.json, errors.csv, cost.json, fields/, forecast/
//! ```

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::prior::LatentPrior;

use super::config::{ExperimentConfig, MethodConfig};
use super::data::{generate_truth_and_data, Dataset};
use super::forecast::{forecast, histograms, ForecastModel, ForecastReport};
use super::gold::{load_or_run, GoldStandard};
use super::methods::{run_method, MapState, MethodResult};
use super::metrics::relative_errors;
use super::report::{emit_report, write_error_table, ExperimentReport, GoldSummary, MethodReport};
use super::setup::{FlowModel, Setup};

/// Random-stream domains of the harness.
pub mod domains {
    pub const DATA: u64 = 0x4441_5441;
    pub const FORECAST_PRIOR: u64 = 0x4650_5249;
}

/// Paths of the stage artifacts under one output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.dir.join("data")
    }

    pub fn gold(&self) -> PathBuf {
        self.dir.join("gold.json")
    }

    pub fn method(&self, label: &str) -> PathBuf {
        self.dir.join("methods").join(format!("{label}.json"))
    }

    pub fn evaluation(&self) -> PathBuf {
        self.dir.join("evaluation.json")
    }

    pub fn forecast(&self) -> PathBuf {
        self.dir.join("forecast.json")
    }
}

pub fn save_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p)?;
    }
    std::fs::write(path, serde_json::to_vec(v)?)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Truth and observations under the experiment seed.
pub fn generate(setup: &Setup) -> Result<Dataset> {
    let mut rng = par::stream(setup.cfg.seed, domains::DATA, 0);
    generate_truth_and_data(setup, &mut rng)
}

/// Writes the dataset plus the truth's simulated curves.
pub fn write_dataset(setup: &Setup, data: &Dataset, dir: &Path) -> Result<()> {
    data.write(dir)?;
    match &setup.model {
        FlowModel::SinglePhase(m) => {
            let traj = m.simulate(&data.truth)?;
            traj.write_snapshots(&dir.join("truth_pressure"), &setup.cfg.measurement.times)?;
        }
        FlowModel::TwoPhase(m) => {
            let traj = m.simulate(&data.truth)?;
            traj.write_well_curves(&dir.join("truth_wells.csv"))?;
        }
    }
    setup.model.cost().reset();
    Ok(())
}

/// Moments of every method against the reference posterior.
pub fn evaluate(setup: &Setup, gold: &GoldStandard, results: &[MethodResult]) -> Result<Vec<MethodReport>> {
    results
        .iter()
        .map(|r| {
            if r.data_checksum != gold.data_checksum {
                return Err(Error::Config(format!(
                    "{} was run on different data than the reference posterior",
                    r.label
                )));
            }
            let (eps_u, eps_sigma) = relative_errors(
                &setup.grid,
                &r.mean,
                &r.variance,
                &gold.mean,
                &gold.variance,
                setup.prior.mean_values(),
            )?;
            Ok(MethodReport {
                label: r.label.clone(),
                method: r.method,
                ensemble_size: r.ensemble_size,
                localization: r.localization,
                eps_u,
                eps_sigma,
                forward_runs: r.forward_runs,
                failed_members: r.failures.len(),
                lm_status: r.lm_status,
                lm_iterations: r.lm_iterations,
                mean: r.mean.clone(),
                variance: r.variance.clone(),
            })
        })
        .collect()
}

/// Forecast spread for the prior, the reference posterior and every sampled method.
pub fn run_forecast(setup: &Setup, gold: &GoldStandard, results: &[MethodResult]) -> Result<Option<ForecastReport>> {
    let Some(sc) = &setup.cfg.forecast else {
        return Ok(None);
    };
    let fm = ForecastModel::new(setup, sc)?;
    let prior_samples: Vec<Vec<f64>> = (0..sc.max_samples)
        .map(|i| setup.prior.draw(&mut par::stream(setup.cfg.seed, domains::FORECAST_PRIOR, i as u64)))
        .collect();
    let mut tables = vec![
        forecast(&fm, "prior", &prior_samples, setup.exec)?,
        forecast(&fm, "mcmc", &gold.forecast_samples, setup.exec)?,
    ];
    for r in results.iter().filter(|r| !r.samples.is_empty()) {
        tables.push(forecast(&fm, &r.label, &r.samples, setup.exec)?);
    }
    let reference = fm.run(&gold.mean)?;
    let terminal_time = reference.iter().map(|p| p.time).fold(f64::NEG_INFINITY, f64::max);
    Ok(Some(ForecastReport {
        time_unit: setup.cfg.model.time_unit().to_string(),
        terminal_time,
        reference,
        histograms: histograms(&tables, sc.histogram_bins),
        tables,
    }))
}

pub fn assemble_report(
    setup: &Setup,
    gold: &GoldStandard,
    methods: Vec<MethodReport>,
    forecast: Option<ForecastReport>,
) -> ExperimentReport {
    let cfg = &setup.cfg;
    ExperimentReport {
        name: cfg.name.clone(),
        model: cfg.model.kind_name().to_string(),
        seed: cfg.seed,
        time_unit: cfg.model.time_unit().to_string(),
        grid: setup.grid,
        data_checksum: gold.data_checksum.clone(),
        gold: GoldSummary {
            chains: gold.acceptance_rates.len(),
            samples: gold.samples,
            acceptance_rates: gold.acceptance_rates.clone(),
            psrf: gold.psrf.clone(),
            mpsrf: gold.mpsrf,
            psrf_trace: gold.psrf_trace.clone(),
            forward_runs: gold.forward_runs,
            mean: gold.mean.clone(),
            variance: gold.variance.clone(),
        },
        methods,
        forecast,
    }
}

/// Stage outputs are written to `out` as they complete, so a failing stage
/// leaves the earlier artifacts in place.
pub fn run_experiment(cfg: ExperimentConfig, out: Option<&Path>, cache: Option<&Path>) -> Result<ExperimentReport> {
    let setup = Setup::new(cfg)?;
    let art = out.map(Artifacts::new);
    let data = generate(&setup)?;
    if let Some(a) = &art {
        write_dataset(&setup, &data, &a.data_dir())?;
    }
    let gold = load_or_run(&setup, &data, cache)?;
    if let Some(a) = &art {
        gold.save(&a.gold())?;
        gold.write_traces(&a.dir.join("chains"))?;
    }
    let results = run_methods(&setup, &data, &setup.cfg.methods, art.as_ref())?;
    let evals = evaluate(&setup, &gold, &results)?;
    if let Some(a) = &art {
        save_json(&a.evaluation(), &evals)?;
        write_error_table(&evals, std::fs::File::create(a.dir.join("errors.csv"))?)?;
    }
    let fc = run_forecast(&setup, &gold, &results)?;
    if let Some(a) = &art {
        save_json(&a.forecast(), &fc)?;
    }
    let report = assemble_report(&setup, &gold, evals, fc);
    if let Some(a) = &art {
        emit_report(&report, &a.dir)?;
    }
    Ok(report)
}

/// Runs the given methods in order, sharing one MAP solve.
pub fn run_methods(setup: &Setup, data: &Dataset, methods: &[MethodConfig], art: Option<&Artifacts>) -> Result<Vec<MethodResult>> {
    let mut map_cache: Option<MapState> = None;
    let mut out = Vec::with_capacity(methods.len());
    for mc in methods {
        let r = run_method(setup, data, mc, &mut map_cache)?;
        if let Some(a) = art {
            save_json(&a.method(&r.label), &r)?;
        }
        out.push(r);
    }
    Ok(out)
}

