//! Report structure and its on-disk form.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::da::LmStatus;
use crate::error::Result;
use crate::grid::{Field, Grid2D};

use super::config::MethodKind;
use super::forecast::ForecastReport;
use super::gold::PsrfPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldSummary {
    pub chains: usize,
    pub samples: usize,
    pub acceptance_rates: Vec<f64>,
    pub psrf: Vec<Option<f64>>,
    pub mpsrf: Option<f64>,
    pub psrf_trace: Vec<PsrfPoint>,
    pub forward_runs: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub label: String,
    pub method: MethodKind,
    pub ensemble_size: usize,
    pub localization: Option<f64>,
    pub eps_u: f64,
    pub eps_sigma: f64,
    pub forward_runs: f64,
    pub failed_members: usize,
    pub lm_status: Option<LmStatus>,
    pub lm_iterations: Option<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub model: String,
    pub seed: u64,
    pub time_unit: String,
    pub grid: Grid2D,
    /// SHA-256 of the observations every method consumed.
    pub data_checksum: String,
    pub gold: GoldSummary,
    pub methods: Vec<MethodReport>,
    pub forecast: Option<ForecastReport>,
}

impl ExperimentReport {
    pub fn method(&self, label: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.label == label)
    }
}

/// Error table with the fixed column order `method,eps_u,eps_sigma,forward_runs`.
pub fn write_error_table<W: Write>(methods: &[MethodReport], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["method", "eps_u", "eps_sigma", "forward_runs"])?;
    for m in methods {
        w.write_record([
            m.label.clone(),
            m.eps_u.to_string(),
            m.eps_sigma.to_string(),
            m.forward_runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CostEntry<'a> {
    stage: &'a str,
    forward_runs: f64,
}

/// Writes `report.json`, `errors.csv`, `cost.json`, moment fields and plot data.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    write_error_table(&report.methods, std::fs::File::create(dir.join("errors.csv"))?)?;

    let mut ledger = vec![CostEntry {
        stage: "mcmc",
        forward_runs: report.gold.forward_runs,
    }];
    ledger.extend(report.methods.iter().map(|m| CostEntry {
        stage: &m.label,
        forward_runs: m.forward_runs,
    }));
    std::fs::write(dir.join("cost.json"), serde_json::to_string_pretty(&ledger)?)?;

    let fields = dir.join("fields");
    std::fs::create_dir_all(&fields)?;
    let put = |name: &str, v: &[f64]| Field::new(report.grid, v.to_vec())?.write_csv(&fields.join(format!("{name}.csv")));
    put("mcmc_mean", &report.gold.mean)?;
    put("mcmc_variance", &report.gold.variance)?;
    for m in &report.methods {
        put(&format!("{}_mean", m.label), &m.mean)?;
        put(&format!("{}_variance", m.label), &m.variance)?;
    }

    let mut w = csv::Writer::from_path(dir.join("psrf_trace.csv"))?;
    for p in &report.gold.psrf_trace {
        w.serialize(p)?;
    }
    w.flush()?;

    if let Some(f) = &report.forecast {
        let fd = dir.join("forecast");
        std::fs::create_dir_all(&fd)?;
        let mut w = csv::Writer::from_path(fd.join("reference.csv"))?;
        for p in &f.reference {
            w.serialize(p)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(fd.join("quantiles.csv"))?;
        w.write_record(["source", "time", "well", "quantity", "q05", "q25", "q50", "q75", "q95"])?;
        for t in &f.tables {
            for r in &t.rows {
                w.write_record([
                    t.source.clone(),
                    r.time.to_string(),
                    r.well.clone(),
                    r.quantity.clone(),
                    r.q05.to_string(),
                    r.q25.to_string(),
                    r.q50.to_string(),
                    r.q75.to_string(),
                    r.q95.to_string(),
                ])?;
            }
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(fd.join("histograms.csv"))?;
        for h in &f.histograms {
            w.serialize(h)?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn read_report(dir: &Path) -> Result<ExperimentReport> {
    Ok(serde_json::from_slice(&std::fs::read(dir.join("report.json"))?)?)
}
