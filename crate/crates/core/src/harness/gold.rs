//! pCN reference posterior, with an on-disk cache keyed by configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::mcmc::{mpsrf, posterior_moments, psrf, run_chains, write_trace, Likelihood, TraceRow};

use super::data::Dataset;
use super::setup::Setup;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrfPoint {
    pub samples_per_chain: usize,
    pub max_psrf: Option<f64>,
    pub mpsrf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldStandard {
    pub key: String,
    pub data_checksum: String,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub samples: usize,
    pub acceptance_rates: Vec<f64>,
    /// PSRF of each tracked spectral coefficient over the retained samples.
    pub psrf: Vec<Option<f64>>,
    pub mpsrf: Option<f64>,
    /// Diagnostics on growing prefixes of the retained samples.
    pub psrf_trace: Vec<PsrfPoint>,
    pub forward_runs: f64,
    /// Evenly spaced subset of the pooled samples used for forecasts.
    pub forecast_samples: Vec<Vec<f64>>,
    pub traces: Vec<Vec<TraceRow>>,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    seed: u64,
    grid: &'a crate::grid::Grid2D,
    prior: &'a super::config::PriorConfig,
    model: &'a super::config::ModelConfig,
    measurement: &'a super::config::MeasurementConfig,
    noise: &'a super::config::NoiseConfig,
    mcmc: &'a super::config::McmcConfig,
    forecast_samples: usize,
    data: &'a str,
}

fn forecast_cap(setup: &Setup) -> usize {
    setup.cfg.forecast.as_ref().map_or(0, |f| f.max_samples)
}

/// Hash of everything the chains depend on.
pub fn cache_key(setup: &Setup, data_checksum: &str) -> String {
    let c = &setup.cfg;
    let km = KeyMaterial {
        seed: c.seed,
        grid: &c.grid,
        prior: &c.prior,
        model: &c.model,
        measurement: &c.measurement,
        noise: &c.noise,
        mcmc: &c.mcmc,
        forecast_samples: forecast_cap(setup),
        data: data_checksum,
    };
    let bytes = serde_json::to_vec(&km).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn diagnostics(coeffs: &[Vec<Vec<f64>>], n: usize) -> (Vec<Option<f64>>, Option<f64>) {
    let j = coeffs[0].first().map_or(0, Vec::len);
    let prefix: Vec<Vec<Vec<f64>>> = coeffs.iter().map(|c| c[..n].to_vec()).collect();
    let per: Vec<Option<f64>> = (0..j)
        .map(|k| {
            let chains: Vec<Vec<f64>> = prefix.iter().map(|c| c.iter().map(|x| x[k]).collect()).collect();
            psrf(&chains).ok()
        })
        .collect();
    (per, mpsrf(&prefix).ok())
}

pub fn run_gold_standard(setup: &Setup, data: &Dataset) -> Result<GoldStandard> {
    let cost = setup.model.cost();
    cost.reset();
    let lik = Likelihood::new(setup.model.forward(), data.values(), data.variances())?;
    let cc = setup.cfg.mcmc.chain_config();
    let project = |u: &[f64]| setup.project(u);
    let chains = run_chains(
        setup.cfg.mcmc.chains,
        &cc,
        setup.prior.as_ref(),
        &lik,
        setup.cfg.seed,
        setup.exec,
        Some(&project),
    )?;
    let forward_runs = cost.forward_runs();
    let pooled: Vec<&Vec<f64>> = chains.iter().flat_map(|c| c.samples.iter()).collect();
    let mo = posterior_moments(&pooled)?;
    let coeffs: Vec<Vec<Vec<f64>>> = chains.iter().map(|c| c.samples.iter().map(|u| setup.project(u)).collect()).collect();
    let n = cc.n_samples();
    let (per, mp) = diagnostics(&coeffs, n);
    let psrf_trace = (1..=10)
        .map(|k| n * k / 10)
        .filter(|&m| m >= 2)
        .map(|m| {
            let (p, mp) = diagnostics(&coeffs, m);
            PsrfPoint {
                samples_per_chain: m,
                max_psrf: p.iter().copied().collect::<Option<Vec<f64>>>().map(|v| v.into_iter().fold(f64::NEG_INFINITY, f64::max)),
                mpsrf: mp,
            }
        })
        .collect();
    let cap = forecast_cap(setup).min(pooled.len());
    let forecast_samples = (0..cap).map(|i| pooled[i * pooled.len() / cap].clone()).collect();
    let acceptance_rates: Vec<f64> = chains.iter().map(|c| c.acceptance_rate).collect();
    log::info!(
        "reference posterior: {} samples, acceptance {:?}, MPSRF {:?}",
        mo.count,
        acceptance_rates,
        mp
    );
    Ok(GoldStandard {
        key: cache_key(setup, &data.checksum()),
        data_checksum: data.checksum(),
        mean: mo.mean,
        variance: mo.variance,
        samples: mo.count,
        acceptance_rates,
        psrf: per,
        mpsrf: mp,
        psrf_trace,
        forward_runs,
        forecast_samples,
        traces: chains.into_iter().map(|c| c.trace).collect(),
    })
}

fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("gold-{key}.json"))
}

/// Loads the reference posterior from `cache` when present, otherwise runs
/// the chains and stores the result there.
pub fn load_or_run(setup: &Setup, data: &Dataset, cache: Option<&Path>) -> Result<GoldStandard> {
    let key = cache_key(setup, &data.checksum());
    if let Some(dir) = cache {
        let p = cache_path(dir, &key);
        if p.exists() {
            let g: GoldStandard = serde_json::from_slice(&std::fs::read(&p)?)?;
            if g.key == key {
                log::info!("loaded reference posterior from {}", p.display());
                return Ok(g);
            }
            log::warn!("cache entry {} has a stale key; recomputing", p.display());
        }
    }
    let g = run_gold_standard(setup, data)?;
    if let Some(dir) = cache {
        std::fs::create_dir_all(dir)?;
        g.save(&cache_path(dir, &key))?;
    }
    Ok(g)
}

impl GoldStandard {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// One `chain_<c>.csv` trace per chain.
    pub fn write_traces(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (c, t) in self.traces.iter().enumerate() {
            write_trace(&dir.join(format!("chain_{c}.csv")), t)?;
        }
        Ok(())
    }
}
