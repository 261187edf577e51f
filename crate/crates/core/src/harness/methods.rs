//! Runs one configured approximation and records its moments and cost.

use serde::{Deserialize, Serialize};

use crate::da::{self, build_localization, cmap, map_estimate, rml_sample, run_filter, FilterConfig, FilterKind, LmStatus};
use crate::error::Result;
use crate::mcmc::{posterior_moments, Likelihood};
use crate::par;

use super::config::{MethodConfig, MethodKind};
use super::data::Dataset;
use super::setup::Setup;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub label: String,
    pub method: MethodKind,
    pub ensemble_size: usize,
    pub localization: Option<f64>,
    pub data_checksum: String,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Simulated solver steps divided by the steps of one full run.
    pub forward_runs: f64,
    /// Members that failed and were left out.
    pub failures: Vec<String>,
    pub lm_status: Option<LmStatus>,
    pub lm_iterations: Option<f64>,
    /// Parameter samples (empty for the exact MAP moments).
    pub samples: Vec<Vec<f64>>,
}

/// MAP point and `C_MAP` factor, computed once and shared by `map` and `lmap`.
pub struct MapState {
    pub factor: da::CmapFactor,
    pub status: LmStatus,
    pub iterations: usize,
    pub forward_runs: f64,
}

fn map_state(setup: &Setup, lik: &Likelihood, mc: &MethodConfig) -> Result<MapState> {
    let cost = setup.model.cost();
    cost.reset();
    let prior = setup.prior.as_ref();
    let r = map_estimate(prior, lik, &mc.lm, setup.exec)?;
    let factor = cmap(prior, lik.model().as_ref(), &r.u, lik.noise_variances(), mc.lm.fd_step, setup.exec)?;
    Ok(MapState {
        factor,
        status: r.status,
        iterations: r.iterations,
        forward_runs: cost.forward_runs(),
    })
}

/// Runs `mc` against `data`. `map_cache` carries the MAP solution between
/// the `map` and `lmap` entries of one experiment.
pub fn run_method(setup: &Setup, data: &Dataset, mc: &MethodConfig, map_cache: &mut Option<MapState>) -> Result<MethodResult> {
    let label = mc.label();
    log::info!("running {label}");
    let seed = mc.seed.unwrap_or(setup.cfg.seed);
    let cost = setup.model.cost();
    let prior = setup.prior.as_ref();
    let lik = Likelihood::new(setup.model.forward(), data.values(), data.variances())?;
    let mut res = MethodResult {
        label,
        method: mc.method,
        ensemble_size: mc.ensemble_size,
        localization: mc.localization,
        data_checksum: data.checksum(),
        mean: Vec::new(),
        variance: Vec::new(),
        forward_runs: 0.0,
        failures: Vec::new(),
        lm_status: None,
        lm_iterations: None,
        samples: Vec::new(),
    };
    match mc.method {
        MethodKind::Map | MethodKind::Lmap => {
            if map_cache.is_none() {
                *map_cache = Some(map_state(setup, &lik, mc)?);
            }
            let ms = map_cache.as_ref().unwrap();
            res.forward_runs = ms.forward_runs;
            res.lm_status = Some(ms.status);
            res.lm_iterations = Some(ms.iterations as f64);
            if mc.method == MethodKind::Map {
                res.mean = ms.factor.u_map.clone();
                res.variance = ms.factor.pointwise_variance(prior);
            } else {
                res.samples = (0..mc.ensemble_size)
                    .map(|j| ms.factor.sample(prior, &mut par::stream(seed, da::domains::LMAP, j as u64)))
                    .collect();
            }
        }
        MethodKind::Rml => {
            cost.reset();
            let out = rml_sample(prior, &lik, mc.ensemble_size, &mc.lm, seed, setup.exec);
            res.forward_runs = cost.forward_runs();
            res.lm_iterations = Some(out.mean_iterations());
            res.failures = out.failures.iter().map(|(j, e)| format!("member {j}: {e}")).collect();
            res.samples = out.samples();
        }
        MethodKind::Enkf | MethodKind::Ensrf => {
            let loc = match mc.localization {
                Some(c) => Some(build_localization(&setup.grid, &setup.model.observed_locations(), c)?),
                None => None,
            };
            let fc = FilterConfig {
                kind: if mc.method == MethodKind::Enkf {
                    FilterKind::Enkf
                } else {
                    FilterKind::Ensrf
                },
                ensemble_size: mc.ensemble_size,
                seed,
            };
            cost.reset();
            let out = run_filter(
                setup.model.sequential(),
                prior,
                lik.data(),
                lik.noise_variances(),
                &fc,
                loc.as_ref(),
                setup.exec,
            )?;
            res.forward_runs = cost.forward_runs();
            res.samples = out.samples();
        }
    }
    if mc.method != MethodKind::Map {
        let mo = posterior_moments(&res.samples)?;
        res.mean = mo.mean;
        res.variance = mo.variance;
    }
    Ok(res)
}
