//! Experiment configuration, read from TOML.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::da::LmOptions;
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::mcmc::ChainConfig;
use crate::schedule::Schedule;
use crate::single_phase::SinglePhaseConfig;
use crate::two_phase::{TwoPhaseConfig, WellKind};

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// Constant prior mean ū of the log-permeability (ln m²).
    pub mean: f64,
    /// κ on the domain rescaled to unit side.
    pub kappa: f64,
    pub alpha: f64,
    /// κ of the distribution the truth is drawn from; defaults to `kappa`.
    #[serde(default)]
    pub truth_kappa: Option<f64>,
    /// Factor applied to `u† - ū` after drawing the truth.
    #[serde(default = "one")]
    pub truth_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    /// Times in days, rates in m³/day, pressures in Pa.
    SinglePhase(SinglePhaseConfig),
    /// Times in years, injection rates in m³/day, pressures in Pa.
    TwoPhase(TwoPhaseConfig),
}

impl ModelConfig {
    pub fn well_names(&self) -> Vec<String> {
        match self {
            ModelConfig::SinglePhase(c) => c.wells.iter().map(|w| w.name.clone()).collect(),
            ModelConfig::TwoPhase(c) => c.wells.iter().map(|w| w.name.clone()).collect(),
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            ModelConfig::SinglePhase(c) => c.horizon_days,
            ModelConfig::TwoPhase(c) => c.horizon_years,
        }
    }

    pub fn time_unit(&self) -> &'static str {
        match self {
            ModelConfig::SinglePhase(_) => "day",
            ModelConfig::TwoPhase(_) => "year",
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelConfig::SinglePhase(_) => "single_phase",
            ModelConfig::TwoPhase(_) => "two_phase",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    /// Measurement times in the model's time unit.
    pub times: Vec<f64>,
    /// Observed wells by name; all wells when absent.
    #[serde(default)]
    pub wells: Option<Vec<String>>,
}

/// Standard deviations of the observation noise, per well.
///
/// Values are standard deviations in the unit of the measured quantity
/// (Pa for pressures, m³/day for rates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma: f64,
    #[serde(default)]
    pub wells: BTreeMap<String, f64>,
}

impl NoiseConfig {
    pub fn sigma_for(&self, well: &str) -> f64 {
        self.wells.get(well).copied().unwrap_or(self.sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub chains: usize,
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub beta: f64,
    /// Leading spectral modes tracked in traces and convergence diagnostics.
    pub modes: usize,
}

impl McmcConfig {
    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            n_steps: self.steps,
            burn_in: self.burn_in,
            thin: self.thin,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    /// Exact moments of `N(u_MAP, C_MAP)`.
    Map,
    Lmap,
    Rml,
    Enkf,
    Ensrf,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Map => "map",
            MethodKind::Lmap => "lmap",
            MethodKind::Rml => "rml",
            MethodKind::Enkf => "enkf",
            MethodKind::Ensrf => "ensrf",
        }
    }
}

fn default_ensemble() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub method: MethodKind,
    /// Report name; defaults to the method name with `-loc` for localized filters.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_ensemble")]
    pub ensemble_size: usize,
    /// Gaspari-Cohn critical length (m); filters only.
    #[serde(default)]
    pub localization: Option<f64>,
    #[serde(default)]
    pub lm: LmOptions,
    /// Overrides the experiment seed for this method's random streams.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl MethodConfig {
    pub fn label(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None if self.localization.is_some() => format!("{}-loc", self.method.name()),
            None => self.method.name().to_string(),
        }
    }
}

/// A well added for the forecast period. `schedule` is a rate (m³/day) for
/// single-phase and injectors, a bottom-hole pressure (Pa) for producers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewWell {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub schedule: Schedule,
    /// Required for two-phase models.
    #[serde(default)]
    pub kind: Option<WellKind>,
    #[serde(default)]
    pub active_from: f64,
    #[serde(default)]
    pub well_index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleChange {
    pub well: String,
    /// Replaces the well's schedule over the whole simulation, in absolute time.
    pub schedule: Schedule,
}

fn default_bins() -> usize {
    20
}

fn default_forecast_samples() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastScenario {
    /// Simulated time beyond the assimilation horizon.
    pub extension: f64,
    #[serde(default)]
    pub new_wells: Vec<NewWell>,
    #[serde(default)]
    pub schedule_changes: Vec<ScheduleChange>,
    /// Quantities to report (`pressure`, `bhp`, `total_rate`, `cumulative_oil`); all when empty.
    #[serde(default)]
    pub quantities: Vec<String>,
    /// Report times; every solver time when empty.
    #[serde(default)]
    pub report_times: Vec<f64>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Cap on the number of reference-posterior samples pushed through the forecast.
    #[serde(default = "default_forecast_samples")]
    pub max_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default = "yes")]
    pub parallel: bool,
    pub grid: Grid2D,
    pub prior: PriorConfig,
    pub model: ModelConfig,
    pub measurement: MeasurementConfig,
    pub noise: NoiseConfig,
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub forecast: Option<ForecastScenario>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks cross references and signs; model physics is checked when the
    /// model is built.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        Grid2D::new(self.grid.nx, self.grid.ny, self.grid.length)?;
        if !(self.prior.kappa > 0.0) || !(self.prior.alpha > 1.0) {
            return bad("prior needs kappa > 0 and alpha > 1".into());
        }
        if self.prior.truth_kappa.is_some_and(|k| !(k > 0.0)) || !(self.prior.truth_amplitude > 0.0) {
            return bad("truth kappa and amplitude must be positive".into());
        }
        let names = self.model.well_names();
        let known: BTreeSet<&str> = names.iter().map(String::as_str).collect();
        if known.len() != names.len() {
            return bad("well names must be unique".into());
        }
        let check = |w: &str, what: &str| -> Result<()> {
            if known.contains(w) {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} refers to unknown well {w}")))
            }
        };
        if let Some(ws) = &self.measurement.wells {
            if ws.is_empty() {
                return bad("measurement well list is empty".into());
            }
            for w in ws {
                check(w, "measurement")?;
            }
        }
        if !(self.noise.sigma > 0.0) {
            return bad(format!("noise sigma must be positive, got {}", self.noise.sigma));
        }
        for (w, s) in &self.noise.wells {
            check(w, "noise")?;
            if !(*s > 0.0) {
                return bad(format!("noise sigma for {w} must be positive, got {s}"));
            }
        }
        self.mcmc.chain_config().validate()?;
        if self.mcmc.chains < 2 {
            return bad("at least two chains are needed for the convergence diagnostics".into());
        }
        if self.mcmc.modes == 0 || self.mcmc.modes >= self.grid.nx * self.grid.ny {
            return bad("mcmc.modes must lie in [1, number of cells)".into());
        }
        let mut labels = BTreeSet::new();
        for m in &self.methods {
            if !labels.insert(m.label()) {
                return bad(format!("duplicate method label {}", m.label()));
            }
            if m.ensemble_size < 2 && m.method != MethodKind::Map {
                return bad(format!("{}: ensemble size must be at least 2", m.label()));
            }
            if let Some(c) = m.localization {
                if !matches!(m.method, MethodKind::Enkf | MethodKind::Ensrf) {
                    return bad(format!("{}: localization applies to filters only", m.label()));
                }
                if !(c > 0.0) {
                    return bad(format!("{}: localization length must be positive", m.label()));
                }
            }
            m.lm.validate()?;
        }
        if let Some(f) = &self.forecast {
            if !(f.extension > 0.0) {
                return bad("forecast extension must be positive".into());
            }
            if f.histogram_bins == 0 || f.max_samples == 0 {
                return bad("forecast bins and sample cap must be positive".into());
            }
            for c in &f.schedule_changes {
                check(&c.well, "forecast schedule change")?;
                c.schedule.validate()?;
            }
            for w in &f.new_wells {
                if known.contains(w.name.as_str()) {
                    return bad(format!("new well {} already exists", w.name));
                }
                w.schedule.validate()?;
                if matches!(self.model, ModelConfig::TwoPhase(_)) && w.kind.is_none() {
                    return bad(format!("new well {} needs a kind", w.name));
                }
            }
            let allowed = match self.model {
                ModelConfig::SinglePhase(_) => &["pressure"][..],
                ModelConfig::TwoPhase(_) => &["bhp", "total_rate", "cumulative_oil"][..],
            };
            if let Some(q) = f.quantities.iter().find(|q| !allowed.contains(&q.as_str())) {
                return bad(format!("forecast quantity {q} is not available for this model"));
            }
        }
        Ok(())
    }
}
