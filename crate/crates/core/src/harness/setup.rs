//! Objects built once from a configuration: grid, prior, flow model, and the
//! observation layout.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};
use crate::model::{CostCounter, ForwardModel, SequentialModel};
use crate::par::Execution;
use crate::prior::GaussianPrior;
use crate::single_phase::{MeasurementSchedule, SinglePhaseModel};
use crate::spectral::SpectralBasis;
use crate::two_phase::{TwoPhaseModel, WellKind};

use super::config::{ExperimentConfig, ModelConfig};

#[derive(Clone)]
pub enum FlowModel {
    SinglePhase(Arc<SinglePhaseModel>),
    TwoPhase(Arc<TwoPhaseModel>),
}

impl FlowModel {
    pub fn forward(&self) -> Arc<dyn ForwardModel> {
        match self {
            FlowModel::SinglePhase(m) => m.clone(),
            FlowModel::TwoPhase(m) => m.clone(),
        }
    }

    pub fn sequential(&self) -> &dyn SequentialModel {
        match self {
            FlowModel::SinglePhase(m) => m.as_ref(),
            FlowModel::TwoPhase(m) => m.as_ref(),
        }
    }

    pub fn cost(&self) -> &Arc<CostCounter> {
        match self {
            FlowModel::SinglePhase(m) => m.cost_counter(),
            FlowModel::TwoPhase(m) => m.cost_counter(),
        }
    }

    /// Locations of the observed wells in per-time measurement order.
    pub fn observed_locations(&self) -> Vec<(f64, f64)> {
        match self {
            FlowModel::SinglePhase(m) => m.observed_locations(),
            FlowModel::TwoPhase(m) => m.observed_locations(),
        }
    }
}

/// One scalar observation: the measured well, time and unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsSlot {
    pub time: f64,
    pub well: String,
    pub unit: &'static str,
}

pub struct Setup {
    pub cfg: ExperimentConfig,
    pub grid: Grid2D,
    pub basis: Arc<SpectralBasis>,
    pub prior: Arc<GaussianPrior>,
    pub model: FlowModel,
    pub slots: Vec<ObsSlot>,
    pub exec: Execution,
}

impl Setup {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = Grid2D::new(cfg.grid.nx, cfg.grid.ny, cfg.grid.length)?;
        let basis = Arc::new(SpectralBasis::new(grid));
        let prior = Arc::new(GaussianPrior::nondimensional(
            Field::constant(grid, cfg.prior.mean),
            cfg.prior.kappa,
            cfg.prior.alpha,
            basis.clone(),
        )?);
        let names = cfg.model.well_names();
        let observed: Vec<usize> = match &cfg.measurement.wells {
            None => (0..names.len()).collect(),
            Some(ws) => ws
                .iter()
                .map(|w| names.iter().position(|n| n == w).ok_or_else(|| Error::Config(format!("unknown well {w}"))))
                .collect::<Result<_>>()?,
        };
        let sched = MeasurementSchedule {
            times: cfg.measurement.times.clone(),
            wells: observed,
        };
        let (model, per_time): (FlowModel, Vec<(String, &'static str)>) = match &cfg.model {
            ModelConfig::SinglePhase(c) => {
                let m = SinglePhaseModel::new(grid, c.clone(), sched.clone())?;
                let per = sched.wells.iter().map(|&w| (c.wells[w].name.clone(), "Pa")).collect();
                (FlowModel::SinglePhase(Arc::new(m)), per)
            }
            ModelConfig::TwoPhase(c) => {
                let m = TwoPhaseModel::new(grid, c.clone(), sched.clone())?;
                let per = m
                    .observed_wells()
                    .iter()
                    .map(|&w| {
                        let unit = match c.wells[w].kind {
                            WellKind::Injector => "Pa",
                            WellKind::Producer => "m3/day",
                        };
                        (c.wells[w].name.clone(), unit)
                    })
                    .collect();
                (FlowModel::TwoPhase(Arc::new(m)), per)
            }
        };
        let slots = sched
            .times
            .iter()
            .flat_map(|&t| {
                per_time.iter().map(move |(w, unit)| ObsSlot {
                    time: t,
                    well: w.clone(),
                    unit,
                })
            })
            .collect();
        let exec = if cfg.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        };
        Ok(Self {
            cfg,
            grid,
            basis,
            prior,
            model,
            slots,
            exec,
        })
    }

    /// Noise standard deviation of every observation.
    pub fn noise_sigmas(&self) -> Vec<f64> {
        self.slots.iter().map(|s| self.cfg.noise.sigma_for(&s.well)).collect()
    }

    /// Prior for the truth draw: `truth_kappa` in place of `kappa`.
    pub fn truth_prior(&self) -> Result<GaussianPrior> {
        let p = &self.cfg.prior;
        GaussianPrior::nondimensional(
            Field::constant(self.grid, p.mean),
            p.truth_kappa.unwrap_or(p.kappa),
            p.alpha,
            self.basis.clone(),
        )
    }

    /// Leading spectral coefficients of `u - ū`, used for traces and diagnostics.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = u.iter().map(|v| v - self.cfg.prior.mean).collect();
        let mut c = self.basis.analyze(&d);
        c.truncate(self.cfg.mcmc.modes);
        c
    }
}
