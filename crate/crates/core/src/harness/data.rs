//! Synthetic truth and noisy observations.

use std::path::Path;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::prior::LatentPrior;

use super::setup::Setup;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    pub well: String,
    pub unit: String,
    pub noiseless: f64,
    pub value: f64,
    pub sigma: f64,
}

/// The truth `u†`, `G(u†)` and `y = G(u†) + η`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub truth: Field,
    pub observations: Vec<Observation>,
}

impl Dataset {
    pub fn values(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.value).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.sigma * o.sigma).collect()
    }

    /// SHA-256 over the observed values and their standard deviations.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for o in &self.observations {
            h.update(o.value.to_le_bytes());
            h.update(o.sigma.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Writes `truth.csv` and `observations.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.truth.write_csv(&dir.join("truth.csv"))?;
        let mut w = csv::Writer::from_path(dir.join("observations.csv"))?;
        for o in &self.observations {
            w.serialize(o)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let truth = Field::read_csv(&dir.join("truth.csv"))?;
        let mut r = csv::Reader::from_path(dir.join("observations.csv"))?;
        let observations = r.deserialize().collect::<std::result::Result<Vec<Observation>, _>>()?;
        Ok(Self { truth, observations })
    }
}

/// Draws `u†`, runs the forward model, and adds componentwise Gaussian noise.
pub fn generate_truth_and_data(setup: &Setup, rng: &mut dyn RngCore) -> Result<Dataset> {
    let tp = setup.truth_prior()?;
    let amp = setup.cfg.prior.truth_amplitude;
    let dev = tp.draw_deviation(rng);
    let values: Vec<f64> = dev
        .iter()
        .zip(tp.mean_values())
        .map(|(d, m)| m + amp * d)
        .collect();
    let truth = Field::new(setup.grid, values)?;
    let g = setup.model.forward().forward(&truth.values)?;
    if g.len() != setup.slots.len() {
        return Err(Error::LengthMismatch {
            expected: setup.slots.len(),
            found: g.len(),
        });
    }
    let sigmas = setup.noise_sigmas();
    let observations = setup
        .slots
        .iter()
        .zip(g)
        .zip(sigmas)
        .map(|((slot, gi), s)| {
            let z: f64 = rng.sample(StandardNormal);
            Observation {
                time: slot.time,
                well: slot.well.clone(),
                unit: slot.unit.to_string(),
                noiseless: gi,
                value: gi + s * z,
                sigma: s,
            }
        })
        .collect();
    setup.model.cost().reset();
    Ok(Dataset { truth, observations })
}
