//! Randomized maximum likelihood: one regularized minimization per member,
//! each around a prior draw with perturbed data.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::mcmc::Likelihood;
use crate::par::{self, Execution};
use crate::prior::LatentPrior;

use super::domains;
use super::lm::{minimize, LmOptions, LmStatus};

#[derive(Debug, Clone)]
pub struct RmlMember {
    pub index: usize,
    pub u: Vec<f64>,
    pub status: LmStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RmlOutput {
    pub members: Vec<RmlMember>,
    /// Members whose minimization failed, with the reason; excluded from `members`.
    pub failures: Vec<(usize, String)>,
}

impl RmlOutput {
    pub fn samples(&self) -> Vec<Vec<f64>> {
        self.members.iter().map(|m| m.u.clone()).collect()
    }

    pub fn mean_iterations(&self) -> f64 {
        if self.members.is_empty() {
            return 0.0;
        }
        self.members.iter().map(|m| m.iterations as f64).sum::<f64>() / self.members.len() as f64
    }
}

/// Minimizes `Φ(u; y_j) + ½|u - u_j|²_C` for one member.
pub fn rml_member(
    prior: &dyn LatentPrior,
    lik: &Likelihood,
    u_j: &[f64],
    y_j: &[f64],
    opts: &LmOptions,
    exec: Execution,
) -> Result<(Vec<f64>, LmStatus, usize)> {
    let r = minimize(prior, lik.model().as_ref(), u_j, y_j, lik.noise_variances(), opts, exec)?;
    Ok((r.u, r.status, r.iterations))
}

/// `n_e` RML members; member `j` draws its prior sample and data perturbation
/// from its own stream.
pub fn rml_sample(
    prior: &dyn LatentPrior,
    lik: &Likelihood,
    n_e: usize,
    opts: &LmOptions,
    seed: u64,
    exec: Execution,
) -> RmlOutput {
    let results = exec.map_indexed(n_e, |j| {
        let mut rng = par::stream(seed, domains::RML, j as u64);
        let u_j = prior.draw(&mut rng);
        let y_j: Vec<f64> = lik
            .data()
            .iter()
            .zip(lik.noise_variances())
            .map(|(y, v)| y + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        // Members already run concurrently; keep each Jacobian sequential.
        rml_member(prior, lik, &u_j, &y_j, opts, Execution::Sequential)
    });
    let mut out = RmlOutput::default();
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok((u, status, iterations)) => {
                if status != LmStatus::Converged {
                    log::info!("RML member {j} stopped with {status:?} after {iterations} iterations");
                }
                out.members.push(RmlMember {
                    index: j,
                    u,
                    status,
                    iterations,
                })
            }
            Err(e) => {
                log::warn!("RML member {j} failed: {e}");
                out.failures.push((j, e.to_string()));
            }
        }
    }
    log::info!(
        "RML: {} members, {} failed, mean LM iterations {:.2}",
        out.members.len(),
        out.failures.len(),
        out.mean_iterations()
    );
    out
}
