//! Preconditioned Crank-Nicolson MCMC for posteriors with a Gaussian prior.

mod diagnostics;

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ForwardModel;
use crate::par::{self, Execution};
use crate::prior::LatentPrior;

pub use diagnostics::{ks_one_sample, ks_two_sample, mpsrf, posterior_moments, psrf, KsResult, PosteriorMoments};

/// Random-stream domain for chain initialization and proposals.
pub const CHAIN_DOMAIN: u64 = 0x4d43_4d43;

/// Negative log-likelihood `Φ(u)`.
pub trait Potential: Sync + Send {
    fn phi(&self, u: &[f64]) -> Result<f64>;
}

/// `Φ ≡ 0`: sampling the prior.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoData;

impl Potential for NoData {
    fn phi(&self, _u: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

/// Gaussian likelihood `Φ(u) = ½ |Γ^{-1/2}(y - G(u))|²` with diagonal `Γ`.
#[derive(Clone)]
pub struct Likelihood {
    model: Arc<dyn ForwardModel>,
    data: Vec<f64>,
    noise_var: Vec<f64>,
}

impl std::fmt::Debug for Likelihood {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Likelihood")
            .field("data", &self.data)
            .field("noise_var", &self.noise_var)
            .finish_non_exhaustive()
    }
}

impl Likelihood {
    pub fn new(model: Arc<dyn ForwardModel>, data: Vec<f64>, noise_var: Vec<f64>) -> Result<Self> {
        if data.len() != model.n_obs() {
            return Err(Error::LengthMismatch {
                expected: model.n_obs(),
                found: data.len(),
            });
        }
        if noise_var.len() != data.len() {
            return Err(Error::LengthMismatch {
                expected: data.len(),
                found: noise_var.len(),
            });
        }
        if let Some(v) = noise_var.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!("noise variance must be positive, got {v}")));
        }
        Ok(Self { model, data, noise_var })
    }

    pub fn model(&self) -> &Arc<dyn ForwardModel> {
        &self.model
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn noise_variances(&self) -> &[f64] {
        &self.noise_var
    }

    /// `½ |Γ^{-1/2}(y - g)|²` for a given prediction `g`.
    pub fn misfit(&self, g: &[f64]) -> f64 {
        0.5 * g
            .iter()
            .zip(&self.data)
            .zip(&self.noise_var)
            .map(|((g, y), v)| (y - g) * (y - g) / v)
            .sum::<f64>()
    }
}

impl Potential for Likelihood {
    fn phi(&self, u: &[f64]) -> Result<f64> {
        Ok(self.misfit(&self.model.forward(u)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub u: Vec<f64>,
    pub phi: f64,
    pub steps: u64,
    pub accepted: u64,
    pub beta: f64,
}

impl ChainState {
    pub fn new(u: Vec<f64>, potential: &dyn Potential, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::OutOfRange {
                value: beta,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let phi = potential.phi(&u)?;
        Ok(Self {
            u,
            phi,
            steps: 0,
            accepted: 0,
            beta,
        })
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }
}

/// One pCN Metropolis step. Returns whether the proposal was accepted.
///
/// A proposal whose potential cannot be evaluated is rejected.
pub fn pcn_step(state: &mut ChainState, prior: &dyn LatentPrior, potential: &dyn Potential, rng: &mut dyn RngCore) -> bool {
    let b = state.beta;
    let a = (1.0 - b * b).sqrt();
    let xi = prior.draw_deviation(rng);
    let v: Vec<f64> = state
        .u
        .iter()
        .zip(prior.mean_values())
        .zip(&xi)
        .map(|((u, m), x)| a * u + (1.0 - a) * m + b * x)
        .collect();
    let uniform: f64 = rng.random();
    state.steps += 1;
    let phi_v = match potential.phi(&v) {
        Ok(p) if p.is_finite() => p,
        Ok(p) => {
            log::warn!("pCN proposal at step {} has non-finite potential {p}; rejected", state.steps);
            return false;
        }
        Err(e) => {
            log::warn!("pCN proposal at step {} failed: {e}; rejected", state.steps);
            return false;
        }
    };
    let accept = uniform < (state.phi - phi_v).exp().min(1.0);
    if accept {
        state.u = v;
        state.phi = phi_v;
        state.accepted += 1;
    }
    accept
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub n_steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub beta: f64,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps <= self.burn_in {
            return Err(Error::InvalidParameter(format!(
                "chain length {} must exceed burn-in {}",
                self.n_steps, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thinning interval must be positive".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::OutOfRange {
                value: self.beta,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.n_steps - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub phi: f64,
    pub accepted: bool,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Post-burn-in samples, every `thin` steps.
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    /// One row every `thin` steps over the whole chain.
    pub trace: Vec<TraceRow>,
}

/// Projection used for trace rows, e.g. a few spectral coefficients.
pub type Projection<'a> = &'a (dyn Fn(&[f64]) -> Vec<f64> + Sync);

pub fn run_chain(
    init: Vec<f64>,
    cfg: &ChainConfig,
    prior: &dyn LatentPrior,
    potential: &dyn Potential,
    rng: &mut dyn RngCore,
    project: Option<Projection<'_>>,
) -> Result<ChainOutput> {
    cfg.validate()?;
    let mut state = ChainState::new(init, potential, cfg.beta)?;
    let mut samples = Vec::with_capacity(cfg.n_samples());
    let mut trace = Vec::with_capacity(cfg.n_steps / cfg.thin + 1);
    for step in 1..=cfg.n_steps {
        let accepted = pcn_step(&mut state, prior, potential, rng);
        if step % cfg.thin == 0 {
            trace.push(TraceRow {
                step,
                phi: state.phi,
                accepted,
                coeffs: project.map(|p| p(&state.u)).unwrap_or_default(),
            });
        }
        if step > cfg.burn_in && (step - cfg.burn_in) % cfg.thin == 0 {
            samples.push(state.u.clone());
        }
    }
    Ok(ChainOutput {
        samples,
        acceptance_rate: state.acceptance_rate(),
        trace,
    })
}

/// Runs `n_chains` independent chains started from prior draws.
pub fn run_chains(
    n_chains: usize,
    cfg: &ChainConfig,
    prior: &dyn LatentPrior,
    potential: &dyn Potential,
    seed: u64,
    exec: Execution,
    project: Option<Projection<'_>>,
) -> Result<Vec<ChainOutput>> {
    let out = exec.map_indexed(n_chains, |c| {
        let mut rng = par::stream(seed, CHAIN_DOMAIN, c as u64);
        let init = prior.draw(&mut rng);
        let r = run_chain(init, cfg, prior, potential, &mut rng, project);
        if let Ok(o) = &r {
            log::info!("chain {c}: acceptance rate {:.3}", o.acceptance_rate);
        }
        r
    });
    out.into_iter().collect()
}

/// Writes a chain trace as `step,phi,accepted,c1,...`.
pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let j = trace.first().map_or(0, |r| r.coeffs.len());
    write!(f, "step,phi,accepted")?;
    for k in 1..=j {
        write!(f, ",c{k}")?;
    }
    writeln!(f)?;
    for r in trace {
        write!(f, "{},{},{}", r.step, r.phi, u8::from(r.accepted))?;
        for c in &r.coeffs {
            write!(f, ",{c}")?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearModel;
    use crate::prior::MatrixPrior;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_prior() -> MatrixPrior {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        MatrixPrior::new(vec![1.0, -1.0], c).unwrap()
    }

    #[test]
    fn beta_one_is_an_independent_prior_draw() {
        let prior = small_prior();
        let mut st = ChainState::new(vec![5.0, 5.0], &NoData, 1.0).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = r1.clone();
        assert!(pcn_step(&mut st, &prior, &NoData, &mut r1));
        assert_eq!(st.u, prior.draw(&mut r2));
    }

    #[test]
    fn no_data_accepts_everything() {
        let prior = small_prior();
        let mut st = ChainState::new(vec![0.0, 0.0], &NoData, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!(pcn_step(&mut st, &prior, &NoData, &mut rng));
        }
        assert_eq!(st.acceptance_rate(), 1.0);
    }

    struct Shifted<'a>(&'a Likelihood, f64);
    impl Potential for Shifted<'_> {
        fn phi(&self, u: &[f64]) -> Result<f64> {
            Ok(self.0.phi(u)? + self.1)
        }
    }

    #[test]
    fn constant_shift_does_not_change_decisions() {
        let prior = small_prior();
        let model = Arc::new(LinearModel::new(DMatrix::from_row_slice(1, 2, &[1.0, 2.0])));
        let lik = Likelihood::new(model, vec![0.7], vec![0.04]).unwrap();
        let cfg = ChainConfig {
            n_steps: 500,
            burn_in: 100,
            thin: 1,
            beta: 0.5,
        };
        let a = run_chain(vec![0.0, 0.0], &cfg, &prior, &lik, &mut ChaCha8Rng::seed_from_u64(9), None).unwrap();
        let shifted = Shifted(&lik, 1234.5);
        let b = run_chain(vec![0.0, 0.0], &cfg, &prior, &shifted, &mut ChaCha8Rng::seed_from_u64(9), None).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.acceptance_rate, b.acceptance_rate);
    }

    struct Failing;
    impl Potential for Failing {
        fn phi(&self, u: &[f64]) -> Result<f64> {
            if u[0] > 0.0 {
                Err(Error::SolverFailure {
                    step: 0,
                    reason: "test".into(),
                })
            } else {
                Ok(0.0)
            }
        }
    }

    #[test]
    fn failed_proposals_are_rejected() {
        let prior = MatrixPrior::new(vec![-1.0], DMatrix::from_element(1, 1, 1.0)).unwrap();
        let cfg = ChainConfig {
            n_steps: 2000,
            burn_in: 0,
            thin: 1,
            beta: 0.8,
        };
        let out = run_chain(vec![-1.0], &cfg, &prior, &Failing, &mut ChaCha8Rng::seed_from_u64(2), None).unwrap();
        assert!(out.samples.iter().all(|s| s[0] <= 0.0));
        assert!(out.acceptance_rate < 1.0);
    }

    #[test]
    fn thinning_counts() {
        let prior = small_prior();
        let cfg = ChainConfig {
            n_steps: 50,
            burn_in: 20,
            thin: 30,
            beta: 0.5,
        };
        let out = run_chain(vec![0.0, 0.0], &cfg, &prior, &NoData, &mut ChaCha8Rng::seed_from_u64(0), None).unwrap();
        assert_eq!(out.samples.len(), 1);
        let cfg = ChainConfig { thin: 7, ..cfg };
        let out = run_chain(vec![0.0, 0.0], &cfg, &prior, &NoData, &mut ChaCha8Rng::seed_from_u64(0), None).unwrap();
        assert_eq!(out.samples.len(), cfg.n_samples());
        assert_eq!(out.trace.len(), 50 / 7);
        assert!(ChainConfig { burn_in: 50, ..cfg }.validate().is_err());
    }

    #[test]
    fn chains_are_reproducible_across_execution_modes() {
        let prior = small_prior();
        let cfg = ChainConfig {
            n_steps: 300,
            burn_in: 50,
            thin: 5,
            beta: 0.4,
        };
        let proj = |u: &[f64]| vec![u[0]];
        let a = run_chains(3, &cfg, &prior, &NoData, 42, Execution::Sequential, Some(&proj)).unwrap();
        let b = run_chains(3, &cfg, &prior, &NoData, 42, Execution::Parallel, Some(&proj)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.samples, y.samples);
            assert_eq!(x.trace, y.trace);
        }
        assert_ne!(a[0].samples, a[1].samples);
    }

    #[test]
    fn trace_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rows = vec![TraceRow {
            step: 10,
            phi: 1.5,
            accepted: true,
            coeffs: vec![0.25, -1.0],
        }];
        write_trace(&p, &rows).unwrap();
        let s = std::fs::read_to_string(p).unwrap();
        assert_eq!(s, "step,phi,accepted,c1,c2\n10,1.5,1,0.25,-1\n");
    }
}
