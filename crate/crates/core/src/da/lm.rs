//! Levenberg-Marquardt minimization of `Φ(u) + ½|u - center|²_C`.
//!
//! Works in whitened latent coordinates `u = center + E Λ^{1/2} ξ`, where the
//! prior term is `½|ξ|²`. Linear solves use the Woodbury identity so only
//! `N × N` systems are factored.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::spd_solve;
use crate::model::{jacobian_fd_with, ForwardModel};
use crate::par::Execution;
use crate::prior::LatentPrior;

use crate::mcmc::Likelihood;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmOptions {
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    pub max_iterations: usize,
    /// Consecutive rejected trial steps before giving up.
    pub max_retries: usize,
    /// Relative objective decrease threshold.
    pub objective_tol: f64,
    /// Relative step-size threshold.
    pub step_tol: f64,
    /// Gradient norm threshold relative to the initial gradient.
    pub gradient_tol: f64,
    /// Finite-difference step for Jacobians, in units of `u`.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            initial_damping: 1.0,
            damping_up: 10.0,
            damping_down: 10.0,
            max_iterations: 20,
            max_retries: 10,
            objective_tol: 1e-4,
            step_tol: 1e-3,
            gradient_tol: 1e-6,
            fd_step: 1e-3,
        }
    }
}

impl LmOptions {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.initial_damping,
            self.objective_tol,
            self.step_tol,
            self.gradient_tol,
            self.fd_step,
        ];
        if pos.iter().any(|v| !(*v > 0.0)) || !(self.damping_up > 1.0) || !(self.damping_down > 1.0) {
            return Err(Error::InvalidParameter(format!("invalid LM options {self:?}")));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("LM needs at least one iteration".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmStatus {
    Converged,
    IterationCap,
    /// No trial step reduced the objective after the retry budget.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct MapResult {
    pub u: Vec<f64>,
    /// Whitened coordinates of `u` relative to the center.
    pub xi: Vec<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    pub jacobians: usize,
    pub status: LmStatus,
}

struct Problem<'a> {
    prior: &'a dyn LatentPrior,
    model: &'a dyn ForwardModel,
    center: &'a [f64],
    data: &'a [f64],
    sigma: Vec<f64>,
    sqrt_lambda: Vec<f64>,
    exec: Execution,
    fd_step: f64,
}

impl Problem<'_> {
    fn to_u(&self, xi: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = xi.iter().zip(&self.sqrt_lambda).map(|(x, s)| x * s).collect();
        let mut u = self.prior.synthesize(&c);
        for (a, m) in u.iter_mut().zip(self.center) {
            *a += m;
        }
        u
    }

    /// Whitened residual `Γ^{-1/2}(G(u) - y)`.
    fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        let g = self.model.forward(u)?;
        Ok(g.iter()
            .zip(self.data)
            .zip(&self.sigma)
            .map(|((g, y), s)| (g - y) / s)
            .collect())
    }

    /// `Γ^{-1/2} Q E Λ^{1/2}` at `u`.
    fn whitened_jacobian(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let q = jacobian_fd_with(self.model, u, self.fd_step, self.exec)?;
        let n_lat = self.sqrt_lambda.len();
        let mut a = DMatrix::zeros(q.nrows(), n_lat);
        for i in 0..q.nrows() {
            let row: Vec<f64> = q.row(i).iter().copied().collect();
            let t = self.prior.synthesize_transpose(&row);
            for k in 0..n_lat {
                a[(i, k)] = t[k] * self.sqrt_lambda[k] / self.sigma[i];
            }
        }
        Ok(a)
    }
}

fn objective(xi: &[f64], r: &[f64]) -> f64 {
    0.5 * (xi.iter().map(|x| x * x).sum::<f64>() + r.iter().map(|x| x * x).sum::<f64>())
}

/// Solves `(AᵀA + c I) δ = -g` through an `N × N` system.
fn damped_step(a: &DMatrix<f64>, g: &DVector<f64>, c: f64) -> Result<DVector<f64>> {
    let mut s = a * a.transpose();
    for i in 0..s.nrows() {
        s[(i, i)] += c;
    }
    let ag = a * g;
    let t = spd_solve(&s, &DMatrix::from_column_slice(ag.len(), 1, ag.as_slice()))?;
    let inner = a.transpose() * t.column(0);
    Ok(-(g - inner) / c)
}

/// Minimizes `Φ(u; data) + ½|u - center|²_C` starting from `center`.
pub fn minimize(
    prior: &dyn LatentPrior,
    model: &dyn ForwardModel,
    center: &[f64],
    data: &[f64],
    noise_var: &[f64],
    opts: &LmOptions,
    exec: Execution,
) -> Result<MapResult> {
    opts.validate()?;
    if center.len() != prior.n_params() || data.len() != model.n_obs() || noise_var.len() != data.len() {
        return Err(Error::InvalidParameter("inconsistent dimensions for minimization".into()));
    }
    let p = Problem {
        prior,
        model,
        center,
        data,
        sigma: noise_var.iter().map(|v| v.sqrt()).collect(),
        sqrt_lambda: prior.latent_variances().iter().map(|l| l.sqrt()).collect(),
        exec,
        fd_step: opts.fd_step,
    };
    let n_lat = prior.n_latent();
    let mut xi = vec![0.0; n_lat];
    let mut u = center.to_vec();
    let mut r = p.residual(&u)?;
    let mut j = objective(&xi, &r);
    let j0 = j;
    let mut a = p.whitened_jacobian(&u)?;
    let mut jacobians = 1;
    let grad = |a: &DMatrix<f64>, r: &[f64], xi: &[f64]| -> DVector<f64> {
        DVector::from_column_slice(xi) + a.transpose() * DVector::from_column_slice(r)
    };
    let mut g = grad(&a, &r, &xi);
    let g0 = g.norm();
    let done = |status, u, xi, objective, iterations, jacobians| MapResult {
        u,
        xi,
        objective,
        initial_objective: j0,
        iterations,
        jacobians,
        status,
    };
    if g0 == 0.0 {
        return Ok(done(LmStatus::Converged, u, xi, j, 0, jacobians));
    }
    let mut mu = opts.initial_damping;
    let mut accepted_any = false;
    for it in 1..=opts.max_iterations {
        let mut retries = 0;
        let (xi_new, u_new, r_new, j_new, step_norm) = loop {
            let delta = damped_step(&a, &g, 1.0 + mu)?;
            let trial: Vec<f64> = xi.iter().zip(delta.iter()).map(|(x, d)| x + d).collect();
            let ut = p.to_u(&trial);
            let rt = match p.residual(&ut) {
                Ok(rt) => Some(rt),
                Err(e) => {
                    log::debug!("LM trial step failed: {e}");
                    None
                }
            };
            if let Some(rt) = rt {
                let jt = objective(&trial, &rt);
                if jt < j {
                    mu /= opts.damping_down;
                    break (trial, ut, rt, jt, delta.norm());
                }
            }
            mu *= opts.damping_up;
            retries += 1;
            if retries > opts.max_retries {
                if !accepted_any {
                    return Err(Error::Diverged { retries });
                }
                return Ok(done(LmStatus::Stalled, u, xi, j, it - 1, jacobians));
            }
        };
        accepted_any = true;
        let rel_dec = (j - j_new) / j.max(f64::MIN_POSITIVE);
        let xi_norm = xi_new.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rel_step = step_norm / xi_norm.max(1.0);
        xi = xi_new;
        u = u_new;
        r = r_new;
        j = j_new;
        if rel_dec < opts.objective_tol && rel_step < opts.step_tol {
            return Ok(done(LmStatus::Converged, u, xi, j, it, jacobians));
        }
        if it == opts.max_iterations {
            break;
        }
        a = p.whitened_jacobian(&u)?;
        jacobians += 1;
        g = grad(&a, &r, &xi);
        if g.norm() <= opts.gradient_tol * g0 {
            return Ok(done(LmStatus::Converged, u, xi, j, it, jacobians));
        }
    }
    Ok(done(LmStatus::IterationCap, u, xi, j, opts.max_iterations, jacobians))
}

/// MAP estimate: minimizer of `Φ(u) + ½|u - ū|²_C`.
pub fn map_estimate(prior: &dyn LatentPrior, lik: &Likelihood, opts: &LmOptions, exec: Execution) -> Result<MapResult> {
    let r = minimize(
        prior,
        lik.model().as_ref(),
        prior.mean_values(),
        lik.data(),
        lik.noise_variances(),
        opts,
        exec,
    )?;
    log::info!(
        "MAP: {:?} after {} iterations, objective {:.6e} -> {:.6e}",
        r.status,
        r.iterations,
        r.initial_objective,
        r.objective
    );
    Ok(r)
}
