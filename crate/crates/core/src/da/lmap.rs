//! Gaussian linearized about the MAP point, `N(u_MAP, C_MAP)` with
//! `C_MAP = C - C Qᵀ (Q C Qᵀ + Γ)⁻¹ Q C`.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::standard_normals;
use crate::model::{jacobian_fd_with, ForwardModel};
use crate::par::Execution;
use crate::prior::LatentPrior;

/// Square-root factor of `C_MAP`.
///
/// With `S = E Λ^{1/2}` and `Γ^{-1/2} Q S = U Σ Vᵀ`, the factor is
/// `S (I + V diag(d) Vᵀ)`, `d_a = (1 + σ_a²)^{-1/2} - 1`.
#[derive(Debug, Clone)]
pub struct CmapFactor {
    pub u_map: Vec<f64>,
    v: DMatrix<f64>,
    d: Vec<f64>,
}

/// Builds the `C_MAP` factor from a Jacobian `q` (`N × n_params`) at `u_map`.
pub fn cmap_from_jacobian(prior: &dyn LatentPrior, u_map: Vec<f64>, q: &DMatrix<f64>, noise_var: &[f64]) -> Result<CmapFactor> {
    let n_lat = prior.n_latent();
    if q.ncols() != prior.n_params() || q.nrows() != noise_var.len() {
        return Err(Error::InvalidParameter("Jacobian shape does not match prior and noise".into()));
    }
    let sl: Vec<f64> = prior.latent_variances().iter().map(|l| l.sqrt()).collect();
    let mut a = DMatrix::zeros(q.nrows(), n_lat);
    for i in 0..q.nrows() {
        let row: Vec<f64> = q.row(i).iter().copied().collect();
        let t = prior.synthesize_transpose(&row);
        let s = noise_var[i].sqrt();
        for k in 0..n_lat {
            a[(i, k)] = t[k] * sl[k] / s;
        }
    }
    // Vᵀ from the SVD of Aᵀ A's range: use the SVD of A directly.
    let svd = a.svd(false, true);
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Singular("SVD of the whitened Jacobian failed".into()))?;
    let d = svd.singular_values.iter().map(|s| 1.0 / (1.0 + s * s).sqrt() - 1.0).collect();
    Ok(CmapFactor {
        u_map,
        v: vt.transpose(),
        d,
    })
}

/// `C_MAP` factor at `u_map`, with a central-difference Jacobian.
pub fn cmap(
    prior: &dyn LatentPrior,
    model: &dyn ForwardModel,
    u_map: &[f64],
    noise_var: &[f64],
    fd_step: f64,
    exec: Execution,
) -> Result<CmapFactor> {
    let q = jacobian_fd_with(model, u_map, fd_step, exec)?;
    cmap_from_jacobian(prior, u_map.to_vec(), &q, noise_var)
}

impl CmapFactor {
    fn apply(&self, prior: &dyn LatentPrior, z: &[f64]) -> Vec<f64> {
        let zv = DVector::from_column_slice(z);
        let proj = self.v.transpose() * &zv;
        let scaled = DVector::from_iterator(proj.len(), proj.iter().zip(&self.d).map(|(p, d)| p * d));
        let w = zv + &self.v * scaled;
        let c: Vec<f64> = w
            .iter()
            .zip(prior.latent_variances())
            .map(|(x, l)| x * l.sqrt())
            .collect();
        prior.synthesize(&c)
    }

    /// `u_MAP + L z` for a latent standard-normal vector `z`.
    pub fn sample_with(&self, prior: &dyn LatentPrior, z: &[f64]) -> Vec<f64> {
        let mut u = self.apply(prior, z);
        for (a, m) in u.iter_mut().zip(&self.u_map) {
            *a += m;
        }
        u
    }

    pub fn sample(&self, prior: &dyn LatentPrior, rng: &mut dyn RngCore) -> Vec<f64> {
        let z = standard_normals(rng, prior.n_latent());
        self.sample_with(prior, &z)
    }

    /// Diagonal of `C_MAP`.
    pub fn pointwise_variance(&self, prior: &dyn LatentPrior) -> Vec<f64> {
        let n_lat = prior.n_latent();
        let n = prior.n_params();
        let lam = prior.latent_variances();
        let mut var = vec![0.0; n];
        let mut e = vec![0.0; n_lat];
        for k in 0..n_lat {
            e[k] = lam[k].sqrt();
            let col = prior.synthesize(&e);
            e[k] = 0.0;
            for (v, c) in var.iter_mut().zip(&col) {
                *v += c * c;
            }
        }
        for (a, &d) in self.d.iter().enumerate() {
            let coeffs: Vec<f64> = (0..n_lat).map(|k| self.v[(k, a)] * lam[k].sqrt()).collect();
            let col = prior.synthesize(&coeffs);
            let f = 2.0 * d + d * d;
            for (v, c) in var.iter_mut().zip(&col) {
                *v += f * c * c;
            }
        }
        var.into_iter().map(|v| v.max(0.0)).collect()
    }

    /// Dense `C_MAP`; intended for small problems.
    pub fn covariance(&self, prior: &dyn LatentPrior) -> DMatrix<f64> {
        let n_lat = prior.n_latent();
        let n = prior.n_params();
        let mut l = DMatrix::zeros(n, n_lat);
        let mut z = vec![0.0; n_lat];
        for k in 0..n_lat {
            z[k] = 1.0;
            let col = self.apply(prior, &z);
            z[k] = 0.0;
            l.set_column(k, &DVector::from_vec(col));
        }
        &l * l.transpose()
    }
}
