//! Ensemble Kalman filter (perturbed observations) and ensemble square-root
//! filter on the augmented state `z = (u, v, w)`.
//!
//! Covariances are centered with the `1/(N_e - 1)` normalization. With
//! localization only the `u` rows of the gain are tapered.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spd_solve, standard_normals, sym_apply, sym_sqrt};
use crate::model::SequentialModel;
use crate::par::{self, Execution};
use crate::prior::LatentPrior;

use super::domains;
use super::localization::LocalizationSpec;

/// Members are stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

impl Ensemble {
    pub fn size(&self) -> usize {
        self.u.ncols()
    }

    pub fn member_u(&self, j: usize) -> Vec<f64> {
        self.u.column(j).iter().copied().collect()
    }

    pub fn members_u(&self) -> Vec<Vec<f64>> {
        (0..self.size()).map(|j| self.member_u(j)).collect()
    }

    fn validate(&self) -> Result<()> {
        let n = self.size();
        if n < 2 {
            return Err(Error::InvalidParameter(format!("ensemble needs at least two members, got {n}")));
        }
        if self.v.ncols() != n || self.w.ncols() != n {
            return Err(Error::InvalidParameter("ensemble blocks have different member counts".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMoments {
    pub mean_u: DVector<f64>,
    pub mean_v: DVector<f64>,
    pub mean_w: DVector<f64>,
    pub c_uw: DMatrix<f64>,
    pub c_vw: DMatrix<f64>,
    pub c_ww: DMatrix<f64>,
}

fn row_mean(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.ncols() as f64;
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum() / n))
}

fn deviations(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut d = m.clone();
    for mut c in d.column_iter_mut() {
        c -= mean;
    }
    d
}

/// Sample mean and the `w`-facing covariance blocks.
pub fn sample_moments(ens: &Ensemble) -> Result<EnsembleMoments> {
    ens.validate()?;
    let k = 1.0 / (ens.size() as f64 - 1.0);
    let (mu, mv, mw) = (row_mean(&ens.u), row_mean(&ens.v), row_mean(&ens.w));
    let du = deviations(&ens.u, &mu);
    let dv = deviations(&ens.v, &mv);
    let dw = deviations(&ens.w, &mw);
    let dwt = dw.transpose();
    Ok(EnsembleMoments {
        c_uw: &du * &dwt * k,
        c_vw: &dv * &dwt * k,
        c_ww: &dw * &dwt * k,
        mean_u: mu,
        mean_v: mv,
        mean_w: mw,
    })
}

/// Advances every member over window `window` and evaluates its measurements.
pub fn predict(model: &dyn SequentialModel, window: usize, ens: &Ensemble, exec: Execution) -> Result<Ensemble> {
    let n = ens.size();
    let results = exec.map_indexed(n, |j| -> Result<(Vec<f64>, Vec<f64>)> {
        let u: Vec<f64> = ens.u.column(j).iter().copied().collect();
        let v: Vec<f64> = ens.v.column(j).iter().copied().collect();
        let v1 = model.advance(window, &v, &u)?;
        let w1 = model.measure(window, &v1, &u)?;
        Ok((v1, w1))
    });
    let mut vs = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for (j, r) in results.into_iter().enumerate() {
        let (v, w) = r.map_err(|e| {
            log::warn!("ensemble member {j} failed in window {window}: {e}");
            e
        })?;
        vs.push(DVector::from_vec(v));
        ws.push(DVector::from_vec(w));
    }
    Ok(Ensemble {
        u: ens.u.clone(),
        v: DMatrix::from_columns(&vs),
        w: DMatrix::from_columns(&ws),
    })
}

fn check_obs(ens: &Ensemble, y: &[f64], noise_var: &[f64]) -> Result<DMatrix<f64>> {
    let m = ens.w.nrows();
    if y.len() != m || noise_var.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            found: y.len().min(noise_var.len()),
        });
    }
    if noise_var.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter("noise variances must be positive".into()));
    }
    Ok(DMatrix::from_diagonal(&DVector::from_row_slice(noise_var)))
}

/// `(C^{uw}, C^{ww} + Γ)` for the `u` rows, tapered when `loc` is given.
fn u_blocks(mo: &EnsembleMoments, gamma: &DMatrix<f64>, loc: Option<&LocalizationSpec>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    match loc {
        None => Ok((mo.c_uw.clone(), &mo.c_ww + gamma)),
        Some(l) => {
            if l.rho_uw.shape() != mo.c_uw.shape() || l.rho_ww.shape() != mo.c_ww.shape() {
                return Err(Error::InvalidParameter("localization shape does not match the ensemble".into()));
            }
            Ok((l.rho_uw.component_mul(&mo.c_uw), l.rho_ww.component_mul(&mo.c_ww) + gamma))
        }
    }
}

/// EnKF analysis with perturbed observations `y + η_j`, `η_j ~ N(0, Γ)`.
pub fn enkf_analyze(
    ens: &Ensemble,
    y: &[f64],
    noise_var: &[f64],
    rng: &mut dyn RngCore,
    loc: Option<&LocalizationSpec>,
) -> Result<Ensemble> {
    let gamma = check_obs(ens, y, noise_var)?;
    let mo = sample_moments(ens)?;
    let (m, n) = (ens.w.nrows(), ens.size());
    let mut d = DMatrix::zeros(m, n);
    for j in 0..n {
        for i in 0..m {
            let eta: f64 = rng.sample(StandardNormal);
            d[(i, j)] = y[i] + noise_var[i].sqrt() * eta - ens.w[(i, j)];
        }
    }
    let s = &mo.c_ww + &gamma;
    let sd = spd_solve(&s, &d)?;
    let (cuw, s_u) = u_blocks(&mo, &gamma, loc)?;
    let sd_u = if loc.is_some() { spd_solve(&s_u, &d)? } else { sd.clone() };
    Ok(Ensemble {
        u: &ens.u + cuw * sd_u,
        v: &ens.v + &mo.c_vw * &sd,
        w: &ens.w + &mo.c_ww * &sd,
    })
}

/// `C S^{-1/2} (S^{1/2} + Γ^{1/2})^{-1}`.
fn sqrt_gain(c: &DMatrix<f64>, s: &DMatrix<f64>, gamma_half: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s_half = sym_sqrt(s)?;
    let s_inv_half = sym_apply(s, |x| 1.0 / x.sqrt());
    let right = (s_half + gamma_half)
        .try_inverse()
        .ok_or_else(|| Error::Singular("S^{1/2} + Γ^{1/2} is singular".into()))?;
    Ok(c * s_inv_half * right)
}

/// EnSRF analysis: Kalman mean update and deterministic deviation update
/// `ΔZ^a = (I - K̃ H) ΔZ^f Θ`, with `Θ` a mean-preserving random rotation.
pub fn ensrf_analyze(
    ens: &Ensemble,
    y: &[f64],
    noise_var: &[f64],
    rng: &mut dyn RngCore,
    loc: Option<&LocalizationSpec>,
) -> Result<Ensemble> {
    let gamma = check_obs(ens, y, noise_var)?;
    let mo = sample_moments(ens)?;
    let n = ens.size();
    let innov = DVector::from_row_slice(y) - &mo.mean_w;
    let innov = DMatrix::from_column_slice(innov.len(), 1, innov.as_slice());
    let s = &mo.c_ww + &gamma;
    let (cuw, s_u) = u_blocks(&mo, &gamma, loc)?;
    let gamma_half = gamma.map(f64::sqrt);

    let mean_u = &mo.mean_u + (&cuw * spd_solve(&s_u, &innov)?).column(0);
    let s_innov = spd_solve(&s, &innov)?;
    let mean_v = &mo.mean_v + (&mo.c_vw * &s_innov).column(0);
    let mean_w = &mo.mean_w + (&mo.c_ww * &s_innov).column(0);

    let du = deviations(&ens.u, &mo.mean_u);
    let dv = deviations(&ens.v, &mo.mean_v);
    let dw = deviations(&ens.w, &mo.mean_w);
    let ku = sqrt_gain(&cuw, &s_u, &gamma_half)?;
    let kv = sqrt_gain(&mo.c_vw, &s, &gamma_half)?;
    let kw = sqrt_gain(&mo.c_ww, &s, &gamma_half)?;
    let (ru, rv) = (du.nrows(), dv.nrows());
    let mut dz = DMatrix::zeros(ru + rv + dw.nrows(), n);
    dz.rows_mut(0, ru).copy_from(&(&du - ku * &dw));
    dz.rows_mut(ru, rv).copy_from(&(&dv - kv * &dw));
    dz.rows_mut(ru + rv, dw.nrows()).copy_from(&(&dw - kw * &dw));
    rotate_members(&mut dz, rng);
    let du_a = dz.rows(0, ru).into_owned();
    let dv_a = dz.rows(ru, rv).into_owned();
    let dw_a = dz.rows(ru + rv, dw.nrows()).into_owned();

    let add = |mut d: DMatrix<f64>, mean: &DVector<f64>| {
        for mut c in d.column_iter_mut() {
            c += mean;
        }
        d
    };
    Ok(Ensemble {
        u: add(du_a, &mean_u),
        v: add(dv_a, &mean_v),
        w: add(dw_a, &mean_w),
    })
}

/// Random orthogonal `Θ` with `Θ 1 = 1`, Haar-distributed on the complement of `1`.
pub fn mean_preserving_rotation(n: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
    let mut m = DMatrix::identity(n, n);
    rotate_members(&mut m, rng);
    m
}

/// `M ← M Θ` for the `Θ` of [`mean_preserving_rotation`], without forming `Θ`.
///
/// `Θ = W diag(1, Q) W` where `W` is the reflection swapping `e₁` and
/// `1/√n`, and `Q` is Haar on `n - 1` dimensions, built as a product of
/// Householder reflections of Gaussian vectors with sign correction (the
/// `Q` factor of a Gaussian matrix). Costs `O(rows · n²)`.
pub fn rotate_members(m: &mut DMatrix<f64>, rng: &mut dyn RngCore) {
    let n = m.ncols();
    assert!(n >= 2, "rotation needs at least two members");
    let mut w = vec![-1.0 / (n as f64).sqrt(); n];
    w[0] += 1.0;
    reflect_columns(m, 0, &w);
    let k = n - 1;
    let mut signs = Vec::with_capacity(k);
    for i in 0..k - 1 {
        let mut x = standard_normals(rng, k - i);
        let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let s = if x[0] < 0.0 { -1.0 } else { 1.0 };
        signs.push(-s);
        x[0] += s * norm;
        reflect_columns(m, 1 + i, &x);
    }
    let last: f64 = rng.sample(StandardNormal);
    signs.push(if last < 0.0 { -1.0 } else { 1.0 });
    for (i, &s) in signs.iter().enumerate() {
        if s < 0.0 {
            m.column_mut(1 + i).neg_mut();
        }
    }
    reflect_columns(m, 0, &w);
}

/// Applies `I - 2 v vᵀ / |v|²` from the right to columns `first..`.
fn reflect_columns(m: &mut DMatrix<f64>, first: usize, v: &[f64]) {
    let vv: f64 = v.iter().map(|a| a * a).sum();
    if vv == 0.0 {
        return;
    }
    let mut t = DVector::zeros(m.nrows());
    for (j, &vj) in v.iter().enumerate() {
        if vj != 0.0 {
            t.axpy(vj, &m.column(first + j), 1.0);
        }
    }
    let f = 2.0 / vv;
    for (j, &vj) in v.iter().enumerate() {
        if vj != 0.0 {
            m.column_mut(first + j).axpy(-f * vj, &t, 1.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Enkf,
    Ensrf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub kind: FilterKind,
    pub ensemble_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub ensemble: Ensemble,
}

impl FilterOutput {
    pub fn samples(&self) -> Vec<Vec<f64>> {
        self.ensemble.members_u()
    }
}

/// Sequential assimilation of `data` (stacked per window) starting from a
/// prior ensemble.
pub fn run_filter(
    model: &dyn SequentialModel,
    prior: &dyn LatentPrior,
    data: &[f64],
    noise_var: &[f64],
    cfg: &FilterConfig,
    loc: Option<&LocalizationSpec>,
    exec: Execution,
) -> Result<FilterOutput> {
    let m = model.n_measure();
    let n_win = model.n_windows();
    if data.len() != m * n_win || noise_var.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: m * n_win,
            found: data.len(),
        });
    }
    let ne = cfg.ensemble_size;
    if ne < 2 {
        return Err(Error::InvalidParameter(format!("ensemble size must be at least 2, got {ne}")));
    }
    let us: Vec<DVector<f64>> = (0..ne)
        .map(|j| DVector::from_vec(prior.draw(&mut par::stream(cfg.seed, domains::ENS_INIT, j as u64))))
        .collect();
    let v0 = DVector::from_vec(model.initial_state());
    let mut ens = Ensemble {
        u: DMatrix::from_columns(&us),
        v: DMatrix::from_fn(v0.len(), ne, |i, _| v0[i]),
        w: DMatrix::zeros(m, ne),
    };
    for n in 0..n_win {
        ens = predict(model, n, &ens, exec)?;
        let y = &data[n * m..(n + 1) * m];
        let g = &noise_var[n * m..(n + 1) * m];
        ens = match cfg.kind {
            FilterKind::Enkf => {
                let mut rng = par::stream(cfg.seed, domains::ENS_PERTURB, n as u64);
                enkf_analyze(&ens, y, g, &mut rng, loc)?
            }
            FilterKind::Ensrf => {
                let mut rng = par::stream(cfg.seed, domains::ENS_ROTATE, n as u64);
                ensrf_analyze(&ens, y, g, &mut rng, loc)?
            }
        };
    }
    Ok(FilterOutput { ensemble: ens })
}
