//! Gaussian priors on log-permeability.
//!
//! [`GaussianPrior`] is the spectral prior `N(ū, κ A^{-α})` on a grid. The
//! data-assimilation code only needs a Gaussian written as
//! `u = mean + E c` with independent latent coordinates `c_k ~ N(0, λ_k)`,
//! which is what [`LatentPrior`] captures. [`MatrixPrior`] provides the same
//! view for an arbitrary dense covariance and backs the linear-Gaussian tests.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::linalg::standard_normals;
use crate::spectral::SpectralBasis;

/// A Gaussian `N(mean, E Λ Eᵀ)` with diagonal latent covariance `Λ`.
pub trait LatentPrior: Sync + Send {
    fn n_params(&self) -> usize;
    fn n_latent(&self) -> usize;
    fn mean_values(&self) -> &[f64];
    /// Latent variances `λ_k`.
    fn latent_variances(&self) -> &[f64];
    /// `E c`.
    fn synthesize(&self, coeffs: &[f64]) -> Vec<f64>;
    /// `Eᵀ g`.
    fn synthesize_transpose(&self, g: &[f64]) -> Vec<f64>;

    /// `mean + E c`.
    fn from_latent(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut u = self.synthesize(coeffs);
        for (a, m) in u.iter_mut().zip(self.mean_values()) {
            *a += m;
        }
        u
    }

    /// Draw of `N(0, C)`.
    fn draw_deviation(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let xi = standard_normals(rng, self.n_latent());
        let c: Vec<f64> = xi
            .iter()
            .zip(self.latent_variances())
            .map(|(x, l)| x * l.sqrt())
            .collect();
        self.synthesize(&c)
    }

    /// Draw of `N(mean, C)`.
    fn draw(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut d = self.draw_deviation(rng);
        for (a, m) in d.iter_mut().zip(self.mean_values()) {
            *a += m;
        }
        d
    }
}

/// `N(ū, κ A^{-α})` with `A` the Neumann Laplacian on zero-average fields.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: Field,
    kappa: f64,
    alpha: f64,
    basis: Arc<SpectralBasis>,
    variances: Vec<f64>,
}

impl GaussianPrior {
    pub fn new(mean: Field, kappa: f64, alpha: f64, basis: Arc<SpectralBasis>) -> Result<Self> {
        basis.grid().ensure_same(&mean.grid)?;
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
        }
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must exceed 1, got {alpha}")));
        }
        let variances = basis.eigenvalues().iter().map(|l| kappa * l.powf(-alpha)).collect();
        Ok(Self {
            mean,
            kappa,
            alpha,
            basis,
            variances,
        })
    }

    /// Prior whose `κ` is expressed on the domain rescaled to unit side.
    ///
    /// Equivalent to [`new`](Self::new) with `κ L^{2-2α}`, which makes the
    /// pointwise variance independent of the physical side length.
    pub fn nondimensional(mean: Field, kappa: f64, alpha: f64, basis: Arc<SpectralBasis>) -> Result<Self> {
        let l = basis.grid().length;
        Self::new(mean, kappa * l.powf(2.0 - 2.0 * alpha), alpha, basis)
    }

    pub fn mean(&self) -> &Field {
        &self.mean
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    /// Covariance eigenvalues `λ_k = κ λ_A(k)^{-α}`, decreasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.variances
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Field {
        let mut rng = rng;
        let values = LatentPrior::draw(self, &mut rng);
        Field {
            grid: self.mean.grid,
            values,
        }
    }

    /// Squared Cameron-Martin norm `Σ_k c_k² / λ_k` of a zero-mean field.
    pub fn c_norm_sq(&self, f: &Field) -> Result<f64> {
        self.mean.grid.ensure_same(&f.grid)?;
        let mean = f.mean();
        let rms = (f.values.iter().map(|v| v * v).sum::<f64>() / f.len() as f64).sqrt();
        if mean.abs() > 1e-9 * rms.max(f64::MIN_POSITIVE) {
            return Err(Error::NonZeroMean { mean });
        }
        let c = self.basis.analyze(&f.values);
        Ok(c.iter().zip(&self.variances).map(|(c, l)| c * c / l).sum())
    }

    /// Share of the (grid-truncated) trace carried by the `j` leading modes.
    pub fn energy_fraction(&self, j: usize) -> Result<f64> {
        if j == 0 || j > self.variances.len() {
            return Err(Error::OutOfRange {
                value: j as f64,
                lo: 1.0,
                hi: self.variances.len() as f64,
            });
        }
        let total: f64 = self.variances.iter().sum();
        Ok(self.variances[..j].iter().sum::<f64>() / total)
    }

    /// Pointwise variance `Σ_k λ_k e_k(x)²`.
    pub fn pointwise_variance(&self) -> Vec<f64> {
        let n = self.mean.len();
        let mut var = vec![0.0; n];
        for (k, l) in self.variances.iter().enumerate() {
            let e = self.basis.basis_function(k);
            for (v, x) in var.iter_mut().zip(&e) {
                *v += l * x * x;
            }
        }
        var
    }
}

impl LatentPrior for GaussianPrior {
    fn n_params(&self) -> usize {
        self.mean.len()
    }

    fn n_latent(&self) -> usize {
        self.variances.len()
    }

    fn mean_values(&self) -> &[f64] {
        &self.mean.values
    }

    fn latent_variances(&self) -> &[f64] {
        &self.variances
    }

    fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        self.basis.synthesize(coeffs)
    }

    fn synthesize_transpose(&self, g: &[f64]) -> Vec<f64> {
        self.basis.synthesize_transpose(g)
    }
}

/// Gaussian with an explicit dense covariance.
#[derive(Debug, Clone)]
pub struct MatrixPrior {
    mean: Vec<f64>,
    covariance: DMatrix<f64>,
    vectors: DMatrix<f64>,
    variances: Vec<f64>,
}

impl MatrixPrior {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: covariance.nrows(),
            });
        }
        let eig = SymmetricEigen::new(covariance.clone());
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Singular("prior covariance is not positive definite".into()));
        }
        Ok(Self {
            mean,
            covariance,
            vectors: eig.eigenvectors,
            variances: eig.eigenvalues.iter().copied().collect(),
        })
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

impl LatentPrior for MatrixPrior {
    fn n_params(&self) -> usize {
        self.mean.len()
    }

    fn n_latent(&self) -> usize {
        self.variances.len()
    }

    fn mean_values(&self) -> &[f64] {
        &self.mean
    }

    fn latent_variances(&self) -> &[f64] {
        &self.variances
    }

    fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        (&self.vectors * nalgebra::DVector::from_column_slice(coeffs))
            .iter()
            .copied()
            .collect()
    }

    fn synthesize_transpose(&self, g: &[f64]) -> Vec<f64> {
        (self.vectors.transpose() * nalgebra::DVector::from_column_slice(g))
            .iter()
            .copied()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prior(kappa: f64, alpha: f64) -> GaussianPrior {
        let g = Grid2D::new(10, 10, 1.0).unwrap();
        let basis = Arc::new(SpectralBasis::new(g));
        GaussianPrior::new(Field::constant(g, -2.0), kappa, alpha, basis).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = Grid2D::new(4, 4, 1.0).unwrap();
        let b = Arc::new(SpectralBasis::new(g));
        let m = Field::constant(g, 0.0);
        assert!(GaussianPrior::new(m.clone(), 0.0, 1.3, b.clone()).is_err());
        assert!(GaussianPrior::new(m.clone(), 1.0, 1.0, b.clone()).is_err());
        assert!(GaussianPrior::new(Field::constant(Grid2D::new(4, 4, 2.0).unwrap(), 0.0), 1.0, 1.3, b).is_err());
    }

    #[test]
    fn eigenvalues_decrease() {
        let p = prior(2.0, 1.3);
        for w in p.eigenvalues().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn tiny_kappa_returns_mean() {
        let p = prior(1e-300, 1.3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = p.sample(&mut rng);
        for (a, b) in s.values.iter().zip(&p.mean().values) {
            assert!((a - b).abs() < 1e-100);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = prior(2.0, 1.3);
        let a = p.sample(&mut ChaCha8Rng::seed_from_u64(9));
        let b = p.sample(&mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn c_norm_of_whitened_modes_is_one() {
        let p = prior(2.0, 1.3);
        for k in [0, 1, 5, 40, 98] {
            let e = p.basis().basis_function(k);
            let f = Field::new(
                p.mean().grid,
                e.iter().map(|x| x * p.eigenvalues()[k].sqrt()).collect(),
            )
            .unwrap();
            assert!((p.c_norm_sq(&f).unwrap() - 1.0).abs() < 1e-10);
        }
        let zero = Field::constant(p.mean().grid, 0.0);
        assert_eq!(p.c_norm_sq(&zero).unwrap(), 0.0);
    }

    #[test]
    fn c_norm_matches_explicit_sum() {
        let p = prior(2.0, 1.3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = p.sample(&mut rng);
        let d = Field::new(f.grid, f.values.iter().zip(&p.mean().values).map(|(a, b)| a - b).collect()).unwrap();
        // oracle: explicit projection onto each sampled basis function
        let area = f.grid.cell_area();
        let mut want = 0.0;
        for k in 0..p.basis().n_modes() {
            let e = p.basis().basis_function(k);
            let c: f64 = e.iter().zip(&d.values).map(|(a, b)| a * b).sum::<f64>() * area;
            want += c * c / p.eigenvalues()[k];
        }
        let got = p.c_norm_sq(&d).unwrap();
        assert!((got - want).abs() / want < 1e-10);
    }

    #[test]
    fn c_norm_rejects_nonzero_mean() {
        let p = prior(2.0, 1.3);
        let f = Field::constant(p.mean().grid, 0.5);
        assert!(matches!(p.c_norm_sq(&f), Err(Error::NonZeroMean { .. })));
    }

    #[test]
    fn energy_fraction_bounds() {
        let p = prior(2.0, 1.3);
        let n = p.basis().n_modes();
        assert!((p.energy_fraction(n).unwrap() - 1.0).abs() < 1e-15);
        let total: f64 = p.eigenvalues().iter().sum();
        assert!((p.energy_fraction(1).unwrap() - p.eigenvalues()[0] / total).abs() < 1e-12);
        assert!(p.energy_fraction(0).is_err());
        assert!(p.energy_fraction(n + 1).is_err());
        let mut last = 0.0;
        for j in 1..=n {
            let e = p.energy_fraction(j).unwrap();
            assert!(e >= last);
            last = e;
        }
    }

    #[test]
    fn nondimensional_variance_is_scale_free() {
        let mk = |l: f64| {
            let g = Grid2D::new(8, 8, l).unwrap();
            let b = Arc::new(SpectralBasis::new(g));
            GaussianPrior::nondimensional(Field::constant(g, 0.0), 2.0, 1.3, b).unwrap()
        };
        let a = mk(1.0).pointwise_variance();
        let b = mk(1000.0).pointwise_variance();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10 * x);
        }
    }

    #[test]
    fn matrix_prior_reproduces_covariance() {
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 0.7]);
        let p = MatrixPrior::new(vec![1.0, 2.0, 3.0], c.clone()).unwrap();
        // E Λ Eᵀ rebuilt column by column
        let mut rebuilt = DMatrix::zeros(3, 3);
        for k in 0..3 {
            let mut e = vec![0.0; 3];
            e[k] = 1.0;
            let col = p.synthesize(&e);
            for i in 0..3 {
                for j in 0..3 {
                    rebuilt[(i, j)] += p.latent_variances()[k] * col[i] * col[j];
                }
            }
        }
        assert!((rebuilt - c).norm() < 1e-12);
    }
}
