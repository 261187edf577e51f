use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::spd_solve;

/// Posterior of `u ~ N(mean, C)` given `y = B u + η`, `η ~ N(0, Γ)`.
pub fn linear_gaussian_posterior(
    b: &DMatrix<f64>,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if b.ncols() != mean.len() || cov.nrows() != mean.len() || b.nrows() != y.len() || gamma.nrows() != y.len() {
        return Err(Error::InvalidParameter("inconsistent dimensions".into()));
    }
    let cbt = cov * b.transpose();
    let s = b * &cbt + gamma;
    let k = spd_solve(&s, &cbt.transpose())?.transpose();
    let m = mean + &k * (y - b * mean);
    let c = cov - &k * cbt.transpose();
    Ok((m, (&c + c.transpose()) * 0.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_case() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let (m, c) = linear_gaussian_posterior(
            &one,
            &DVector::from_element(1, 0.0),
            &one,
            &DVector::from_element(1, 2.0),
            &one,
        )
        .unwrap();
        assert!((m[0] - 1.0).abs() < 1e-15);
        assert!((c[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_operator_returns_prior() {
        let b = DMatrix::zeros(2, 3);
        let mean = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 1.5]);
        let (m, c) =
            linear_gaussian_posterior(&b, &mean, &cov, &DVector::from_element(2, 5.0), &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(m, mean);
        assert!((c - cov).abs().max() < 1e-15);
    }

    #[test]
    fn information_form_agrees() {
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -1.0, 0.0, 2.0, 1.0]);
        let mean = DVector::from_vec(vec![0.5, -0.5, 1.0]);
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 1.5]);
        let gamma = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.4]));
        let y = DVector::from_vec(vec![1.0, -2.0]);
        let (m, c) = linear_gaussian_posterior(&b, &mean, &cov, &y, &gamma).unwrap();
        let gi = gamma.clone().try_inverse().unwrap();
        let ci = cov.clone().try_inverse().unwrap();
        let prec = &ci + b.transpose() * &gi * &b;
        let c2 = prec.clone().try_inverse().unwrap();
        let m2 = &c2 * (&ci * &mean + b.transpose() * &gi * &y);
        assert!((m - m2).abs().max() < 1e-12);
        assert!((c - c2).abs().max() < 1e-12);
    }
}
