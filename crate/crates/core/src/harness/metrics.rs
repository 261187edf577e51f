//! Relative errors of approximate moments against the reference posterior.

use crate::error::{Error, Result};
use crate::grid::{l2_norm, Grid2D};

/// `(ε_u, ε_σ)` with
/// `ε_u = ‖(û - ū) - (u_pos - ū)‖ / ‖u_pos - ū‖` and
/// `ε_σ = ‖σ̂ - σ_pos‖ / ‖σ_pos‖`, where `σ` is the pointwise variance and
/// norms are area-weighted L² over the grid.
pub fn relative_errors(
    grid: &Grid2D,
    mean: &[f64],
    variance: &[f64],
    gold_mean: &[f64],
    gold_variance: &[f64],
    prior_mean: &[f64],
) -> Result<(f64, f64)> {
    let n = grid.n_cells();
    for v in [mean, variance, gold_mean, gold_variance, prior_mean] {
        if v.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: v.len(),
            });
        }
    }
    let gold_dev: Vec<f64> = gold_mean.iter().zip(prior_mean).map(|(a, b)| a - b).collect();
    let den_u = l2_norm(grid, &gold_dev);
    let den_s = l2_norm(grid, gold_variance);
    if !(den_u > 0.0) || !(den_s > 0.0) {
        return Err(Error::Singular("reference posterior has zero mean deviation or zero variance".into()));
    }
    let du: Vec<f64> = mean
        .iter()
        .zip(prior_mean)
        .zip(&gold_dev)
        .map(|((m, p), g)| (m - p) - g)
        .collect();
    let ds: Vec<f64> = variance.iter().zip(gold_variance).map(|(a, b)| a - b).collect();
    Ok((l2_norm(grid, &du) / den_u, l2_norm(grid, &ds) / den_s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_moments_give_zero() {
        let g = Grid2D::new(2, 2, 2.0).unwrap();
        let m = [1.0, 2.0, 3.0, 4.0];
        let v = [0.5, 0.1, 0.2, 0.3];
        let (eu, es) = relative_errors(&g, &m, &v, &m, &v, &[0.0; 4]).unwrap();
        assert_eq!((eu, es), (0.0, 0.0));
    }

    #[test]
    fn prior_mean_gives_unit_mean_error() {
        let g = Grid2D::new(2, 2, 2.0).unwrap();
        let ubar = [1.0; 4];
        let (eu, _) = relative_errors(&g, &ubar, &[1.0; 4], &[2.0, 0.0, 1.5, 1.0], &[1.0; 4], &ubar).unwrap();
        assert!((eu - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_example() {
        // unit cells: u_pos - ū = (1, 2, 0, 2) has norm 3; û - ū = (1, 2, 0, 0)
        // leaves (0, 0, 0, -2) → ε_u = 2/3. σ_pos = (1, 1, 1, 1), σ̂ = (2, 1, 1, 1)
        // → ε_σ = 1/2.
        let g = Grid2D::new(2, 2, 2.0).unwrap();
        let (eu, es) = relative_errors(
            &g,
            &[1.0, 2.0, 0.0, 0.0],
            &[2.0, 1.0, 1.0, 1.0],
            &[1.0, 2.0, 0.0, 2.0],
            &[1.0; 4],
            &[0.0; 4],
        )
        .unwrap();
        assert!((eu - 2.0 / 3.0).abs() < 1e-15);
        assert!((es - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_denominator_is_an_error() {
        let g = Grid2D::new(2, 2, 2.0).unwrap();
        assert!(relative_errors(&g, &[0.0; 4], &[1.0; 4], &[0.0; 4], &[1.0; 4], &[0.0; 4]).is_err());
    }
}
