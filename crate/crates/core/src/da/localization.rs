use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::Grid2D;

/// Fifth-order compactly supported Gaspari-Cohn taper with support `[0, 2c]`.
pub fn gaspari_cohn(r: f64, c: f64) -> f64 {
    let z = r.abs() / c;
    if z >= 2.0 {
        0.0
    } else if z <= 1.0 {
        -0.25 * z.powi(5) + 0.5 * z.powi(4) + 0.625 * z.powi(3) - 5.0 / 3.0 * z * z + 1.0
    } else {
        z.powi(5) / 12.0 - 0.5 * z.powi(4) + 0.625 * z.powi(3) + 5.0 / 3.0 * z * z - 5.0 * z + 4.0 - 2.0 / (3.0 * z)
    }
    .clamp(0.0, 1.0)
}

/// Taper matrices between cells and measurement locations.
#[derive(Debug, Clone)]
pub struct LocalizationSpec {
    pub length: f64,
    pub locations: Vec<(f64, f64)>,
    /// `n_cells × n_wells`.
    pub rho_uw: DMatrix<f64>,
    /// `n_wells × n_wells`.
    pub rho_ww: DMatrix<f64>,
}

pub fn build_localization(grid: &Grid2D, locations: &[(f64, f64)], c: f64) -> Result<LocalizationSpec> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("localization length must be positive, got {c}")));
    }
    for &(x, y) in locations {
        grid.locate(x, y)?;
    }
    let m = locations.len();
    let n = grid.n_cells();
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let mut rho_uw = DMatrix::zeros(n, m);
    for k in 0..n {
        let xc = grid.cell_center(k);
        for (l, &loc) in locations.iter().enumerate() {
            rho_uw[(k, l)] = gaspari_cohn(dist(xc, loc), c);
        }
    }
    let rho_ww = DMatrix::from_fn(m, m, |a, b| gaspari_cohn(dist(locations[a], locations[b]), c));
    Ok(LocalizationSpec {
        length: c,
        locations: locations.to_vec(),
        rho_uw,
        rho_ww,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taper_values() {
        assert_eq!(gaspari_cohn(0.0, 3.0), 1.0);
        assert_eq!(gaspari_cohn(6.0, 3.0), 0.0);
        assert_eq!(gaspari_cohn(100.0, 3.0), 0.0);
        assert!((gaspari_cohn(3.0, 3.0) - 5.0 / 24.0).abs() < 1e-14);
        // continuity at the breakpoints
        for &z in &[1.0, 2.0] {
            let a = gaspari_cohn(z - 1e-9, 1.0);
            let b = gaspari_cohn(z + 1e-9, 1.0);
            assert!((a - b).abs() < 1e-7);
        }
        let mut prev = 1.0;
        for i in 0..=200 {
            let v = gaspari_cohn(i as f64 / 100.0, 1.0);
            assert!(v <= prev + 1e-15 && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn separated_wells_do_not_interact() {
        let g = Grid2D::new(10, 10, 100.0).unwrap();
        let loc = build_localization(&g, &[(10.0, 10.0), (70.0, 10.0)], 20.0).unwrap();
        assert_eq!(loc.rho_ww[(0, 1)], 0.0);
        assert_eq!(loc.rho_ww[(0, 0)], 1.0);
        let wide = build_localization(&g, &[(10.0, 10.0), (70.0, 10.0)], 1e9).unwrap();
        assert!(wide.rho_uw.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        assert!(build_localization(&g, &[(200.0, 10.0)], 20.0).is_err());
    }
}
