//! Cosine eigenbasis of the Neumann Laplacian on zero-mean fields.
//!
//! The basis functions are `e_ij(x, y) = a_i a_j cos(iπx/L) cos(jπy/L)` with
//! `a_0 = 1/√L` and `a_i = √(2/L)` otherwise, sampled at cell centers. Sampled
//! this way they are exactly orthonormal under the area-weighted inner
//! product, so the transform pair below is an isometry on zero-mean fields.
//! Mode `(0, 0)` is left out.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2D};

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    grid: Grid2D,
    modes: Vec<(usize, usize)>,
    eigenvalues: Vec<f64>,
    /// `slot[j * nx + i]` = position of mode `(i, j)` in `modes` (unused for (0,0)).
    slot: Vec<usize>,
    /// `cos_x[i * nx + ix] = a_i cos(iπ x_ix / L)`
    cos_x: Vec<f64>,
    cos_y: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(grid: Grid2D) -> Self {
        let (nx, ny, l) = (grid.nx, grid.ny, grid.length);
        let scale = (PI / l).powi(2);
        let mut modes: Vec<(usize, usize)> = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .filter(|&m| m != (0, 0))
            .collect();
        let key = |&(i, j): &(usize, usize)| i * i + j * j;
        modes.sort_by(|a, b| key(a).cmp(&key(b)).then(a.cmp(b)));
        let eigenvalues = modes
            .iter()
            .map(|&(i, j)| scale * (i * i + j * j) as f64)
            .collect();
        let mut slot = vec![usize::MAX; nx * ny];
        for (k, &(i, j)) in modes.iter().enumerate() {
            slot[j * nx + i] = k;
        }
        let table = |n: usize, h: f64| -> Vec<f64> {
            let mut t = vec![0.0; n * n];
            for i in 0..n {
                let a = if i == 0 { (1.0 / l).sqrt() } else { (2.0 / l).sqrt() };
                for c in 0..n {
                    let x = (c as f64 + 0.5) * h;
                    t[i * n + c] = a * (i as f64 * PI * x / l).cos();
                }
            }
            t
        };
        Self {
            grid,
            modes,
            eigenvalues,
            slot,
            cos_x: table(nx, grid.dx()),
            cos_y: table(ny, grid.dy()),
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Wavenumber pairs sorted by ascending Laplacian eigenvalue, ties lexicographic.
    pub fn modes(&self) -> &[(usize, usize)] {
        &self.modes
    }

    /// Eigenvalues `(π/L)²(i² + j²)` of the negative Laplacian, aligned with [`modes`](Self::modes).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mode_index(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.grid.nx || j >= self.grid.ny || (i, j) == (0, 0) {
            None
        } else {
            Some(self.slot[j * self.grid.nx + i])
        }
    }

    /// Orthonormal basis function `k` sampled at cell centers.
    pub fn basis_function(&self, k: usize) -> Vec<f64> {
        let (i, j) = self.modes[k];
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut v = vec![0.0; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                v[iy * nx + ix] = self.cos_x[i * nx + ix] * self.cos_y[j * ny + iy];
            }
        }
        v
    }

    /// Spectral coefficients of `f` (its mean is discarded).
    pub fn to_spectral(&self, f: &Field) -> Result<Vec<f64>> {
        self.grid.ensure_same(&f.grid)?;
        Ok(self.analyze(&f.values))
    }

    /// Field with the given coefficients; its spatial average is zero.
    pub fn from_spectral(&self, coeffs: &[f64]) -> Result<Field> {
        if coeffs.len() != self.n_modes() {
            return Err(Error::LengthMismatch {
                expected: self.n_modes(),
                found: coeffs.len(),
            });
        }
        Ok(Field {
            grid: self.grid,
            values: self.synthesize(coeffs),
        })
    }

    /// Coefficients `⟨f, e_k⟩` of raw cell values.
    pub fn analyze(&self, values: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        assert_eq!(values.len(), nx * ny);
        // tmp[iy * nx + i] = Σ_ix cos_x[i, ix] f[iy, ix]
        let mut tmp = vec![0.0; nx * ny];
        for iy in 0..ny {
            let row = &values[iy * nx..(iy + 1) * nx];
            for i in 0..nx {
                let c = &self.cos_x[i * nx..(i + 1) * nx];
                tmp[iy * nx + i] = c.iter().zip(row).map(|(a, b)| a * b).sum();
            }
        }
        let area = self.grid.cell_area();
        let mut out = vec![0.0; self.n_modes()];
        for j in 0..ny {
            let c = &self.cos_y[j * ny..(j + 1) * ny];
            for i in 0..nx {
                if i == 0 && j == 0 {
                    continue;
                }
                let s: f64 = (0..ny).map(|iy| c[iy] * tmp[iy * nx + i]).sum();
                out[self.slot[j * nx + i]] = s * area;
            }
        }
        out
    }

    /// Cell values of `Σ_k c_k e_k`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        assert_eq!(coeffs.len(), self.n_modes());
        // tmp[iy * nx + i] = Σ_j cos_y[j, iy] c[i, j]
        let mut tmp = vec![0.0; nx * ny];
        for j in 0..ny {
            let c = &self.cos_y[j * ny..(j + 1) * ny];
            for i in 0..nx {
                if i == 0 && j == 0 {
                    continue;
                }
                let a = coeffs[self.slot[j * nx + i]];
                if a == 0.0 {
                    continue;
                }
                for iy in 0..ny {
                    tmp[iy * nx + i] += c[iy] * a;
                }
            }
        }
        let mut out = vec![0.0; nx * ny];
        for iy in 0..ny {
            let t = &tmp[iy * nx..(iy + 1) * nx];
            let row = &mut out[iy * nx..(iy + 1) * nx];
            for (i, &ti) in t.iter().enumerate() {
                if ti == 0.0 {
                    continue;
                }
                let c = &self.cos_x[i * nx..(i + 1) * nx];
                for (o, ci) in row.iter_mut().zip(c) {
                    *o += ci * ti;
                }
            }
        }
        out
    }

    /// Transpose of [`synthesize`](Self::synthesize): `Eᵀ g` without area weights.
    pub fn synthesize_transpose(&self, g: &[f64]) -> Vec<f64> {
        let area = self.grid.cell_area();
        self.analyze(g).into_iter().map(|c| c / area).collect()
    }
}
