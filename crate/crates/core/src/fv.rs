//! Two-point flux finite-volume pieces shared by the flow models.

use crate::grid::Grid2D;
use crate::linalg::BandedSpd;

/// Interior face between cells `a` and `b`; `geom` is face length over center distance.
#[derive(Debug, Clone, Copy)]
pub struct Face {
    pub a: usize,
    pub b: usize,
    pub geom: f64,
}

pub fn faces(grid: &Grid2D) -> Vec<Face> {
    let (nx, ny) = (grid.nx, grid.ny);
    let gx = grid.dy() / grid.dx();
    let gy = grid.dx() / grid.dy();
    let mut out = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let k = grid.index(i, j);
            if i + 1 < nx {
                out.push(Face { a: k, b: k + 1, geom: gx });
            }
            if j + 1 < ny {
                out.push(Face { a: k, b: k + nx, geom: gy });
            }
        }
    }
    out
}

#[inline]
pub fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Face transmissibilities `harm(e^{u_a}, e^{u_b}) * geom * scale`.
pub fn transmissibilities(faces: &[Face], u: &[f64], scale: f64) -> Vec<f64> {
    faces
        .iter()
        .map(|f| harmonic(u[f.a].exp(), u[f.b].exp()) * f.geom * scale)
        .collect()
}

/// Cell-to-row permutation that keeps the matrix bandwidth at `min(nx, ny)`.
#[derive(Debug, Clone)]
pub struct CellOrdering {
    row: Vec<usize>,
    bw: usize,
}

impl CellOrdering {
    pub fn new(grid: &Grid2D) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        if nx <= ny {
            Self {
                row: (0..nx * ny).collect(),
                bw: nx,
            }
        } else {
            let mut row = vec![0; nx * ny];
            for j in 0..ny {
                for i in 0..nx {
                    row[j * nx + i] = i * ny + j;
                }
            }
            Self { row, bw: ny }
        }
    }

    #[inline]
    pub fn row(&self, cell: usize) -> usize {
        self.row[cell]
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn gather(&self, cells: &[f64], rows: &mut [f64]) {
        for (k, &v) in cells.iter().enumerate() {
            rows[self.row[k]] = v;
        }
    }

    pub fn scatter(&self, rows: &[f64], cells: &mut [f64]) {
        for (k, c) in cells.iter_mut().enumerate() {
            *c = rows[self.row[k]];
        }
    }

    /// Assembles `diag + Σ_faces t_f (e_a - e_b)(e_a - e_b)ᵀ`.
    pub fn assemble(&self, faces: &[Face], trans: &[f64], diag: &[f64]) -> BandedSpd {
        let n = diag.len();
        let mut m = BandedSpd::zeros(n, self.bw);
        for (k, &d) in diag.iter().enumerate() {
            let r = self.row[k];
            m.add(r, r, d);
        }
        for (f, &t) in faces.iter().zip(trans) {
            let (ra, rb) = (self.row[f.a], self.row[f.b]);
            m.add(ra, ra, t);
            m.add(rb, rb, t);
            m.add(ra, rb, -t);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_count_and_bandwidth() {
        let g = Grid2D::new(5, 3, 1.0).unwrap();
        assert_eq!(faces(&g).len(), 4 * 3 + 5 * 2);
        let o = CellOrdering::new(&g);
        assert_eq!(o.bandwidth(), 3);
        let fs = faces(&g);
        for f in &fs {
            let (a, b) = (o.row(f.a), o.row(f.b));
            assert!(a.abs_diff(b) <= o.bandwidth());
        }
    }

    #[test]
    fn harmonic_mean_of_equal_values() {
        assert_eq!(harmonic(3.0, 3.0), 3.0);
        assert!(harmonic(1.0, 100.0) < 2.0);
    }
}
