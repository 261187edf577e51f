//! Cell-centered square grids and scalar fields on them.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square domain `[0, L] x [0, L]` split into `nx * ny` cells.
///
/// Cells are indexed row-major: cell `(i, j)` (column `i` along x, row `j`
/// along y) has linear index `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub length: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, length: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || nx * ny < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 cells, got {nx}x{ny}"
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidParameter(format!("grid length must be positive, got {length}")));
        }
        Ok(Self { nx, ny, length })
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn dx(&self) -> f64 {
        self.length / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.length / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn area(&self) -> f64 {
        self.length * self.length
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn cell_center(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.coords(k);
        ((i as f64 + 0.5) * self.dx(), (j as f64 + 0.5) * self.dy())
    }

    /// Cell containing the point, or an error if it lies outside the open domain.
    pub fn locate(&self, x: f64, y: f64) -> Result<usize> {
        if !(x > 0.0 && x < self.length && y > 0.0 && y < self.length) {
            return Err(Error::InvalidParameter(format!(
                "point ({x}, {y}) is not strictly inside [0, {}]^2",
                self.length
            )));
        }
        let i = ((x / self.dx()) as usize).min(self.nx - 1);
        let j = ((y / self.dy()) as usize).min(self.ny - 1);
        Ok(self.index(i, j))
    }

    pub fn ensure_same(&self, other: &Grid2D) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch {
                expected: self.describe(),
                found: other.describe(),
            });
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!("{}x{} (L={})", self.nx, self.ny, self.length)
    }
}

/// Scalar value per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::LengthMismatch {
                expected: grid.n_cells(),
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("field value {v} is not finite")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid2D, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n_cells()],
        }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.n_cells())
            .map(|k| {
                let (x, y) = grid.cell_center(k);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Spatial average over the domain.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Area-weighted L² norm.
    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.grid, &self.values)
    }

    pub fn demeaned(&self) -> Field {
        let m = self.mean();
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| v - m).collect(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    /// Header line `nx,ny,length`, then one value per line in row-major order.
    pub fn write_csv_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "nx,ny,length")?;
        writeln!(w, "{},{},{}", self.grid.nx, self.grid.ny, self.grid.length)?;
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Field> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_csv_from(f)
    }

    pub fn read_csv_from<R: BufRead>(r: R) -> Result<Field> {
        let mut lines = r.lines();
        let bad = |m: &str| Error::Config(format!("field CSV: {m}"));
        let header = lines.next().ok_or_else(|| bad("empty file"))??;
        if header.trim() != "nx,ny,length" {
            return Err(bad("missing nx,ny,length header"));
        }
        let dims = lines.next().ok_or_else(|| bad("missing dimensions"))??;
        let parts: Vec<&str> = dims.trim().split(',').collect();
        if parts.len() != 3 {
            return Err(bad("dimension line needs three values"));
        }
        let nx = parts[0].parse().map_err(|_| bad("bad nx"))?;
        let ny = parts[1].parse().map_err(|_| bad("bad ny"))?;
        let length = parts[2].parse().map_err(|_| bad("bad length"))?;
        let grid = Grid2D::new(nx, ny, length)?;
        let mut values = Vec::with_capacity(grid.n_cells());
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            values.push(t.parse::<f64>().map_err(|_| bad("bad value"))?);
        }
        Field::new(grid, values)
    }
}

/// Area-weighted L² norm of cell values.
pub fn l2_norm(grid: &Grid2D, values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() * grid.cell_area()).sqrt()
}
