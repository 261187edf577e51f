//! Small dense and banded linear-algebra kernels.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Symmetric positive definite matrix stored as its lower band.
///
/// Row `i` keeps columns `i - bw ..= i`; entries outside the matrix are zero.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.data[self.idx(i, i)] * x[i];
        }
        y
    }

    /// Cholesky factorization `A = L Lᵀ`, consuming the matrix.
    pub fn factor(mut self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let ri = i * w + bw - i;
                let rj = j * w + bw - j;
                let s = self.data[ri + j] - dot(&self.data[ri + lo..ri + j], &self.data[rj + lo..rj + j]);
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Singular(format!(
                            "nonpositive pivot {s:e} at row {i}"
                        )));
                    }
                    self.data[ri + i] = s.sqrt();
                } else {
                    self.data[ri + j] = s / self.data[rj + j];
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

/// Banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    l: BandedSpd,
}

impl BandedCholesky {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let l = &self.l;
        let (n, bw) = (l.n, l.bw);
        let w = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let ri = i * w + bw - i;
            let s = b[i] - dot(&l.data[ri + lo..ri + i], &b[lo..i]);
            b[i] = s / l.data[ri + i];
        }
        for i in (0..n).rev() {
            let ri = i * w + bw - i;
            b[i] /= l.data[ri + i];
            let bi = b[i];
            let lo = i.saturating_sub(bw);
            for (bk, &a) in b[lo..i].iter_mut().zip(&l.data[ri + lo..ri + i]) {
                *bk -= a * bi;
            }
        }
    }
}

/// Eigen-decomposition based functions of a symmetric matrix.
pub fn sym_apply(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&x| f(x)));
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&d) * v.transpose()
}

/// Symmetric square root of an SPD matrix.
pub fn sym_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_spd(a)?;
    Ok(sym_apply(a, |x| x.max(0.0).sqrt()))
}

fn check_spd(a: &DMatrix<f64>) -> Result<()> {
    let eig = SymmetricEigen::new(a.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::Singular(format!("matrix not SPD (min eigenvalue {min:e})")));
    }
    Ok(())
}

/// Solves `a x = b` for SPD `a` (Cholesky).
pub fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("Cholesky factorization failed".into()))?;
    Ok(chol.solve(b))
}

pub fn standard_normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Dot product with four independent accumulators so the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
