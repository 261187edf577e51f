//! Forward-operator abstractions shared by the flow models and the
//! assimilation methods, plus forward-run accounting and finite-difference
//! Jacobians.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::par::Execution;

/// Counts simulated time steps so costs can be reported in full forward runs.
#[derive(Debug, Default)]
pub struct CostCounter {
    steps: AtomicU64,
    steps_per_run: AtomicU64,
}

impl CostCounter {
    pub fn new(steps_per_run: u64) -> Arc<Self> {
        Arc::new(Self {
            steps: AtomicU64::new(0),
            steps_per_run: AtomicU64::new(steps_per_run.max(1)),
        })
    }

    pub fn add_steps(&self, n: u64) {
        self.steps.fetch_add(n, Ordering::Relaxed);
    }

    pub fn steps(&self) -> u64 {
        self.steps.load(Ordering::Relaxed)
    }

    /// Simulated steps divided by the steps of one full run.
    pub fn forward_runs(&self) -> f64 {
        self.steps() as f64 / self.steps_per_run.load(Ordering::Relaxed) as f64
    }

    pub fn reset(&self) {
        self.steps.store(0, Ordering::Relaxed);
    }
}

/// Parameter-to-observation map `G`.
pub trait ForwardModel: Sync + Send {
    fn n_params(&self) -> usize;
    fn n_obs(&self) -> usize;
    fn forward(&self, u: &[f64]) -> Result<Vec<f64>>;
    /// Cost counter charged by [`forward`](Self::forward), if any.
    fn cost(&self) -> Option<&CostCounter> {
        None
    }
}

/// Time-windowed view of a forward model used by the ensemble filters.
///
/// Window `n` (0-based) advances the model state from measurement time
/// `t_n` to `t_{n+1}` (with `t_0 = 0`), and `measure(n, ..)` evaluates the
/// predicted measurements at `t_{n+1}`.
pub trait SequentialModel: Sync + Send {
    fn n_params(&self) -> usize;
    fn n_windows(&self) -> usize;
    /// Measurements per window.
    fn n_measure(&self) -> usize;
    fn initial_state(&self) -> Vec<f64>;
    fn advance(&self, window: usize, state: &[f64], u: &[f64]) -> Result<Vec<f64>>;
    fn measure(&self, window: usize, state: &[f64], u: &[f64]) -> Result<Vec<f64>>;
    fn cost(&self) -> Option<&CostCounter> {
        None
    }
}

/// `G(u) = B u + offset`; a test hook for the linear-Gaussian oracle checks.
///
/// As a [`SequentialModel`] it has one window whose state is `G(u)` itself.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub matrix: DMatrix<f64>,
    pub offset: Vec<f64>,
}

impl LinearModel {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let offset = vec![0.0; matrix.nrows()];
        Self { matrix, offset }
    }
}

impl ForwardModel for LinearModel {
    fn n_params(&self) -> usize {
        self.matrix.ncols()
    }

    fn n_obs(&self) -> usize {
        self.matrix.nrows()
    }

    fn forward(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.matrix.ncols() {
            return Err(Error::LengthMismatch {
                expected: self.matrix.ncols(),
                found: u.len(),
            });
        }
        let y = &self.matrix * nalgebra::DVector::from_column_slice(u);
        Ok(y.iter().zip(&self.offset).map(|(a, b)| a + b).collect())
    }
}

impl SequentialModel for LinearModel {
    fn n_params(&self) -> usize {
        self.matrix.ncols()
    }

    fn n_windows(&self) -> usize {
        1
    }

    fn n_measure(&self) -> usize {
        self.matrix.nrows()
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.matrix.nrows()]
    }

    fn advance(&self, _window: usize, _state: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.forward(u)
    }

    fn measure(&self, _window: usize, state: &[f64], _u: &[f64]) -> Result<Vec<f64>> {
        Ok(state.to_vec())
    }
}

/// Central-difference Jacobian `Q[:, k] = (G(u + h e_k) - G(u - h e_k)) / 2h`.
pub fn jacobian_fd<M: ForwardModel + ?Sized>(model: &M, u: &[f64], h: f64) -> Result<DMatrix<f64>> {
    jacobian_fd_with(model, u, h, Execution::default())
}

pub fn jacobian_fd_with<M: ForwardModel + ?Sized>(
    model: &M,
    u: &[f64],
    h: f64,
    exec: Execution,
) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {h}")));
    }
    let n = u.len();
    let columns: Vec<Result<Vec<f64>>> = exec.map_indexed(n, |k| {
        let mut up = u.to_vec();
        up[k] += h;
        let gp = model.forward(&up)?;
        up[k] = u[k] - h;
        let gm = model.forward(&up)?;
        Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
    });
    let m = model.n_obs();
    let mut q = DMatrix::zeros(m, n);
    for (k, col) in columns.into_iter().enumerate() {
        let col = col?;
        for (i, v) in col.into_iter().enumerate() {
            q[(i, k)] = v;
        }
    }
    Ok(q)
}

/// Central difference of `G` along direction `d`.
pub fn directional_fd<M: ForwardModel + ?Sized>(model: &M, u: &[f64], d: &[f64], h: f64) -> Result<Vec<f64>> {
    let up: Vec<f64> = u.iter().zip(d).map(|(a, b)| a + h * b).collect();
    let um: Vec<f64> = u.iter().zip(d).map(|(a, b)| a - h * b).collect();
    let gp = model.forward(&up)?;
    let gm = model.forward(&um)?;
    Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}
