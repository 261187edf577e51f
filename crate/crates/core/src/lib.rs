//! Bayesian history matching for reservoir flow models: Gaussian priors on
//! log-permeability, single- and two-phase simulators, a pCN MCMC reference
//! sampler, and the approximate methods it is used to assess.

pub mod da;
pub mod error;
pub mod fv;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod par;
pub mod prior;
pub mod schedule;
pub mod single_phase;
pub mod spectral;
pub mod two_phase;

pub use error::{Error, Result};
pub use grid::{Field, Grid2D};
