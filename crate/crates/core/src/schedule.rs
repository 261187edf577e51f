use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant function of time given as `[start, value]` pairs.
///
/// The value of a segment holds from its start until the next segment's start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(pub Vec<(f64, f64)>);

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule(vec![(0.0, value)])
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.0;
        if s.is_empty() {
            return Err(Error::Config("schedule has no segments".into()));
        }
        if s[0].0 > 0.0 {
            return Err(Error::Config(format!("schedule starts at {} > 0", s[0].0)));
        }
        for w in s.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Config("schedule starts must increase".into()));
            }
        }
        if s.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Config("schedule entries must be finite".into()));
        }
        Ok(())
    }

    /// Value in force at time `t` (segment starts are inclusive).
    pub fn value_at(&self, t: f64) -> f64 {
        let tol = 1e-9 * t.abs().max(1.0);
        let mut v = self.0[0].1;
        for &(start, val) in &self.0 {
            if start <= t + tol {
                v = val;
            } else {
                break;
            }
        }
        v
    }
}
