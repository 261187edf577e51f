//! Pushes parameter samples through the assimilation period plus a forecast
//! period with changed well controls, and summarizes the spread per well.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::par::Execution;
use crate::single_phase::{SinglePhaseModel, WellSpec};
use crate::two_phase::{TwoPhaseModel, TwoPhaseWell, WellKind};

use super::config::{ForecastScenario, ModelConfig};
use super::setup::Setup;

/// Probability levels of the reported quantiles.
pub const LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub time: f64,
    pub well: String,
    pub quantity: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub time: f64,
    pub well: String,
    pub quantity: String,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

impl QuantileRow {
    pub fn width_90(&self) -> f64 {
        self.q95 - self.q05
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalValues {
    pub well: String,
    pub quantity: String,
    pub values: Vec<f64>,
}

/// Forecast spread of one sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTable {
    pub source: String,
    pub samples: usize,
    /// Samples whose simulation failed; excluded from the quantiles.
    pub failed: usize,
    pub rows: Vec<QuantileRow>,
    pub terminal: Vec<TerminalValues>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub source: String,
    pub well: String,
    pub quantity: String,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub time_unit: String,
    pub terminal_time: f64,
    /// Trajectory of the reference posterior mean field.
    pub reference: Vec<CurvePoint>,
    pub tables: Vec<ForecastTable>,
    pub histograms: Vec<HistogramRow>,
}

enum Extended {
    SinglePhase(SinglePhaseModel),
    TwoPhase(TwoPhaseModel),
}

/// Flow model over the assimilation and forecast periods.
pub struct ForecastModel {
    model: Extended,
    quantities: Vec<String>,
    report_times: Vec<f64>,
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

impl ForecastModel {
    pub fn new(setup: &Setup, sc: &ForecastScenario) -> Result<Self> {
        let sched = crate::single_phase::MeasurementSchedule {
            times: setup.cfg.measurement.times.clone(),
            wells: vec![0],
        };
        let change = |name: &str| sc.schedule_changes.iter().find(|c| c.well == name).map(|c| c.schedule.clone());
        let model = match &setup.cfg.model {
            ModelConfig::SinglePhase(c) => {
                let mut c = c.clone();
                c.horizon_days += sc.extension;
                for w in &mut c.wells {
                    if let Some(s) = change(&w.name) {
                        w.rate = s;
                    }
                }
                for w in &sc.new_wells {
                    if w.active_from != 0.0 || w.kind.is_some() || w.well_index.is_some() {
                        return Err(Error::Config(format!(
                            "new well {}: single-phase wells take only a rate schedule",
                            w.name
                        )));
                    }
                    c.wells.push(WellSpec {
                        name: w.name.clone(),
                        x: w.x,
                        y: w.y,
                        rate: w.schedule.clone(),
                    });
                }
                Extended::SinglePhase(SinglePhaseModel::new(setup.grid, c, sched)?)
            }
            ModelConfig::TwoPhase(c) => {
                let mut c = c.clone();
                c.horizon_years += sc.extension;
                for w in &mut c.wells {
                    if let Some(s) = change(&w.name) {
                        w.schedule = s;
                    }
                }
                for w in &sc.new_wells {
                    c.wells.push(TwoPhaseWell {
                        name: w.name.clone(),
                        kind: w.kind.unwrap_or(WellKind::Producer),
                        x: w.x,
                        y: w.y,
                        schedule: w.schedule.clone(),
                        well_index: w.well_index,
                        active_from: w.active_from,
                    });
                }
                Extended::TwoPhase(TwoPhaseModel::new(setup.grid, c, sched)?)
            }
        };
        let fm = Self {
            model,
            quantities: sc.quantities.clone(),
            report_times: sc.report_times.clone(),
        };
        let times = fm.solver_times();
        if let Some(t) = sc.report_times.iter().find(|&&t| !times.iter().any(|&s| same_time(s, t))) {
            return Err(Error::TimeNotOnGrid(*t));
        }
        Ok(fm)
    }

    fn solver_times(&self) -> Vec<f64> {
        match &self.model {
            Extended::SinglePhase(m) => {
                let c = m.config();
                (0..=c.n_steps()).map(|n| n as f64 * c.dt_days).collect()
            }
            Extended::TwoPhase(m) => m.event_times().to_vec(),
        }
    }

    fn keep(&self, t: f64, q: &str) -> bool {
        (self.quantities.is_empty() || self.quantities.iter().any(|x| x == q))
            && (self.report_times.is_empty() || self.report_times.iter().any(|&r| same_time(r, t)))
    }

    /// Well curves of one parameter field, ordered by time, then well, then quantity.
    pub fn run(&self, u: &[f64]) -> Result<Vec<CurvePoint>> {
        let mut out = Vec::new();
        match &self.model {
            Extended::SinglePhase(m) => {
                let f = Field::new(*m.grid(), u.to_vec())?;
                let traj = m.simulate(&f)?;
                for (t, p) in traj.times().into_iter().zip(&traj.pressures) {
                    if !self.keep(t, "pressure") {
                        continue;
                    }
                    for (w, &c) in m.config().wells.iter().zip(m.well_cells()) {
                        out.push(CurvePoint {
                            time: t,
                            well: w.name.clone(),
                            quantity: "pressure".into(),
                            value: p[c],
                        });
                    }
                }
            }
            Extended::TwoPhase(m) => {
                let f = Field::new(*m.grid(), u.to_vec())?;
                let traj = m.simulate(&f)?;
                for s in traj.wells {
                    if self.keep(s.time, s.quantity) {
                        out.push(CurvePoint {
                            time: s.time,
                            well: s.well,
                            quantity: s.quantity.to_string(),
                            value: s.value,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Linear-interpolation sample quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Simulates every sample and reduces the curves to quantiles. Failed
/// samples are logged, counted and skipped.
pub fn forecast(fm: &ForecastModel, source: &str, samples: &[Vec<f64>], exec: Execution) -> Result<ForecastTable> {
    let runs = exec.map_indexed(samples.len(), |i| fm.run(&samples[i]));
    let mut ok: Vec<Vec<CurvePoint>> = Vec::with_capacity(runs.len());
    let mut failed = 0;
    for (i, r) in runs.into_iter().enumerate() {
        match r {
            Ok(c) => ok.push(c),
            Err(e) => {
                log::warn!("forecast {source}: sample {i} failed: {e}");
                failed += 1;
            }
        }
    }
    let Some(first) = ok.first() else {
        return Err(Error::InvalidParameter(format!("forecast {source}: no sample could be simulated")));
    };
    if ok.iter().any(|c| c.len() != first.len()) {
        return Err(Error::InvalidParameter(format!("forecast {source}: inconsistent curve layouts")));
    }
    let t_end = first.iter().map(|p| p.time).fold(f64::NEG_INFINITY, f64::max);
    let mut rows = Vec::with_capacity(first.len());
    let mut terminal = Vec::new();
    for (k, key) in first.iter().enumerate() {
        let mut v: Vec<f64> = ok.iter().map(|c| c[k].value).collect();
        if same_time(key.time, t_end) {
            terminal.push(TerminalValues {
                well: key.well.clone(),
                quantity: key.quantity.clone(),
                values: v.clone(),
            });
        }
        v.sort_by(f64::total_cmp);
        let q: Vec<f64> = LEVELS.iter().map(|&p| quantile(&v, p)).collect();
        rows.push(QuantileRow {
            time: key.time,
            well: key.well.clone(),
            quantity: key.quantity.clone(),
            q05: q[0],
            q25: q[1],
            q50: q[2],
            q75: q[3],
            q95: q[4],
        });
    }
    Ok(ForecastTable {
        source: source.to_string(),
        samples: ok.len(),
        failed,
        rows,
        terminal,
    })
}

/// Terminal-time histograms on bins shared by all tables for each well and quantity.
pub fn histograms(tables: &[ForecastTable], bins: usize) -> Vec<HistogramRow> {
    let mut out = Vec::new();
    let Some(first) = tables.first() else {
        return out;
    };
    for (k, key) in first.terminal.iter().enumerate() {
        let all = tables.iter().filter_map(|t| t.terminal.get(k)).flat_map(|t| t.values.iter().copied());
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let width = (hi - lo) / bins as f64;
        for t in tables {
            let Some(tv) = t.terminal.get(k) else { continue };
            let mut counts = vec![0usize; bins];
            for &v in &tv.values {
                let b = if width > 0.0 {
                    (((v - lo) / width) as usize).min(bins - 1)
                } else {
                    0
                };
                counts[b] += 1;
            }
            for (b, &count) in counts.iter().enumerate() {
                out.push(HistogramRow {
                    source: t.source.clone(),
                    well: key.well.clone(),
                    quantity: key.quantity.clone(),
                    lo: lo + b as f64 * width,
                    hi: if b + 1 == bins { hi } else { lo + (b + 1) as f64 * width },
                    count,
                });
            }
        }
    }
    out
}
