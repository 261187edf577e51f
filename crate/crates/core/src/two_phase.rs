//! Incompressible oil-water flow solved with IMPES.
//!
//! Pressure: `-div(λ(s) e^u grad p) = injection + Σ ω λ(s) (P_bh - p)` with
//! two-point fluxes, harmonic `e^u` and arithmetic `λ(s)` on faces, and the
//! producer terms implicit on the diagonal. Saturation: explicit first-order
//! upwind fractional flow, substepped under a CFL bound. Injectors are rate
//! controlled and inject water; producers are held at a bottom-hole pressure.
//!
//! Time is in years, rates in m³/day, pressures in Pa.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fv::{self, CellOrdering, Face};
use crate::grid::{Field, Grid2D};
use crate::model::{CostCounter, ForwardModel, SequentialModel};
use crate::schedule::Schedule;
use crate::single_phase::{MeasurementSchedule, SECONDS_PER_DAY};

pub const DAYS_PER_YEAR: f64 = 365.25;
pub const SECONDS_PER_YEAR: f64 = DAYS_PER_YEAR * SECONDS_PER_DAY;

const SAT_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelPermModel {
    pub a_w: f64,
    pub a_o: f64,
    pub s_iw: f64,
    pub s_or: f64,
    pub mu_w: f64,
    pub mu_o: f64,
}

impl RelPermModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a_w > 0.0
            && self.a_w <= 1.0
            && self.a_o > 0.0
            && self.a_o <= 1.0
            && (0.0..1.0).contains(&self.s_iw)
            && (0.0..1.0).contains(&self.s_or)
            && self.s_iw + self.s_or < 1.0
            && self.mu_w > 0.0
            && self.mu_o > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid relative permeability model {self:?}")))
        }
    }

    pub fn s_min(&self) -> f64 {
        self.s_iw
    }

    pub fn s_max(&self) -> f64 {
        1.0 - self.s_or
    }

    fn normalized(&self, s: f64) -> f64 {
        ((s - self.s_iw) / (1.0 - self.s_iw - self.s_or)).clamp(0.0, 1.0)
    }

    pub fn k_rw(&self, s: f64) -> f64 {
        let e = self.normalized(s);
        self.a_w * e * e
    }

    pub fn k_ro(&self, s: f64) -> f64 {
        let e = 1.0 - self.normalized(s);
        self.a_o * e * e
    }

    /// `(λ_w, λ)` without range checks.
    #[inline]
    pub fn mobilities_unchecked(&self, s: f64) -> (f64, f64) {
        let lw = self.k_rw(s) / self.mu_w;
        (lw, lw + self.k_ro(s) / self.mu_o)
    }

    pub fn fractional_flow(&self, s: f64) -> f64 {
        let (lw, l) = self.mobilities_unchecked(s);
        lw / l
    }

    /// Derivative of the fractional flow.
    pub fn fractional_flow_derivative(&self, s: f64) -> f64 {
        let span = 1.0 - self.s_iw - self.s_or;
        let e = self.normalized(s);
        let lw = self.a_w * e * e / self.mu_w;
        let lo = self.a_o * (1.0 - e) * (1.0 - e) / self.mu_o;
        let dlw = 2.0 * self.a_w * e / (self.mu_w * span);
        let dlo = -2.0 * self.a_o * (1.0 - e) / (self.mu_o * span);
        (dlw * lo - lw * dlo) / ((lw + lo) * (lw + lo))
    }

    /// Upper bound on `f_w'` over the physical range (sampled, with a small margin).
    pub fn max_fractional_flow_derivative(&self) -> f64 {
        let n = 4000;
        let mut m: f64 = 0.0;
        for i in 0..=n {
            let s = self.s_min() + (self.s_max() - self.s_min()) * i as f64 / n as f64;
            m = m.max(self.fractional_flow_derivative(s));
        }
        m * 1.02
    }
}

/// Water and total mobility at saturation `s`.
pub fn mobilities(s: f64, rp: &RelPermModel) -> Result<(f64, f64)> {
    if !(s >= rp.s_min() && s <= rp.s_max()) {
        return Err(Error::SaturationBounds {
            value: s,
            lo: rp.s_min(),
            hi: rp.s_max(),
        });
    }
    Ok(rp.mobilities_unchecked(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WellKind {
    Injector,
    Producer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPhaseWell {
    pub name: String,
    pub kind: WellKind,
    pub x: f64,
    pub y: f64,
    /// Injection rate in m³/day for injectors, bottom-hole pressure in Pa for producers.
    pub schedule: Schedule,
    /// Explicit well index ω; Peaceman's formula is used when absent.
    #[serde(default)]
    pub well_index: Option<f64>,
    /// The well is shut before this time (years).
    #[serde(default)]
    pub active_from: f64,
}

fn one() -> f64 {
    1.0
}

fn default_radius() -> f64 {
    0.1
}

fn default_cfl() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPhaseConfig {
    pub relperm: RelPermModel,
    pub porosity: f64,
    #[serde(default = "one")]
    pub thickness: f64,
    #[serde(default = "default_radius")]
    pub well_radius: f64,
    pub initial_pressure: f64,
    pub initial_saturation: f64,
    pub horizon_years: f64,
    /// Pressure update interval, years.
    pub dt_years: f64,
    /// Fraction of the stability bound used for saturation substeps.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub wells: Vec<TwoPhaseWell>,
}

impl TwoPhaseConfig {
    pub fn validate(&self, grid: &Grid2D) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        self.relperm.validate()?;
        if !(self.porosity > 0.0 && self.porosity < 1.0) {
            return bad(format!("porosity must lie in (0, 1), got {}", self.porosity));
        }
        if !(self.thickness > 0.0) || !(self.well_radius > 0.0) {
            return bad("thickness and well radius must be positive".into());
        }
        let s0 = self.initial_saturation;
        if !(s0 >= self.relperm.s_min() && s0 <= self.relperm.s_max()) {
            return bad(format!("initial saturation {s0} outside the mobile range"));
        }
        if !(self.horizon_years > 0.0) || !(self.dt_years > 0.0) {
            return bad("horizon and time step must be positive".into());
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("cfl fraction must lie in (0, 1], got {}", self.cfl));
        }
        for w in &self.wells {
            grid.locate(w.x, w.y)?;
            w.schedule.validate()?;
            if let Some(om) = w.well_index {
                if !(om > 0.0) {
                    return bad(format!("well {} has non-positive index", w.name));
                }
            }
            if !(w.active_from >= 0.0) {
                return bad(format!("well {} has negative activation time", w.name));
            }
        }
        if self.wells.iter().any(|w| w.well_index.is_none()) && peaceman_radius(grid) <= self.well_radius {
            return bad("well radius exceeds the Peaceman equivalent radius".into());
        }
        Ok(())
    }

    pub fn n_injectors(&self) -> usize {
        self.wells.iter().filter(|w| w.kind == WellKind::Injector).count()
    }

    pub fn n_producers(&self) -> usize {
        self.wells.len() - self.n_injectors()
    }
}

fn peaceman_radius(grid: &Grid2D) -> f64 {
    0.2 * (grid.dx() * grid.dy()).sqrt()
}

/// Peaceman well index `2π e^u h / ln(r_e / r_w)` with `r_e = 0.2 Δx`.
pub fn peaceman_index(grid: &Grid2D, u_cell: f64, thickness: f64, well_radius: f64) -> f64 {
    2.0 * std::f64::consts::PI * u_cell.exp() * thickness / (peaceman_radius(grid) / well_radius).ln()
}

/// Pressure and saturation at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub pressure: Vec<f64>,
    pub saturation: Vec<f64>,
}

/// One row of a well curve: `(time, well, quantity, value)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellSample {
    pub time: f64,
    pub well: String,
    pub quantity: &'static str,
    pub value: f64,
}

/// Accumulated volumes (m³) since `t = 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Volumes {
    pub injected_water: f64,
    pub produced_water: f64,
    pub produced_oil: f64,
    /// Oil produced per well (zero for injectors).
    pub oil_by_well: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TwoPhaseTrajectory {
    pub grid: Grid2D,
    /// `t = 0` followed by every measurement time.
    pub snapshots: Vec<Snapshot>,
    pub wells: Vec<WellSample>,
    pub volumes: Volumes,
}

impl TwoPhaseTrajectory {
    pub fn at(&self, t: f64) -> Result<&Snapshot> {
        self.snapshots
            .iter()
            .find(|s| (s.time - t).abs() <= 1e-9 * t.abs().max(1.0))
            .ok_or(Error::TimeNotOnGrid(t))
    }

    /// Writes the well curves as `time,well,quantity,value`.
    pub fn write_well_curves(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time", "well", "quantity", "value"])?;
        for r in &self.wells {
            w.write_record([r.time.to_string(), r.well.clone(), r.quantity.to_string(), r.value.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes pressure and saturation fields for each snapshot into `dir`.
    pub fn write_snapshots(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for s in &self.snapshots {
            Field::new(self.grid, s.pressure.clone())?.write_csv(&dir.join(format!("pressure_{}y.csv", s.time)))?;
            Field::new(self.grid, s.saturation.clone())?
                .write_csv(&dir.join(format!("saturation_{}y.csv", s.time)))?;
        }
        Ok(())
    }
}

/// Well flows from one pressure solve, in m³/s (positive into the reservoir for
/// injectors, positive out of the reservoir for producers).
#[derive(Debug, Clone)]
pub struct PressureSolution {
    pub pressure: Vec<f64>,
    pub well_rates: Vec<f64>,
}

/// Per-permeability precomputation: face transmissibilities and well indices.
struct Physics<'a> {
    grid: &'a Grid2D,
    cfg: &'a TwoPhaseConfig,
    faces: &'a [Face],
    ordering: &'a CellOrdering,
    cells: &'a [usize],
    trans: Vec<f64>,
    omega: Vec<f64>,
    pore_volume: f64,
    dfw_max: f64,
}

impl<'a> Physics<'a> {
    fn active(&self, w: usize, t: f64) -> bool {
        t + 1e-9 * t.abs().max(1.0) >= self.cfg.wells[w].active_from
    }

    fn solve_pressure(&self, s: &[f64], t: f64) -> Result<PressureSolution> {
        let rp = &self.cfg.relperm;
        let n = self.grid.n_cells();
        let lam: Vec<f64> = s.iter().map(|&v| rp.mobilities_unchecked(v).1).collect();
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut anchored = false;
        let mut injecting = false;
        for (w, spec) in self.cfg.wells.iter().enumerate() {
            if !self.active(w, t) {
                continue;
            }
            let c = self.cells[w];
            let r = self.ordering.row(c);
            match spec.kind {
                WellKind::Injector => {
                    let q = spec.schedule.value_at(t) / SECONDS_PER_DAY;
                    rhs[r] += q;
                    injecting |= q != 0.0;
                }
                WellKind::Producer => {
                    let a = self.omega[w] * lam[c];
                    diag[c] += a;
                    rhs[r] += a * spec.schedule.value_at(t);
                    anchored = true;
                }
            }
        }
        if !anchored {
            if injecting {
                return Err(Error::Singular("net injection with no producing well".into()));
            }
            return Ok(PressureSolution {
                pressure: vec![self.cfg.initial_pressure; n],
                well_rates: vec![0.0; self.cfg.wells.len()],
            });
        }
        let face_t: Vec<f64> = self
            .faces
            .iter()
            .zip(&self.trans)
            .map(|(f, &tr)| tr * 0.5 * (lam[f.a] + lam[f.b]))
            .collect();
        let chol = self.ordering.assemble(self.faces, &face_t, &diag).factor()?;
        chol.solve_in_place(&mut rhs);
        let mut p = vec![0.0; n];
        self.ordering.scatter(&rhs, &mut p);
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolverFailure {
                step: 0,
                reason: "non-finite pressure".into(),
            });
        }
        let well_rates = self
            .cfg
            .wells
            .iter()
            .enumerate()
            .map(|(w, spec)| {
                if !self.active(w, t) {
                    return 0.0;
                }
                let c = self.cells[w];
                match spec.kind {
                    WellKind::Injector => spec.schedule.value_at(t) / SECONDS_PER_DAY,
                    WellKind::Producer => self.omega[w] * lam[c] * (p[c] - spec.schedule.value_at(t)),
                }
            })
            .collect();
        Ok(PressureSolution { pressure: p, well_rates })
    }

    /// Face total fluxes (m³/s, positive from `a` to `b`).
    fn face_fluxes(&self, s: &[f64], p: &[f64]) -> Vec<f64> {
        let rp = &self.cfg.relperm;
        self.faces
            .iter()
            .zip(&self.trans)
            .map(|(f, &tr)| {
                let la = rp.mobilities_unchecked(s[f.a]).1;
                let lb = rp.mobilities_unchecked(s[f.b]).1;
                tr * 0.5 * (la + lb) * (p[f.a] - p[f.b])
            })
            .collect()
    }

    /// Largest stable saturation step (seconds) for the given fluxes.
    fn cfl_bound(&self, flux: &[f64], rates: &[f64]) -> f64 {
        let mut out = vec![0.0; self.grid.n_cells()];
        for (f, &q) in self.faces.iter().zip(flux) {
            if q > 0.0 {
                out[f.a] += q;
            } else {
                out[f.b] -= q;
            }
        }
        for (w, spec) in self.cfg.wells.iter().enumerate() {
            if spec.kind == WellKind::Producer {
                out[self.cells[w]] += rates[w].abs();
            }
        }
        let m = out.iter().cloned().fold(0.0, f64::max);
        if m == 0.0 || self.dfw_max == 0.0 {
            f64::INFINITY
        } else {
            self.pore_volume / (self.dfw_max * m)
        }
    }

    /// One explicit upwind step of length `dt` seconds.
    fn saturation_step(&self, s: &mut [f64], flux: &[f64], rates: &[f64], dt: f64, vol: &mut Volumes) -> Result<()> {
        let rp = &self.cfg.relperm;
        let fw: Vec<f64> = s.iter().map(|&v| rp.fractional_flow(v)).collect();
        let mut div = vec![0.0; s.len()];
        for (f, &q) in self.faces.iter().zip(flux) {
            let w = if q > 0.0 { q * fw[f.a] } else { q * fw[f.b] };
            div[f.a] -= w;
            div[f.b] += w;
        }
        for (w, spec) in self.cfg.wells.iter().enumerate() {
            let c = self.cells[w];
            let q = rates[w];
            match spec.kind {
                WellKind::Injector => {
                    div[c] += q;
                    vol.injected_water += q * dt;
                }
                WellKind::Producer => {
                    let qw = q * fw[c];
                    div[c] -= qw;
                    vol.produced_water += qw * dt;
                    vol.produced_oil += (q - qw) * dt;
                    vol.oil_by_well[w] += (q - qw) * dt;
                }
            }
        }
        let (lo, hi) = (rp.s_min(), rp.s_max());
        for (sv, d) in s.iter_mut().zip(div) {
            let v = *sv + dt * d / self.pore_volume;
            if v < lo - SAT_GUARD || v > hi + SAT_GUARD || !v.is_finite() {
                return Err(Error::SaturationBounds { value: v, lo, hi });
            }
            *sv = v.clamp(lo, hi);
        }
        Ok(())
    }

    /// Advances `s` over `[t0, t1]` (years) with a single pressure solve at `t0`.
    fn advance_interval(&self, s: &mut [f64], t0: f64, t1: f64, vol: &mut Volumes) -> Result<PressureSolution> {
        let sol = self.solve_pressure(s, t0)?;
        let flux = self.face_fluxes(s, &sol.pressure);
        let bound = self.cfl_bound(&flux, &sol.well_rates);
        let total = (t1 - t0) * SECONDS_PER_YEAR;
        let n_sub = if bound.is_finite() {
            (total / (self.cfg.cfl * bound)).ceil().max(1.0) as usize
        } else {
            1
        };
        let dt = total / n_sub as f64;
        for _ in 0..n_sub {
            self.saturation_step(s, &flux, &sol.well_rates, dt, vol)?;
        }
        Ok(sol)
    }
}

/// IMPES forward problem on a grid with a measurement schedule.
#[derive(Clone)]
pub struct TwoPhaseModel {
    grid: Grid2D,
    cfg: TwoPhaseConfig,
    sched: MeasurementSchedule,
    faces: Vec<Face>,
    ordering: CellOrdering,
    cells: Vec<usize>,
    /// Observed wells, injectors first.
    observed: Vec<usize>,
    events: Vec<f64>,
    meas_events: Vec<usize>,
    dfw_max: f64,
    cost: Arc<CostCounter>,
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

impl TwoPhaseModel {
    pub fn new(grid: Grid2D, cfg: TwoPhaseConfig, sched: MeasurementSchedule) -> Result<Self> {
        cfg.validate(&grid)?;
        sched.validate(cfg.horizon_years)?;
        if let Some(&w) = sched.wells.iter().find(|&&w| w >= cfg.wells.len()) {
            return Err(Error::Config(format!("observed well index {w} does not exist")));
        }
        let cells = cfg
            .wells
            .iter()
            .map(|w| grid.locate(w.x, w.y))
            .collect::<Result<Vec<_>>>()?;
        let mut observed: Vec<usize> = sched
            .wells
            .iter()
            .copied()
            .filter(|&w| cfg.wells[w].kind == WellKind::Injector)
            .collect();
        observed.extend(sched.wells.iter().copied().filter(|&w| cfg.wells[w].kind == WellKind::Producer));

        let horizon = cfg.horizon_years;
        let mut ev: Vec<f64> = vec![0.0, horizon];
        let n_dt = (horizon / cfg.dt_years).floor() as usize;
        ev.extend((1..=n_dt).map(|k| k as f64 * cfg.dt_years));
        ev.extend(sched.times.iter().copied());
        for w in &cfg.wells {
            ev.extend(w.schedule.0.iter().map(|&(t, _)| t));
            ev.push(w.active_from);
        }
        ev.retain(|&t| t >= 0.0 && t <= horizon * (1.0 + 1e-12));
        ev.sort_by(f64::total_cmp);
        let mut events: Vec<f64> = Vec::with_capacity(ev.len());
        for t in ev {
            match events.last() {
                Some(&l) if same_time(l, t) => {}
                _ => events.push(t),
            }
        }
        // Snap measurement times onto the event list.
        let meas_events = sched
            .times
            .iter()
            .map(|&t| events.iter().position(|&e| same_time(e, t)).ok_or(Error::TimeNotOnGrid(t)))
            .collect::<Result<Vec<_>>>()?;
        let cost = CostCounter::new((events.len() - 1) as u64);
        Ok(Self {
            faces: fv::faces(&grid),
            ordering: CellOrdering::new(&grid),
            dfw_max: cfg.relperm.max_fractional_flow_derivative(),
            grid,
            cfg,
            sched,
            cells,
            observed,
            events,
            meas_events,
            cost,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn config(&self) -> &TwoPhaseConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &MeasurementSchedule {
        &self.sched
    }

    pub fn well_cells(&self) -> &[usize] {
        &self.cells
    }

    /// Observed wells in measurement order (injectors, then producers).
    pub fn observed_wells(&self) -> &[usize] {
        &self.observed
    }

    pub fn observed_locations(&self) -> Vec<(f64, f64)> {
        self.observed
            .iter()
            .map(|&w| (self.cfg.wells[w].x, self.cfg.wells[w].y))
            .collect()
    }

    pub fn cost_counter(&self) -> &Arc<CostCounter> {
        &self.cost
    }

    /// Pressure-solve times (years), including `0` and the horizon.
    pub fn event_times(&self) -> &[f64] {
        &self.events
    }

    fn physics(&self, u: &[f64]) -> Result<Physics<'_>> {
        if u.len() != self.grid.n_cells() {
            return Err(Error::LengthMismatch {
                expected: self.grid.n_cells(),
                found: u.len(),
            });
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("log-permeability is not finite".into()));
        }
        let omega = self
            .cfg
            .wells
            .iter()
            .zip(&self.cells)
            .map(|(w, &c)| {
                w.well_index
                    .unwrap_or_else(|| peaceman_index(&self.grid, u[c], self.cfg.thickness, self.cfg.well_radius))
            })
            .collect();
        Ok(Physics {
            grid: &self.grid,
            cfg: &self.cfg,
            faces: &self.faces,
            ordering: &self.ordering,
            cells: &self.cells,
            trans: fv::transmissibilities(&self.faces, u, self.cfg.thickness),
            omega,
            pore_volume: self.cfg.porosity * self.cfg.thickness * self.grid.cell_area(),
            dfw_max: self.dfw_max,
        })
    }

    fn empty_volumes(&self) -> Volumes {
        Volumes {
            oil_by_well: vec![0.0; self.cfg.wells.len()],
            ..Default::default()
        }
    }

    /// Well index ω for every configured well under `u`.
    pub fn well_indices(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.physics(u)?.omega)
    }

    /// Pressure for saturation `s` at time `t`.
    pub fn solve_pressure(&self, u: &Field, s: &Field, t: f64) -> Result<PressureSolution> {
        self.grid.ensure_same(&u.grid)?;
        self.grid.ensure_same(&s.grid)?;
        let rp = &self.cfg.relperm;
        for &v in &s.values {
            mobilities(v, rp)?;
        }
        self.physics(&u.values)?.solve_pressure(&s.values, t)
    }

    /// One upwind saturation update of `dt_years` using pressure `p`; fails if
    /// `dt_years` exceeds the stability bound.
    pub fn advance_saturation(&self, u: &Field, s: &Field, p: &Field, t: f64, dt_years: f64) -> Result<(Field, Volumes)> {
        self.grid.ensure_same(&u.grid)?;
        let ph = self.physics(&u.values)?;
        let sol = ph.solve_pressure(&s.values, t)?;
        let flux = ph.face_fluxes(&s.values, &p.values);
        let bound = ph.cfl_bound(&flux, &sol.well_rates);
        let dt = dt_years * SECONDS_PER_YEAR;
        if dt > bound * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, bound });
        }
        let mut out = s.values.clone();
        let mut vol = self.empty_volumes();
        ph.saturation_step(&mut out, &flux, &sol.well_rates, dt, &mut vol)?;
        Ok((Field::new(self.grid, out)?, vol))
    }

    fn record_wells(&self, ph: &Physics<'_>, t: f64, s: &[f64], sol: &PressureSolution, vol: &Volumes, out: &mut Vec<WellSample>) {
        for (w, spec) in self.cfg.wells.iter().enumerate() {
            let c = self.cells[w];
            let name = spec.name.clone();
            match spec.kind {
                WellKind::Injector => {
                    let bhp = injector_bhp(&self.cfg.relperm, sol, ph.omega[w], c, s[c], spec.schedule.value_at(t));
                    out.push(WellSample { time: t, well: name, quantity: "bhp", value: bhp });
                }
                WellKind::Producer => {
                    out.push(WellSample {
                        time: t,
                        well: name.clone(),
                        quantity: "total_rate",
                        value: sol.well_rates[w] * SECONDS_PER_DAY,
                    });
                    out.push(WellSample {
                        time: t,
                        well: name,
                        quantity: "cumulative_oil",
                        value: vol.oil_by_well[w],
                    });
                }
            }
        }
    }

    /// Runs to the horizon, keeping snapshots at `0` and each measurement time.
    pub fn simulate(&self, u: &Field) -> Result<TwoPhaseTrajectory> {
        self.grid.ensure_same(&u.grid)?;
        let ph = self.physics(&u.values)?;
        let mut s = vec![self.cfg.initial_saturation; self.grid.n_cells()];
        let mut vol = self.empty_volumes();
        let mut snapshots = Vec::with_capacity(self.meas_events.len() + 1);
        let mut wells = Vec::new();
        let mut next = 0;
        for (k, &t) in self.events.iter().enumerate() {
            let sol = ph.solve_pressure(&s, t)?;
            self.record_wells(&ph, t, &s, &sol, &vol, &mut wells);
            if k == 0 || (next < self.meas_events.len() && self.meas_events[next] == k) {
                if k != 0 {
                    next += 1;
                }
                snapshots.push(Snapshot {
                    time: t,
                    pressure: sol.pressure.clone(),
                    saturation: s.clone(),
                });
            }
            if k + 1 < self.events.len() {
                ph.advance_interval(&mut s, t, self.events[k + 1], &mut vol)
                    .map_err(|e| at_step(e, k))?;
            }
        }
        self.cost.add_steps((self.events.len() - 1) as u64);
        Ok(TwoPhaseTrajectory {
            grid: self.grid,
            snapshots,
            wells,
            volumes: vol,
        })
    }

    fn measure_state(&self, ph: &Physics<'_>, s: &[f64], sol: &PressureSolution, t: f64) -> Vec<f64> {
        let rp = &self.cfg.relperm;
        self.observed
            .iter()
            .map(|&w| {
                let c = self.cells[w];
                let spec = &self.cfg.wells[w];
                match spec.kind {
                    WellKind::Injector => injector_bhp(rp, sol, ph.omega[w], c, s[c], spec.schedule.value_at(t)),
                    WellKind::Producer => {
                        if !ph.active(w, t) {
                            return 0.0;
                        }
                        let lam = rp.mobilities_unchecked(s[c]).1;
                        ph.omega[w] * lam * (spec.schedule.value_at(t) - sol.pressure[c]) * SECONDS_PER_DAY
                    }
                }
            })
            .collect()
    }

    fn clamp_state(&self, s: &mut [f64]) {
        let rp = &self.cfg.relperm;
        for v in s {
            *v = v.clamp(rp.s_min(), rp.s_max());
        }
    }
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::SolverFailure { reason, .. } => Error::SolverFailure { step, reason },
        other => other,
    }
}

fn injector_bhp(rp: &RelPermModel, sol: &PressureSolution, omega: f64, c: usize, s: f64, q_day: f64) -> f64 {
    let lam = rp.mobilities_unchecked(s).1;
    q_day / SECONDS_PER_DAY / (omega * lam) + sol.pressure[c]
}

/// Observations at each measurement time: injector bottom-hole pressures (Pa),
/// then producer total rates `ω λ(s) (P_bh - p)` in m³/day.
pub fn measure_two_phase(model: &TwoPhaseModel, u: &Field, traj: &TwoPhaseTrajectory) -> Result<Vec<f64>> {
    let ph = model.physics(&u.values)?;
    let mut out = Vec::with_capacity(model.n_obs());
    for &t in &model.sched.times {
        let snap = traj.at(t)?;
        let sol = PressureSolution {
            pressure: snap.pressure.clone(),
            well_rates: Vec::new(),
        };
        out.extend(model.measure_state(&ph, &snap.saturation, &sol, t));
    }
    Ok(out)
}

impl ForwardModel for TwoPhaseModel {
    fn n_params(&self) -> usize {
        self.grid.n_cells()
    }

    fn n_obs(&self) -> usize {
        self.observed.len() * self.sched.times.len()
    }

    fn forward(&self, u: &[f64]) -> Result<Vec<f64>> {
        let ph = self.physics(u)?;
        let mut s = vec![self.cfg.initial_saturation; self.grid.n_cells()];
        let mut vol = self.empty_volumes();
        let last = *self.meas_events.last().unwrap();
        let mut out = Vec::with_capacity(self.n_obs());
        let mut next = 0;
        for k in 0..=last {
            let t = self.events[k];
            if next < self.meas_events.len() && self.meas_events[next] == k {
                let sol = ph.solve_pressure(&s, t)?;
                out.extend(self.measure_state(&ph, &s, &sol, t));
                next += 1;
            }
            if k < last {
                ph.advance_interval(&mut s, t, self.events[k + 1], &mut vol)
                    .map_err(|e| at_step(e, k))?;
            }
        }
        self.cost.add_steps((self.events.len() - 1) as u64);
        Ok(out)
    }

    fn cost(&self) -> Option<&CostCounter> {
        Some(&self.cost)
    }
}

/// Sequential view with state `[p, s]`. Saturations handed to `advance` are
/// clamped to the mobile range first, since filter updates may leave it.
impl SequentialModel for TwoPhaseModel {
    fn n_params(&self) -> usize {
        self.grid.n_cells()
    }

    fn n_windows(&self) -> usize {
        self.meas_events.len()
    }

    fn n_measure(&self) -> usize {
        self.observed.len()
    }

    fn initial_state(&self) -> Vec<f64> {
        let n = self.grid.n_cells();
        let mut v = vec![self.cfg.initial_pressure; n];
        v.extend(std::iter::repeat_n(self.cfg.initial_saturation, n));
        v
    }

    fn advance(&self, window: usize, state: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.n_cells();
        if state.len() != 2 * n {
            return Err(Error::LengthMismatch {
                expected: 2 * n,
                found: state.len(),
            });
        }
        let ph = self.physics(u)?;
        let mut s = state[n..].to_vec();
        self.clamp_state(&mut s);
        let start = if window == 0 { 0 } else { self.meas_events[window - 1] };
        let end = self.meas_events[window];
        let mut vol = self.empty_volumes();
        for k in start..end {
            ph.advance_interval(&mut s, self.events[k], self.events[k + 1], &mut vol)
                .map_err(|e| at_step(e, k))?;
        }
        let sol = ph.solve_pressure(&s, self.events[end])?;
        self.cost.add_steps((end - start) as u64);
        let mut v = sol.pressure;
        v.extend(s);
        Ok(v)
    }

    fn measure(&self, window: usize, state: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.n_cells();
        let ph = self.physics(u)?;
        let mut s = state[n..].to_vec();
        self.clamp_state(&mut s);
        let sol = PressureSolution {
            pressure: state[..n].to_vec(),
            well_rates: Vec::new(),
        };
        Ok(self.measure_state(&ph, &s, &sol, self.events[self.meas_events[window]]))
    }

    fn cost(&self) -> Option<&CostCounter> {
        Some(&self.cost)
    }
}
