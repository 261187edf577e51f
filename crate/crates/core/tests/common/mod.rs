#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use hmlab::harness::ExperimentConfig;
use hmlab::prior::{GaussianPrior, LatentPrior};
use hmlab::schedule::Schedule;
use hmlab::single_phase::{MeasurementSchedule, SinglePhaseConfig, SinglePhaseModel, WellSpec};
use hmlab::spectral::SpectralBasis;
use hmlab::two_phase::{RelPermModel, TwoPhaseConfig, TwoPhaseModel, TwoPhaseWell, WellKind};
use hmlab::{Field, Grid2D};

pub const LN_K: f64 = -28.324168296488494;

pub fn preset_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn preset(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&preset_path(name)).expect("preset loads")
}

pub fn relperm() -> RelPermModel {
    RelPermModel {
        a_w: 0.3,
        a_o: 0.9,
        s_iw: 0.2,
        s_or: 0.2,
        mu_w: 5e-4,
        mu_o: 1e-2,
    }
}

pub fn prior(grid: Grid2D, kappa: f64) -> GaussianPrior {
    GaussianPrior::nondimensional(Field::constant(grid, LN_K), kappa, 1.3, std::sync::Arc::new(SpectralBasis::new(grid)))
        .unwrap()
}

pub fn draw(grid: Grid2D, kappa: f64, rng: &mut ChaCha8Rng) -> Field {
    Field::new(grid, prior(grid, kappa).draw(rng)).unwrap()
}

/// Point strictly inside cell `(i, j)`, away from its edges.
fn inside(grid: &Grid2D, i: usize, j: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let fx: f64 = rng.random_range(0.2..0.8);
    let fy: f64 = rng.random_range(0.2..0.8);
    ((i as f64 + fx) * grid.dx(), (j as f64 + fy) * grid.dy())
}

fn distinct_cells(grid: &Grid2D, k: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    while out.len() < k {
        let c = (rng.random_range(0..grid.nx), rng.random_range(0..grid.ny));
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

/// Random small single-phase problem with every well observed at every step.
pub fn random_single_phase(rng: &mut ChaCha8Rng) -> (SinglePhaseModel, Field) {
    let n = rng.random_range(4..=16);
    let grid = Grid2D::new(n, n, rng.random_range(100.0..2000.0)).unwrap();
    let n_wells = rng.random_range(1..=4);
    let wells = distinct_cells(&grid, n_wells, rng)
        .into_iter()
        .enumerate()
        .map(|(k, (i, j))| {
            let (x, y) = inside(&grid, i, j, rng);
            let sign = if rng.random_bool(0.7) { 1.0 } else { -1.0 };
            let q1: f64 = sign * rng.random_range(20.0..200.0);
            let q2: f64 = rng.random_range(20.0..200.0);
            WellSpec {
                name: format!("W{k}"),
                x,
                y,
                rate: Schedule(vec![(0.0, q1), (20.0, q2)]),
            }
        })
        .collect();
    let dt = [1.0, 2.5, 5.0][rng.random_range(0..3)];
    let steps = rng.random_range(4..=16);
    let cfg = SinglePhaseConfig {
        compressibility: rng.random_range(5e-9..5e-8),
        porosity: rng.random_range(0.05..0.4),
        viscosity: 1e-2,
        thickness: rng.random_range(1.0..20.0),
        initial_pressure: 3.5e7,
        horizon_days: dt * steps as f64,
        dt_days: dt,
        wells,
    };
    let times: Vec<f64> = (1..=steps).map(|s| s as f64 * dt).collect();
    let sched = MeasurementSchedule::all_wells(times, n_wells);
    let u = draw(grid, rng.random_range(0.5..4.0), rng);
    (SinglePhaseModel::new(grid, cfg, sched).unwrap(), u)
}

/// Random small waterflood with at least one injector and one producer.
pub fn random_two_phase(rng: &mut ChaCha8Rng) -> (TwoPhaseModel, Field) {
    let n = rng.random_range(4..=12);
    let grid = Grid2D::new(n, n, rng.random_range(200.0..3000.0)).unwrap();
    let n_inj = rng.random_range(1..=2);
    let n_prod = rng.random_range(1..=3);
    let p0 = 2.5e7;
    let wells = distinct_cells(&grid, n_inj + n_prod, rng)
        .into_iter()
        .enumerate()
        .map(|(k, (i, j))| {
            let (x, y) = inside(&grid, i, j, rng);
            let (kind, schedule, name) = if k < n_inj {
                let q: f64 = rng.random_range(10.0..500.0);
                (WellKind::Injector, Schedule::constant(q), format!("I{k}"))
            } else {
                let p: f64 = p0 - rng.random_range(0.0..5e6);
                (WellKind::Producer, Schedule::constant(p), format!("P{k}"))
            };
            TwoPhaseWell {
                name,
                kind,
                x,
                y,
                schedule,
                well_index: None,
                active_from: 0.0,
            }
        })
        .collect();
    let horizon = rng.random_range(0.5..3.0);
    let cfg = TwoPhaseConfig {
        relperm: relperm(),
        porosity: rng.random_range(0.1..0.35),
        thickness: rng.random_range(1.0..10.0),
        well_radius: 0.1,
        initial_pressure: p0,
        initial_saturation: rng.random_range(0.2..0.5),
        horizon_years: horizon,
        dt_years: horizon / 10.0,
        cfl: 0.9,
        wells,
    };
    let sched = MeasurementSchedule::all_wells(vec![horizon / 2.0, horizon], n_inj + n_prod);
    let u = draw(grid, rng.random_range(0.5..4.0), rng);
    (TwoPhaseModel::new(grid, cfg, sched).unwrap(), u)
}

/// Small single-phase experiment that runs every stage in a few seconds.
pub const TINY_SINGLE_PHASE: &str = r#"
name = "tiny-single-phase"
seed = 7

[grid]
nx = 10
ny = 10
length = 1000.0

[prior]
mean = -28.324168296488494
kappa = 2.0
alpha = 1.3

[model]
kind = "single_phase"
compressibility = 1e-8
porosity = 0.2
viscosity = 1e-2
initial_pressure = 3.5e7
horizon_days = 20.0
dt_days = 5.0

[[model.wells]]
name = "P1"
x = 240.0
y = 260.0
rate = [[0.0, 85.0]]

[[model.wells]]
name = "P2"
x = 760.0
y = 240.0
rate = [[0.0, 85.0]]

[[model.wells]]
name = "P3"
x = 520.0
y = 740.0
rate = [[0.0, 85.0]]

[measurement]
times = [5.0, 10.0, 20.0]

[noise]
sigma = 4e5

[mcmc]
chains = 2
steps = 600
burn_in = 100
thin = 10
beta = 0.05
modes = 4

[[methods]]
method = "map"

[[methods]]
method = "lmap"
ensemble_size = 8

[[methods]]
method = "rml"
ensemble_size = 4

[[methods]]
method = "enkf"
ensemble_size = 10

[[methods]]
method = "enkf"
ensemble_size = 10
localization = 300.0

[[methods]]
method = "ensrf"
ensemble_size = 10

[[methods]]
method = "ensrf"
ensemble_size = 10
localization = 300.0

[forecast]
extension = 20.0
max_samples = 6
histogram_bins = 5

[[forecast.schedule_changes]]
well = "P1"
schedule = [[0.0, 85.0], [20.0, 0.0]]

[[forecast.new_wells]]
name = "P4"
x = 260.0
y = 760.0
schedule = [[0.0, 0.0], [20.0, 60.0]]
"#;

/// Small two-phase experiment with ensemble methods only.
pub const TINY_TWO_PHASE: &str = r#"
name = "tiny-two-phase"
seed = 11

[grid]
nx = 6
ny = 6
length = 600.0

[prior]
mean = -28.324168296488494
kappa = 4.0
alpha = 1.3
truth_kappa = 2.0

[model]
kind = "two_phase"
porosity = 0.2
initial_pressure = 2.5e7
initial_saturation = 0.2
horizon_years = 1.0
dt_years = 0.1

[model.relperm]
a_w = 0.3
a_o = 0.9
s_iw = 0.2
s_or = 0.2
mu_w = 5e-4
mu_o = 1e-2

[[model.wells]]
name = "I1"
kind = "injector"
x = 310.0
y = 290.0
schedule = [[0.0, 40.0]]

[[model.wells]]
name = "P1"
kind = "producer"
x = 60.0
y = 60.0
schedule = [[0.0, 2.4e7]]

[[model.wells]]
name = "P2"
kind = "producer"
x = 540.0
y = 540.0
schedule = [[0.0, 2.4e7]]

[measurement]
times = [0.5, 1.0]

[noise]
sigma = 0.5

[noise.wells]
I1 = 2e4

[mcmc]
chains = 2
steps = 300
burn_in = 50
thin = 10
beta = 0.05
modes = 4

[[methods]]
method = "enkf"
ensemble_size = 8

[[methods]]
method = "ensrf"
ensemble_size = 8
localization = 300.0

[forecast]
extension = 1.0
max_samples = 5
quantities = ["bhp", "total_rate", "cumulative_oil"]

[[forecast.new_wells]]
name = "P3"
kind = "producer"
x = 540.0
y = 60.0
schedule = [[0.0, 2.4e7]]
active_from = 1.0
"#;

pub fn tiny(toml_text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(toml_text).expect("tiny config parses")
}
