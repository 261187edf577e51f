mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hmlab::harness::Setup;
use hmlab::model::ForwardModel;
use hmlab::schedule::Schedule;
use hmlab::single_phase::{MeasurementSchedule, SECONDS_PER_DAY};
use hmlab::two_phase::{peaceman_index, TwoPhaseConfig, TwoPhaseModel, TwoPhaseWell, WellKind};
use hmlab::{Field, Grid2D};

fn well(name: &str, kind: WellKind, x: f64, y: f64, v: f64) -> TwoPhaseWell {
    TwoPhaseWell {
        name: name.into(),
        kind,
        x,
        y,
        schedule: Schedule::constant(v),
        well_index: None,
        active_from: 0.0,
    }
}

fn config(horizon: f64, wells: Vec<TwoPhaseWell>) -> TwoPhaseConfig {
    TwoPhaseConfig {
        relperm: common::relperm(),
        porosity: 0.2,
        thickness: 1.0,
        well_radius: 0.1,
        initial_pressure: 2.5e7,
        initial_saturation: 0.2,
        horizon_years: horizon,
        dt_years: horizon / 10.0,
        cfl: 0.9,
        wells,
    }
}

#[test]
fn injector_pressure_by_hand() {
    let grid = Grid2D::new(9, 9, 900.0).unwrap();
    let wells = vec![
        well("I", WellKind::Injector, 450.0, 450.0, 50.0),
        well("P", WellKind::Producer, 50.0, 50.0, 2.4e7),
    ];
    let cfg = config(0.5, wells);
    let m = TwoPhaseModel::new(grid, cfg.clone(), MeasurementSchedule::all_wells(vec![0.5], 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let u = common::draw(grid, 2.0, &mut rng);
    let c = m.well_cells()[0];
    let omega = peaceman_index(&grid, u.values[c], cfg.thickness, cfg.well_radius);
    assert_eq!(m.well_indices(&u.values).unwrap()[0], omega);

    let traj = m.simulate(&u).unwrap();
    let s0 = &traj.snapshots[0];
    let lambda = cfg.relperm.mobilities_unchecked(s0.saturation[c]).1;
    let expect = 50.0 / SECONDS_PER_DAY / (omega * lambda) + s0.pressure[c];
    let got = traj
        .wells
        .iter()
        .find(|w| w.time == 0.0 && w.well == "I" && w.quantity == "bhp")
        .unwrap()
        .value;
    assert!((got - expect).abs() <= 1e-12 * expect);
}

#[test]
fn producers_at_reservoir_pressure_do_nothing() {
    let grid = Grid2D::new(6, 6, 600.0).unwrap();
    let wells = vec![
        well("P1", WellKind::Producer, 50.0, 50.0, 2.5e7),
        well("P2", WellKind::Producer, 450.0, 350.0, 2.5e7),
    ];
    let m = TwoPhaseModel::new(grid, config(1.0, wells), MeasurementSchedule::all_wells(vec![1.0], 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let u = common::draw(grid, 2.0, &mut rng);
    let s = Field::constant(grid, 0.3);
    let sol = m.solve_pressure(&u, &s, 0.0).unwrap();
    assert!(sol.well_rates.iter().all(|q| q.abs() <= 1e-12));
    assert!(sol.pressure.iter().all(|p| (p - 2.5e7).abs() <= 1e-6));
    let g = m.forward(&u.values).unwrap();
    assert!(g.iter().all(|q| q.abs() <= 1e-6));
}

#[test]
fn no_water_at_producers_before_breakthrough() {
    let grid = Grid2D::new(15, 15, 1500.0).unwrap();
    let wells = vec![
        well("I", WellKind::Injector, 50.0, 50.0, 20.0),
        well("P", WellKind::Producer, 1450.0, 1450.0, 2.4e7),
    ];
    let m = TwoPhaseModel::new(grid, config(0.2, wells), MeasurementSchedule::all_wells(vec![0.2], 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let traj = m.simulate(&common::draw(grid, 1.0, &mut rng)).unwrap();
    let pc = m.well_cells()[1];
    assert!(traj.snapshots.iter().all(|s| s.saturation[pc] == 0.2));
    assert_eq!(traj.volumes.produced_water, 0.0);
    assert!(traj.volumes.produced_oil > 0.0);
}

#[test]
fn small_preset_has_35_observations() {
    let s = Setup::new(common::preset("two_phase_small.toml")).unwrap();
    assert_eq!(s.slots.len(), 35);
    assert_eq!(s.model.forward().n_obs(), 35);
    for chunk in s.slots.chunks(5) {
        assert_eq!(chunk[0].well, "I1");
        assert!(chunk.iter().all(|o| o.time == chunk[0].time));
        assert!(chunk[1..].iter().all(|o| o.well.starts_with('P')));
    }
    let noise = s.noise_sigmas();
    assert_eq!(noise[0], 3.2e4);
}

#[test]
fn saturation_stays_between_residuals() {
    let grid = Grid2D::new(10, 10, 1000.0).unwrap();
    let wells = vec![
        well("I", WellKind::Injector, 500.0, 500.0, 300.0),
        well("P1", WellKind::Producer, 50.0, 50.0, 2.2e7),
        well("P2", WellKind::Producer, 950.0, 950.0, 2.2e7),
    ];
    let cfg = config(4.0, wells);
    let m = TwoPhaseModel::new(grid, cfg.clone(), MeasurementSchedule::all_wells(vec![2.0, 4.0], 3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let traj = m.simulate(&common::draw(grid, 2.0, &mut rng)).unwrap();
    let (lo, hi) = (cfg.relperm.s_min(), cfg.relperm.s_max());
    let last = traj.snapshots.last().unwrap();
    assert!(last.saturation.iter().all(|&s| s >= lo && s <= hi));
    assert!(last.saturation.iter().any(|&s| s > 0.5));
    assert!(traj.volumes.produced_water > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sources_balance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, u) = common::random_two_phase(&mut rng);
        let s = Field::constant(*m.grid(), m.config().initial_saturation);
        let sol = m.solve_pressure(&u, &s, 0.0).unwrap();
        let mut inj = 0.0;
        let mut prod = 0.0;
        for (w, spec) in m.config().wells.iter().enumerate() {
            match spec.kind {
                WellKind::Injector => inj += sol.well_rates[w],
                WellKind::Producer => prod += sol.well_rates[w],
            }
        }
        prop_assert!((inj - prod).abs() <= 1e-9 * inj);
    }

    #[test]
    fn volumes_account_for_the_injected_water(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, u) = common::random_two_phase(&mut rng);
        let cfg = m.config();
        let traj = m.simulate(&u).unwrap();
        let pv = cfg.porosity * cfg.thickness * m.grid().cell_area();
        let s0 = &traj.snapshots[0].saturation;
        let s1 = &traj.snapshots.last().unwrap().saturation;
        let stored: f64 = pv * s1.iter().zip(s0).map(|(a, b)| a - b).sum::<f64>();
        let v = &traj.volumes;
        let net = v.injected_water - v.produced_water;
        prop_assert!((stored - net).abs() <= 1e-8 * v.injected_water);
        // incompressible: total in equals total out
        prop_assert!((v.injected_water - v.produced_water - v.produced_oil).abs() <= 1e-8 * v.injected_water);
    }
}
