use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use hmlab::da::{build_localization, enkf_analyze, ensrf_analyze, gaspari_cohn, linear_gaussian_posterior, Ensemble};
use hmlab::Grid2D;

fn normals(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_ensemble(rng: &mut ChaCha8Rng, nu: usize, nw: usize, ne: usize) -> Ensemble {
    let d = nu + 1 + nw;
    let z = normals(rng, d, d) * normals(rng, d, ne);
    Ensemble {
        u: z.rows(0, nu).into_owned(),
        v: z.rows(nu, 1).into_owned(),
        w: z.rows(nu + 1, nw).into_owned(),
    }
}

fn deviations(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = m.column_mean();
    let mut d = m.clone();
    for mut c in d.column_iter_mut() {
        c -= &mean;
    }
    d
}

/// Distance of each column of `x` from the column span of `basis`.
fn span_residual(basis: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    let svd = basis.clone().svd(true, false);
    let u = svd.u.unwrap();
    let tol = 1e-10 * svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol).collect();
    let q = u.select_columns(&keep);
    let r = x - &q * (q.transpose() * x);
    r.amax() / x.amax()
}

#[test]
fn enkf_update_stays_in_the_ensemble_span() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    // more parameters than members so the span is a proper subspace
    let (nu, nw, ne) = (40, 3, 8);
    let ens = random_ensemble(&mut rng, nu, nw, ne);
    let y = vec![0.5, -1.0, 2.0];
    let var = vec![0.3, 0.3, 0.3];
    let out = enkf_analyze(&ens, &y, &var, &mut rng, None).unwrap();
    let du = deviations(&ens.u);
    let shift = &out.u - &ens.u;
    assert!(span_residual(&du, &shift) < 1e-10);
    let out = ensrf_analyze(&ens, &y, &var, &mut rng, None).unwrap();
    let mean_f = ens.u.column_mean();
    let mut rel = out.u.clone();
    for mut c in rel.column_iter_mut() {
        c -= &mean_f;
    }
    assert!(span_residual(&du, &rel) < 1e-10);
}

#[test]
fn localization_entries_follow_distance() {
    let grid = Grid2D::new(8, 8, 800.0).unwrap();
    let locs = vec![(150.0, 150.0), (620.0, 410.0)];
    let c = 200.0;
    let spec = build_localization(&grid, &locs, c).unwrap();
    for k in 0..grid.n_cells() {
        let (x, y) = grid.cell_center(k);
        for (l, &(a, b)) in locs.iter().enumerate() {
            let r = ((x - a).powi(2) + (y - b).powi(2)).sqrt();
            assert_eq!(spec.rho_uw[(k, l)], gaspari_cohn(r, c));
            if r >= 2.0 * c {
                assert_eq!(spec.rho_uw[(k, l)], 0.0);
            }
        }
    }
    assert_eq!(spec.rho_ww[(0, 0)], 1.0);
    assert_eq!(spec.rho_ww[(0, 1)], spec.rho_ww[(1, 0)]);
}

#[test]
fn wide_localization_approaches_the_global_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let grid = Grid2D::new(4, 4, 400.0).unwrap();
    let ens = random_ensemble(&mut rng, 16, 2, 12);
    let locs = vec![(110.0, 90.0), (290.0, 310.0)];
    let spec = build_localization(&grid, &locs, 1e9).unwrap();
    let y = vec![1.0, -1.0];
    let var = vec![0.5, 0.5];
    let a = ensrf_analyze(&ens, &y, &var, &mut ChaCha8Rng::seed_from_u64(1), None).unwrap();
    let b = ensrf_analyze(&ens, &y, &var, &mut ChaCha8Rng::seed_from_u64(1), Some(&spec)).unwrap();
    assert!((&a.u - &b.u).amax() <= 1e-9 * a.u.amax());
}

#[test]
fn ensrf_matches_closed_form_for_a_linear_observation() {
    // w = B u exactly, so the analysis mean is the Kalman update with the sample covariance
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let (nu, nw, ne) = (5, 2, 30);
    let b = normals(&mut rng, nw, nu);
    let u = normals(&mut rng, nu, ne);
    let ens = Ensemble {
        w: &b * &u,
        v: DMatrix::zeros(1, ne),
        u,
    };
    let y = vec![0.3, -0.7];
    let var = vec![0.2, 0.4];
    let out = ensrf_analyze(&ens, &y, &var, &mut rng, None).unwrap();
    let du = deviations(&ens.u);
    let c = &du * du.transpose() / (ne as f64 - 1.0);
    let gamma = DMatrix::from_diagonal(&DVector::from_column_slice(&var));
    let m0 = ens.u.column_mean();
    let (m, cov) = linear_gaussian_posterior(&b, &m0, &c, &DVector::from_column_slice(&y), &gamma).unwrap();
    let da = deviations(&out.u);
    let ca = &da * da.transpose() / (ne as f64 - 1.0);
    assert!((out.u.column_mean() - m).amax() <= 1e-10);
    assert!((ca - &cov).norm() <= 1e-10 * cov.norm());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn taper_matrix_is_positive_semidefinite(seed in any::<u64>(), k in 2usize..25, c in 10.0f64..900.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid2D::new(10, 10, 1000.0).unwrap();
        let locs: Vec<(f64, f64)> = (0..k)
            .map(|_| (rng.random_range(1.0..999.0), rng.random_range(1.0..999.0)))
            .collect();
        let spec = build_localization(&grid, &locs, c).unwrap();
        let e = spec.rho_ww.symmetric_eigen().eigenvalues.min();
        prop_assert!(e >= -1e-12, "min eigenvalue {}", e);
    }

    #[test]
    fn taper_is_monotone_and_bounded(c in 1.0f64..1000.0, a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (ga, gb) = (gaspari_cohn(lo * c, c), gaspari_cohn(hi * c, c));
        prop_assert!(ga >= gb - 1e-15);
        prop_assert!((0.0..=1.0).contains(&ga));
    }
}
