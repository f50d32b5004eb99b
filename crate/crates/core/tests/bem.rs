use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rough_contact::bem::{
    effective_area, solve_contact, solve_contact_with, InfluenceOperator, InitialActiveSet, LoadCase, Material,
    SolverOptions,
};
use rough_contact::surface::{rmd_generate, shift_to_datum, HeightField, SurfaceSpec};

fn rough(seed: u64) -> HeightField {
    shift_to_datum(&rmd_generate(&SurfaceSpec::new(1000.0, 5, 0.65, 8.0, seed)).unwrap())
}

#[test]
fn far_field_matches_point_load() {
    let mat = Material::new(2.0, 0.25).unwrap();
    let g = 7.8125;
    for (di, dj) in [(20, 0), (0, 25), (14, 15), (30, 40), (64, 3)] {
        let r = g * ((di * di + dj * dj) as f64).sqrt();
        let point = g * g / (std::f64::consts::PI * mat.composite_modulus() * r);
        let c = InfluenceOperator::coefficient_at(g, mat, di, dj);
        assert!((c - point).abs() / point < 0.01, "offset ({di},{dj}): {c} vs {point}");
    }
}

#[test]
fn dense_operator_is_symmetric_positive_definite() {
    let op = InfluenceOperator::new(8, 1.5, Material::default()).unwrap();
    let h = op.assemble_dense();
    assert_eq!(h.nrows(), 64);
    assert!((&h - h.transpose()).amax() < 1e-14 * h.amax());
    let eig = SymmetricEigen::new(h);
    assert!(eig.eigenvalues.min() > 0.0, "min eigenvalue {}", eig.eigenvalues.min());
}

#[test]
fn contact_grows_with_displacement() {
    let f = rough(21);
    let mat = Material::default();
    let a = solve_contact(&f, LoadCase::new(15.0).unwrap(), mat, 1e-8).unwrap();
    let b = solve_contact(&f, LoadCase::new(25.0).unwrap(), mat, 1e-8).unwrap();
    assert!(b.effective_area > a.effective_area);
    assert!(a.contact_mask.iter().zip(&b.contact_mask).all(|(x, y)| !*x || *y));
    let mut last = 0.0;
    for d in [2.0, 5.0, 10.0, 20.0, 40.0] {
        let s = solve_contact(&f, LoadCase::new(d).unwrap(), mat, 1e-8).unwrap();
        assert!(s.total_force >= last);
        last = s.total_force;
    }
}

#[test]
fn contact_pattern_ignores_modulus() {
    let f = rough(5);
    let load = LoadCase::new(20.0).unwrap();
    let a = solve_contact(&f, load, Material::new(1.0, 0.3).unwrap(), 1e-10).unwrap();
    let b = solve_contact(&f, load, Material::new(210.0, 0.3).unwrap(), 1e-10).unwrap();
    assert_eq!(a.contact_mask, b.contact_mask);
    assert_eq!(a.effective_area, b.effective_area);
    let pmax = a.pressures.iter().cloned().fold(0.0, f64::max);
    for (p, q) in a.pressures.iter().zip(&b.pressures) {
        assert!((p * 210.0 - q).abs() <= 1e-7 * 210.0 * pmax);
    }
}

#[test]
fn area_formula() {
    assert_eq!(effective_area(0, 1.0, 10.0), 0.0);
    assert_eq!(effective_area(25, 2.0, 10.0), 100.0);
}

#[test]
fn invalid_loads_are_rejected() {
    assert!(LoadCase::new(0.0).is_err());
    assert!(LoadCase::new(-1.0).is_err());
    assert!(LoadCase::new(f64::NAN).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fft_product_matches_direct_sum(n in 2usize..20, seed in any::<u64>()) {
        let op = InfluenceOperator::new(n, 3.0, Material::default()).unwrap();
        let mut s = seed;
        let p: Vec<f64> = (0..n * n)
            .map(|_| {
                s = rough_contact::rng::splitmix64(s);
                (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        let (mut fast, mut slow) = (vec![0.0; n * n], vec![0.0; n * n]);
        op.apply(&p, &mut fast, &mut op.workspace());
        op.apply_direct(&p, &mut slow);
        let scale = slow.iter().cloned().fold(0.0, f64::max);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn lcp_conditions_and_start_independence(seed in any::<u64>(), delta in 5.0f64..45.0) {
        let f = rough(seed);
        let load = LoadCase::new(delta).unwrap();
        let mat = Material::default();
        let tol = 1e-8;
        let a = solve_contact_with(&f, load, mat, &SolverOptions { tol, initial: InitialActiveSet::Empty, ..Default::default() }).unwrap();
        let b = solve_contact_with(&f, load, mat, &SolverOptions { tol, ..Default::default() }).unwrap();
        let pnorm = a.pressures.iter().map(|p| p * p).sum::<f64>().sqrt();
        prop_assert!(a.pressures.iter().all(|&p| p >= 0.0));
        prop_assert!(a.gaps.iter().all(|&w| w >= -tol * delta));
        let ptw: f64 = a.pressures.iter().zip(&a.gaps).map(|(p, w)| p * w).sum();
        prop_assert!(ptw.abs() <= tol * pnorm * delta);
        prop_assert_eq!(&a.contact_mask, &b.contact_mask);
        let pmax = a.pressures.iter().cloned().fold(0.0, f64::max);
        for (p, q) in a.pressures.iter().zip(&b.pressures) {
            prop_assert!((p - q).abs() <= 10.0 * tol * pmax);
        }
    }
}
