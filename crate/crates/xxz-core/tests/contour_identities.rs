use std::f64::consts::PI;

use proptest::prelude::*;
use xxz_core::contour::{
    eval_identity_n2, jav_correction_active, phi11, realize, reduce_residue, ContourId,
    ContourSetup, TestFunctionJ,
};
use xxz_core::Complex64;

fn anisotropy() -> impl Strategy<Value = f64> {
    prop_oneof![0.12..0.45f64, 0.55..0.88f64].prop_map(|x| x * PI)
}

fn velocity() -> impl Strategy<Value = f64> {
    prop_oneof![1.2..3.0f64, 0.1..0.9f64, -0.9..-0.1f64, -3.0..-1.2f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi11_is_i_pi_periodic(re in -3.0..3.0f64, im in -1.0..1.0f64, zeta in anisotropy()) {
        let x = Complex64::new(re, im);
        prop_assume!(phi11(x, zeta).is_ok());
        let shifted = phi11(x + Complex64::new(0.0, PI), zeta).unwrap();
        let base = phi11(x, zeta).unwrap();
        prop_assert!((shifted - base).norm() <= 1e-10 * base.norm().max(1.0));
    }

    #[test]
    fn cosh_shift_functions_are_admissible(re in -3.0..3.0f64, im in 0.5..3.0f64, flip in any::<bool>()) {
        let w = Complex64::new(re, if flip { -im } else { im });
        let j = TestFunctionJ::cosh_shift(2, w).unwrap();
        prop_assert!(j.check_invariants(11).is_ok());
        for p in &j.poles {
            prop_assert!((((2.0 * p).cosh() - w).norm()) < 1e-9);
        }
    }

    #[test]
    fn every_contour_is_a_chain_of_valid_polylines(zeta in anisotropy(), v in velocity()) {
        let setup = ContourSetup::new(zeta, v, 1.0);
        for id in ContourId::ALL {
            let spec = realize(id, &setup).unwrap();
            for piece in &spec.pieces {
                prop_assert!(piece.polyline().is_ok());
                prop_assert!(piece.weight.is_finite() && piece.weight != 0.0);
            }
        }
    }

    #[test]
    fn jav_weight_enters_only_on_its_anisotropy_window(zeta in anisotropy(), v in velocity()) {
        let setup = ContourSetup::new(zeta, v, 1.0);
        let thirds = realize(ContourId::C3AMod, &setup)
            .unwrap()
            .pieces
            .iter()
            .filter(|p| (p.weight.abs() - 1.0 / 3.0).abs() < 1e-12)
            .count();
        prop_assert_eq!(thirds > 0, jav_correction_active(zeta));
    }
}

proptest! {
    // Each case is a full double contour integral.
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn two_hole_identity_at_random_parameters(zeta in anisotropy(), v in velocity()) {
        let j = TestFunctionJ::cosh_shift(2, Complex64::new(-1.5, 2.0)).unwrap();
        let r = eval_identity_n2(&j, &ContourSetup::new(zeta, v, 1.0)).unwrap();
        prop_assert!(r.pass, "rel_diff {}", r.rel_diff);
        prop_assert!(r.min_pole_distance >= 1e-3);
    }

    #[test]
    fn reductions_hold_at_random_anisotropy(zeta in anisotropy()) {
        let j2 = TestFunctionJ::cosh_shift(2, Complex64::new(2.0, 1.5)).unwrap();
        prop_assert!(reduce_residue(&j2, zeta, &[0, 1]).unwrap().max_check_error < 1e-8);
        prop_assume!(((3.0 * zeta).sin()).abs() > 0.05);
        let j3 = TestFunctionJ::cosh_shift(3, Complex64::new(0.5, -2.5)).unwrap();
        for target in [&[1, 1, 0][..], &[0, 0, 1][..]] {
            prop_assert!(reduce_residue(&j3, zeta, target).unwrap().max_check_error < 1e-8);
        }
    }
}

#[test]
fn spec_example_residue_at_fixed_point() {
    // Residue of J20 at nu2 = nu1 - i zeta equals the two-string closed form.
    let zeta = 0.4 * PI;
    let j = TestFunctionJ::cosh_shift(2, Complex64::new(2.0, 1.5)).unwrap();
    let reduced = reduce_residue(&j, zeta, &[0, 1]).unwrap();
    let nu1 = Complex64::new(0.3, 0.0);
    let closed = reduced.evaluate(&[nu1 - Complex64::new(0.0, 0.5 * zeta)]).unwrap();
    let direct = zeta.sin().powi(2) / (2.0 * zeta).sin() * j.tilde(&[nu1, nu1 - Complex64::new(0.0, zeta)]);
    assert!((closed - direct).norm() < 1e-14 * direct.norm());
}
