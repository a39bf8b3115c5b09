use num_complex::Complex64;

use super::*;
use crate::coprime::{doubly_coprime_stable, doubly_coprime_state_feedback, factorize, FactorMode};
use crate::linalg::spectral_radius;
use crate::lti::{internal_stability, PlantBlocks};

fn s(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

fn scalar_plant(a: f64) -> StateSpacePlant {
    StateSpacePlant::new(PlantBlocks::new(s(a), s(1.0), s(1.0), s(1.0), s(1.0))).unwrap()
}

/// Tridiagonal chain with self-loops scaled to spectral radius 0.5.
fn chain(n: usize) -> Mat {
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = 1.0;
        if i + 1 < n {
            a[(i, i + 1)] = 1.0;
            a[(i + 1, i)] = 1.0;
        }
    }
    let rho = spectral_radius(&a);
    a * (0.5 / rho)
}

fn state_feedback_plant(a: Mat) -> StateSpacePlant {
    let n = a.nrows();
    let i = Mat::identity(n, n);
    StateSpacePlant::new(PlantBlocks::new(a, i.clone(), i.clone(), i.clone(), i)).unwrap()
}

fn q01() -> YoulaParam {
    YoulaParam::new(Fir::scalar(&[0.1]))
}

/// `(Vr - Mr Q)(Ur - Nr Q)^-1` from the observer formulas evaluated
/// directly in the frequency domain.
fn observer_k_oracle(a: f64, f: f64, l: f64, q: &[f64], z: Complex64) -> Complex64 {
    let af = a + f;
    let r = 1.0 / (z - af);
    let mr = 1.0 + f * r;
    let nr = r;
    let vr = -f * r * l;
    let ur = 1.0 - r * l;
    let qz: Complex64 = q.iter().enumerate().map(|(k, &c)| c * z.powi(-(k as i32))).sum();
    (vr - mr * qz) / (ur - nr * qz)
}

#[test]
fn youla_controller_zero_q_state_feedback_is_minus_a() {
    let a = chain(3);
    let p = state_feedback_plant(a.clone());
    let f = doubly_coprime_state_feedback(&p).unwrap();
    let k = k_from_youla(&f, &YoulaParam::zero(3, 3), 6).unwrap();
    assert!(max_abs(&(k.coeff(0) + &a)) < 1e-15);
    assert!(k.coeffs()[1..].iter().all(|c| max_abs(c) < 1e-15));
}

#[test]
fn youla_controller_zero_q_trivial_factors_is_zero() {
    let p = scalar_plant(0.5);
    let f = doubly_coprime_stable(&p, 60).unwrap();
    let k = k_from_youla(&f, &YoulaParam::zero(1, 1), 10).unwrap();
    assert_eq!(k.max_abs(), 0.0);
}

#[test]
fn youla_controller_scalar_matches_rational_oracle() {
    let p = scalar_plant(0.5);
    let f = factorize(&p, FactorMode::Deadbeat, None).unwrap();
    let q = q01();
    for z in unit_circle_points(16) {
        let k = youla_k_at(&f, &q, z).unwrap()[(0, 0)];
        let oracle = observer_k_oracle(0.5, -0.5, -0.5, &[0.1], z);
        assert!((k - oracle).norm() < 1e-12, "{k} vs {oracle}");
    }
    // The FIR expansion is the series of S T^-1: K T = S through the horizon.
    let h = 40;
    let k = k_from_youla(&f, &q, h).unwrap();
    let (num, den) = youla_fraction(&f, &q).unwrap();
    let (kt, _) = k.mul_truncated(&den, h).unwrap();
    assert!(kt.max_abs_diff(&num.truncate(h).0).unwrap() < 1e-12);
}

#[test]
fn iop_controller_open_loop_is_zero() {
    let p22 = Fir::scalar(&[0.0, 1.0, 0.5]);
    let k = k_from_iop(&IopQuadruple::open_loop(&p22), 5).unwrap();
    assert_eq!(k.max_abs(), 0.0);
}

#[test]
fn youla_to_iop_trivial_factors_is_open_loop() {
    let p = scalar_plant(0.5);
    let f = doubly_coprime_stable(&p, 80).unwrap();
    let x = youla_to_iop(&f, &YoulaParam::zero(1, 1), 80).unwrap();
    assert!(x.max_abs_diff(&IopQuadruple::open_loop(&f.nl)).unwrap() == 0.0);
}

#[test]
fn youla_to_iop_state_feedback_u_is_vr_ml() {
    let a = chain(3);
    let p = state_feedback_plant(a.clone());
    let f = doubly_coprime_state_feedback(&p).unwrap();
    let x = youla_to_iop(&f, &YoulaParam::zero(3, 3), 4).unwrap();
    let expected = Fir::new(vec![-&a, &a * &a]).unwrap();
    assert!(x.u.max_abs_diff(&expected).unwrap() < 1e-15);
    assert!(verify_iop_subspace(&p, &x, 16).unwrap().max_residual < 1e-12);
}

#[test]
fn youla_to_iop_scalar_is_in_subspace_and_round_trips() {
    let p = scalar_plant(0.5);
    let f = factorize(&p, FactorMode::Deadbeat, None).unwrap();
    let q = q01();
    let x = youla_to_iop(&f, &q, 8).unwrap();
    let report = verify_iop_subspace(&p, &x, 16).unwrap();
    assert!(report.max_residual < 1e-10, "{report:?}");
    let back = iop_to_youla(&f, &x, 8).unwrap();
    assert!(back.q.max_abs_diff(&q.q).unwrap() < 1e-12);
    let gap = controller_gap(|z| youla_k_at(&f, &q, z), |z| iop_k_at(&x, z), 16).unwrap();
    assert!(gap < 1e-9, "{gap}");
}

#[test]
fn iop_to_youla_open_loop_trivial_factors_is_zero() {
    let p = scalar_plant(0.5);
    let f = doubly_coprime_stable(&p, 80).unwrap();
    let q = iop_to_youla(&f, &IopQuadruple::open_loop(&f.nl), 80).unwrap();
    assert_eq!(q.q.max_abs(), 0.0);
}

#[test]
fn iop_to_youla_rejects_points_outside_the_subspace() {
    let p = scalar_plant(0.5);
    let f = factorize(&p, FactorMode::Deadbeat, None).unwrap();
    let mut x = youla_to_iop(&f, &q01(), 8).unwrap();
    x.y = x.y.add(&Fir::scalar(&[0.1])).unwrap();
    assert!(matches!(iop_to_youla(&f, &x, 8), Err(Error::Residual { .. })));
    assert!(!verify_iop_subspace(&p, &x, 16).unwrap().pass);
}

#[test]
fn example1_reduced_iop_maps_to_zero_q() {
    let a = chain(3);
    let p = state_feedback_plant(a.clone());
    let reduced = StateFeedbackIop::new(&p).unwrap();
    let w = Fir::delayed(Mat::identity(3, 3), 1);
    let z = Fir::new(vec![Mat::identity(3, 3), -&a]).unwrap();
    assert!(reduced.residual(&w, &z) < 1e-15);
    let k = reduced.controller(&w, &z, 4).unwrap();
    assert!(max_abs(&(k.coeff(0) + &a)) < 1e-15 && k.trim(0.0).horizon() == 0);
    let x = reduced.complete(&w, &z).unwrap();
    let k = k_from_iop(&x, 4).unwrap();
    assert!(max_abs(&(k.coeff(0) + &a)) < 1e-14 && k.trim(1e-14).horizon() == 0);
    let f = doubly_coprime_state_feedback(&p).unwrap();
    let q = iop_to_youla(&f, &x, 6).unwrap();
    assert!(q.q.max_abs() < 1e-14, "{q:?}");
}

#[test]
fn open_loop_slp_maps_to_open_loop_iop() {
    let p = scalar_plant(0.5);
    let h = 80;
    let p22 = markov_expand_p22(&p, h);
    let x = IopQuadruple::open_loop(&p22);
    let slp = iop_to_slp(&p, &x, h).unwrap();
    let phi = Fir::new((0..=h).map(|k| if k == 0 { s(0.0) } else { s(0.5f64.powi(k as i32 - 1)) }).collect()).unwrap();
    assert!(slp.r.max_abs_diff(&phi).unwrap() < 1e-15);
    assert_eq!(slp.m.max_abs() + slp.n.max_abs() + slp.l.max_abs(), 0.0);
    let back = slp_to_iop(&p, &slp).unwrap();
    assert!(back.max_abs_diff(&x).unwrap() < 1e-15);
}

fn markov_expand_p22(p: &StateSpacePlant, h: usize) -> Fir {
    crate::lti::markov_expand(&p.p22(), h)
}

#[test]
fn iop_to_slp_matches_closed_loop_resolvent() {
    let p = scalar_plant(0.5);
    let f = factorize(&p, FactorMode::Deadbeat, None).unwrap();
    let q = q01();
    let x = youla_to_iop(&f, &q, 8).unwrap();
    let slp = iop_to_slp(&p, &x, 60).unwrap();
    for z in unit_circle_points(16) {
        let k = observer_k_oracle(0.5, -0.5, -0.5, &[0.1], z);
        let oracle = 1.0 / (z - 0.5 - k);
        let r = slp.r.eval_unchecked(z)[(0, 0)];
        assert!((r - oracle).norm() < 1e-8, "{r} vs {oracle}");
    }
}

#[test]
fn youla_slp_round_trip_and_commutation() {
    let p = scalar_plant(0.5);
    let f = factorize(&p, FactorMode::Deadbeat, None).unwrap();
    let q = q01();
    let slp = youla_to_slp(&p, &f, &q, 12).unwrap();
    assert!(verify_slp_subspace(&p, &slp).unwrap().max_residual < 1e-9);
    let back = slp_to_youla(&p, &f, &slp, 12).unwrap();
    assert!(back.q.max_abs_diff(&q.q).unwrap() < 1e-9);
    let via_slp = slp_to_iop(&p, &slp).unwrap();
    let direct = youla_to_iop(&f, &q, 12).unwrap();
    assert!(via_slp.max_abs_diff(&direct).unwrap() < 1e-10);
    let affine = YoulaSlpAffine::new(&p, &f, 12).unwrap().at(&q, 12).unwrap();
    assert!(affine.max_abs_diff(&slp).unwrap() < 1e-10);
    let ks = k_from_slp(&slp, Some(p.c2()), 20).unwrap();
    let kr = k_from_slp(&slp, None, 20).unwrap();
    let ky = k_from_youla(&f, &q, 20).unwrap();
    assert!(ks.max_abs_diff(&ky).unwrap() < 1e-9);
    assert!(kr.max_abs_diff(&ky).unwrap() < 1e-9);
}

#[test]
fn example1_slp_optimum_maps_to_zero_q() {
    let a = chain(3);
    let p = state_feedback_plant(a.clone());
    let reduced = StateFeedbackSlp::new(&p).unwrap();
    let r = Fir::delayed(Mat::identity(3, 3), 1);
    let m = Fir::delayed(-&a, 1);
    assert!(reduced.residual(&r, &m) < 1e-15);
    let k = reduced.controller(&r, &m, 3).unwrap();
    assert!(max_abs(&(k.coeff(0) + &a)) < 1e-15);
    let slp = reduced.complete(&r, &m).unwrap();
    assert!(verify_slp_subspace(&p, &slp).unwrap().pass);
    let f = doubly_coprime_state_feedback(&p).unwrap();
    let q = slp_to_youla(&p, &f, &slp, 6).unwrap();
    assert!(q.q.max_abs() < 1e-14);
    let x = slp_to_iop(&p, &slp).unwrap();
    let k = k_from_iop(&x, 4).unwrap();
    assert!(max_abs(&(k.coeff(0) + &a)) < 1e-14 && k.trim(1e-14).horizon() == 0);
}

#[test]
fn zero_m_state_feedback_is_open_loop() {
    let p = state_feedback_plant(chain(2));
    let reduced = StateFeedbackSlp::new(&p).unwrap();
    let r = Fir::delayed(Mat::identity(2, 2), 1);
    let m = Fir::zeros(2, 2, 1);
    assert_eq!(reduced.controller(&r, &m, 3).unwrap().max_abs(), 0.0);
    // Only valid when A is nilpotent: the residual is the A R_1 tail.
    assert!(reduced.residual(&r, &m) > 0.1);
}

#[test]
fn slp_verifier_flags_perturbations() {
    let a = chain(2);
    let p = state_feedback_plant(a.clone());
    let reduced = StateFeedbackSlp::new(&p).unwrap();
    let mut slp = reduced.complete(&Fir::delayed(Mat::identity(2, 2), 1), &Fir::delayed(-&a, 1)).unwrap();
    assert!(verify_slp_subspace(&p, &slp).unwrap().max_residual < 1e-12);
    slp.r = slp.r.add(&Fir::constant(Mat::identity(2, 2) * 0.1)).unwrap();
    let report = verify_slp_subspace(&p, &slp).unwrap();
    assert!(!report.pass && !report.r_strictly_proper);
}

#[test]
fn stable_reductions_agree() {
    let p = scalar_plant(0.5);
    let h = 80;
    let red = StablePlantReductions::new(&p, h).unwrap();
    let q = YoulaParam::new(Fir::scalar(&[0.2]));
    let f = red.factors().unwrap();
    let minus_q = q.q.neg();
    let x = red.iop_from_u(&minus_q).unwrap();
    let slp = red.slp_from_l(&minus_q).unwrap();
    assert!(verify_iop_subspace(&p, &x, 16).unwrap().max_residual < 1e-12);
    assert!(verify_slp_subspace(&p, &slp).unwrap().max_residual < 1e-12);
    for z in unit_circle_points(16) {
        // K = -0.2 / (1 - 0.2/(z - 0.5)).
        let oracle = -0.2 * (z - 0.5) / (z - 0.7);
        let ky = red.youla_k_at(&q, z).unwrap()[(0, 0)];
        let kg = youla_k_at(&f, &q, z).unwrap()[(0, 0)];
        let ki = iop_k_at(&x, z).unwrap()[(0, 0)];
        let ks = red.slp_k_at(&minus_q, z).unwrap()[(0, 0)];
        for k in [ky, kg, ki, ks] {
            assert!((k - oracle).norm() < 1e-10, "{k} vs {oracle}");
        }
    }
    let zero = YoulaParam::zero(1, 1);
    assert_eq!(red.youla_controller(&zero, 10).unwrap().max_abs(), 0.0);
    assert!(StablePlantReductions::new(&scalar_plant(1.5), 10).is_err());
}

#[test]
fn state_feedback_hypotheses_are_checked() {
    let p = scalar_plant(0.5);
    assert!(StateFeedbackSlp::new(&p).is_ok());
    let p2 = StateSpacePlant::new(PlantBlocks::new(s(0.5), s(1.0), s(2.0), s(1.0), s(1.0))).unwrap();
    assert!(StateFeedbackIop::new(&p2).is_ok());
    assert!(StateFeedbackYoula::new(&p2).is_err());
    let p3 = StateSpacePlant::new(PlantBlocks::new(s(0.5), s(1.0), s(1.0), s(1.0), s(3.0))).unwrap();
    assert!(StateFeedbackSlp::new(&p3).is_err());
}

#[test]
fn realizations_stabilize_unstable_plant() {
    let p = scalar_plant(2.0);
    let f = factorize(&p, FactorMode::Deadbeat, None).unwrap();
    let q = YoulaParam::new(Fir::scalar(&[0.1, -0.2]));
    let ky = youla_controller(&f, &q).unwrap();
    assert!(internal_stability(&p, &ky).unwrap().0);
    let x = youla_to_iop(&f, &q, 10).unwrap();
    let ki = iop_controller(&p, &x, 12).unwrap();
    assert!(internal_stability(&p, &ki).unwrap().0);
    let slp = youla_to_slp(&p, &f, &q, 12).unwrap();
    let ks = slp_controller(&slp).unwrap();
    assert!(internal_stability(&p, &ks).unwrap().0);
    for z in unit_circle_points(16) {
        let k = ky.as_state_space().eval(z).unwrap();
        let oracle = observer_k_oracle(2.0, -2.0, -2.0, &[0.1, -0.2], z);
        assert!((k[(0, 0)] - oracle).norm() < 1e-10);
        for other in [&ki, &ks] {
            let ko = other.as_state_space().eval(z).unwrap();
            assert!((ko[(0, 0)] - oracle).norm() < 1e-9);
        }
    }
}
