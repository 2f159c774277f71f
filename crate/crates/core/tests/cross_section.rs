mod common;

use common::example_cfg;
use lamb_strip::cross_section::*;
use lamb_strip::linalg::{CMat, CVec, C64};
use lamb_strip::Error;
use proptest::prelude::*;

fn forms() -> FormMatrices<f64> {
    let cfg = example_cfg();
    assemble_forms(&cfg, &build_grid(&cfg, 5, 3).unwrap())
}

fn hermitian_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).norm() / m.norm()
}

#[test]
fn coefficient_matrices_are_hermitian() {
    let f = forms();
    for m in [&f.a0, &f.m, &f.b, &f.c, &f.mass] {
        assert!(hermitian_defect(m) < 1e-15);
    }
    assert!(f.e.iter().all(|z| z.im == 0.0));
}

#[test]
fn constant_fields_are_strain_free() {
    let f = forms();
    let n = f.n;
    for comp in 0..3 {
        let mut u = CVec::zeros(3 * n);
        u.rows_mut(comp * n, n).fill(C64::new(1.0, 0.0));
        assert!((&f.a0 * &u).norm() < 1e-13);
        assert!((&f.e * &u).norm() < 1e-13);
        // each component's mass integrates to the thickness
        assert!(((u.adjoint() * &f.mass * &u)[(0, 0)].re - 2.0).abs() < 1e-13);
    }
}

#[test]
fn in_plane_rotation_is_traction_free() {
    // u1 = theta x3, u3 = -theta x1, traced at x3 = 0
    let cfg = example_cfg();
    let grid = build_grid(&cfg, 4, 3).unwrap();
    let f = assemble_forms(&cfg, &grid);
    let n = f.n;
    let theta = 0.3;
    let mut u = CVec::zeros(3 * n);
    let mut ux = CVec::zeros(3 * n);
    for (a, &x) in grid.nodes.iter().enumerate() {
        u[2 * n + a] = C64::new(-theta * x, 0.0);
        ux[a] = C64::new(theta, 0.0);
    }
    let t = &f.c * &ux + &f.e * &u;
    assert!(t.norm() < 1e-13, "{}", t.norm());
}

#[test]
fn single_precision_assembly_tracks_double() {
    let cfg32 = ProblemConfig::<f32>::new(2.0, 1.0, 1.0, 1.0, 1.0);
    let f32_forms = assemble_forms(&cfg32, &build_grid(&cfg32, 5, 3).unwrap());
    let f = forms();
    let diff = f32_forms.a().map(|z| C64::new(z.re as f64, z.im as f64)) - f.a();
    assert!(diff.norm() < 1e-5 * f.a().norm());
}

#[test]
fn unsupported_derivative_order() {
    let f = forms();
    assert!(matches!(pencil_derivative(&f, C64::new(0.0, 1.0), 3), Err(Error::UnsupportedOrder(3))));
}

#[test]
fn invalid_inputs() {
    let bad = ProblemConfig::new(-1.0, 1.0, 1.0, 1.0, 1.0);
    match validate_config(bad) {
        Err(Error::InvalidMaterial(msg)) => assert!(msg.contains("3λ+2μ")),
        other => panic!("{other:?}"),
    }
    assert!(validate_config(ProblemConfig::new(2.0, 1.0, 1.0, 1.0, 0.0)).is_err());
    assert!(build_grid(&example_cfg(), 0, 3).is_err());
}

proptest! {
    #[test]
    fn pencil_adjoint_reflects_nu(re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let f = forms();
        let nu = C64::new(re, im);
        let lhs = evaluate_pencil(&f, nu).adjoint();
        let rhs = evaluate_pencil(&f, -nu.conj());
        prop_assert!((lhs - &rhs).norm() < 1e-13 * rhs.norm());
    }

    #[test]
    fn pencil_derivatives_match_differences(re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let f = forms();
        let nu = C64::new(re, im);
        let h = 1e-4;
        let fd1 = (evaluate_pencil(&f, nu + h) - evaluate_pencil(&f, nu - h)) / C64::new(2.0 * h, 0.0);
        let d1 = pencil_derivative(&f, nu, 1).unwrap();
        prop_assert!((fd1 - &d1).norm() < 1e-6 * (1.0 + d1.norm()));
        let fd2 = (pencil_derivative(&f, nu + h, 1).unwrap() - pencil_derivative(&f, nu - h, 1).unwrap())
            / C64::new(2.0 * h, 0.0);
        let d2 = pencil_derivative(&f, nu, 2).unwrap();
        prop_assert!((fd2 - &d2).norm() < 1e-6 * d2.norm());
    }

    #[test]
    fn pencil_is_linear_in_the_field(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in 0u64..1000) {
        let f = forms();
        let dim = f.dim();
        let u = CVec::from_fn(dim, |i, _| C64::new(((i as u64 * 31 + seed) % 17) as f64, 1.0));
        let v = CVec::from_fn(dim, |i, _| C64::new(1.0, ((i as u64 * 7 + seed) % 5) as f64));
        let l = evaluate_pencil(&f, C64::new(0.2, 0.7));
        let alpha = C64::new(a, b);
        let lhs = &l * (&u * alpha + &v);
        let rhs = (&l * &u) * alpha + &l * &v;
        prop_assert!((lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }
}
