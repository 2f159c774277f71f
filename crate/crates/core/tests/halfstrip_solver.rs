mod common;

use std::sync::OnceLock;

use common::*;
use lamb_strip::halfstrip_solver::*;
use lamb_strip::linalg::{CVec, C64};
use lamb_strip::modes_flux::{weak_traction, Field, ModalBasis};
use lamb_strip::pencil_spectrum::Branch;
use lamb_strip::Error;

struct Fixture {
    s: Setup,
    basis: ModalBasis,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let s = default_setup(1.0);
        let basis = basis(&s);
        Fixture { s, basis }
    })
}

fn domain() -> TruncatedDomain {
    TruncatedDomain::new(DEFAULT_LENGTH, DEFAULT_ELEMENT_LENGTH, 4, DEFAULT_EVANESCENT).unwrap()
}

fn solver(f: &Fixture) -> HalfStripSolver<'_> {
    HalfStripSolver::new(&f.s.forms, &f.basis, &f.s.window, &domain()).unwrap()
}

fn sh0_index(b: &ModalBasis) -> usize {
    b.outgoing().iter().position(|u| u.branch() == Some(Branch::Sh)).unwrap()
}

#[test]
fn lift_matches_data_and_support() {
    let f = fixture();
    let d = domain();
    let g = DirichletData { g: smooth_random_trace(&f.s.grid, 1) };
    let u0 = lift_dirichlet(&g, &d);
    assert_eq!((&u0[0] - &g.g).norm(), 0.0);
    for (x, v) in d.node_positions().iter().zip(&u0) {
        if *x >= 1.0 {
            assert_eq!(v.norm(), 0.0);
        }
    }
    let zero = lift_dirichlet(&DirichletData { g: CVec::zeros(f.s.forms.dim()) }, &d);
    assert!(zero.iter().all(|v| v.norm() == 0.0));
}

#[test]
fn zero_data_gives_zero_solution() {
    let f = fixture();
    let sol = solver(f).solve(&DirichletData { g: CVec::zeros(f.s.forms.dim()) });
    assert!(sol.field.nodes.iter().all(|v| v.norm() == 0.0));
    assert!(sol.amplitudes.iter().all(|a| a.norm() == 0.0));
}

#[test]
fn outgoing_traces_are_continued_exactly() {
    let f = fixture();
    let hs = solver(f);
    let d = domain();
    for (k, u) in f.basis.outgoing().iter().enumerate() {
        let sol = hs.solve(&DirichletData { g: u.value(0.0) });
        for (j, a) in sol.amplitudes.iter().enumerate() {
            let target = if j == k { 1.0 } else { 0.0 };
            assert!((a - target).norm() < 1e-6, "mode {k}: a_{j} = {a}");
        }
        for x in d.node_positions().into_iter().filter(|x| *x <= d.length - 1.0) {
            let err = (sol.field.value(x) - u.value(x)).norm() / u.value(x).norm();
            assert!(err < 1e-5, "mode {k} at {x}: {err:.2e}");
        }
        assert!(sol.residual < 1e-12);
    }
}

#[test]
fn decaying_sh_mode_is_continued_without_outgoing_content() {
    // u2 = sin(pi x1 / 2) e^{nu x3} with nu^2 = pi^2/4 - 1
    let f = fixture();
    let hs = solver(f);
    let nu = -(std::f64::consts::PI.powi(2) / 4.0 - 1.0).sqrt();
    let n = f.s.forms.n;
    let mut g = CVec::zeros(3 * n);
    for (a, &x) in f.s.grid.nodes.iter().enumerate() {
        g[n + a] = C64::new((std::f64::consts::FRAC_PI_2 * x).sin(), 0.0);
    }
    let sol = hs.solve(&DirichletData { g: g.clone() });
    assert!(sol.amplitudes.iter().all(|a| a.norm() < 1e-8));
    for x in [0.5, 2.0, 4.0] {
        let exact = &g * C64::new((nu * x).exp(), 0.0);
        assert!((sol.field.value(x) - &exact).norm() < 1e-6 * g.norm());
    }
}

#[test]
fn closure_reproduces_outgoing_and_decaying_tractions() {
    let f = fixture();
    let hs = solver(f);
    let l = hs.domain().length;
    for (k, u) in f.basis.outgoing().iter().enumerate() {
        let t = hs.closure.apply(&u.value(l)).unwrap();
        let exact = weak_traction(&f.s.forms, u, l);
        assert!((t - &exact).norm() < 1e-8 * exact.norm(), "mode {k}");
    }
    for d in &hs.closure.decaying {
        let t = hs.closure.apply(&d.value).unwrap();
        assert!((t - &d.traction).norm() < 1e-8 * d.traction.norm());
    }
    assert_eq!(hs.closure.apply(&CVec::zeros(f.s.forms.dim())).unwrap().norm(), 0.0);
}

#[test]
fn scattering_matrix_of_the_clamped_end() {
    let f = fixture();
    let sm = solver(f).scattering_matrix().unwrap();
    assert_eq!(sm.s.shape(), (3, 3));
    assert!(sm.unitarity_residual < 1e-6, "{:.2e}", sm.unitarity_residual);
    let k = sh0_index(&f.basis);
    assert!((sm.s[(k, k)] + 1.0).norm() < 1e-8);
    for j in 0..3 {
        if j != k {
            assert!(sm.s[(k, j)].norm() < 1e-10 && sm.s[(j, k)].norm() < 1e-10);
        }
        let row: f64 = (0..3).map(|c| sm.s[(j, c)].norm_sqr()).sum();
        assert!((row - 1.0).abs() < 1e-6);
    }
}

#[test]
fn end_reflection_field_vanishes_on_the_end() {
    let f = fixture();
    let (eta, row) = solver(f).end_reflection(0).unwrap();
    assert_eq!(eta.field.nodes[0].norm(), 0.0);
    assert_eq!(row.len(), 3);
    assert!(matches!(solver(f).end_reflection(7), Err(Error::IndexOutOfRange(_))));
}

#[test]
fn zeta_fields_carry_unit_outgoing_content() {
    let f = fixture();
    let hs = solver(f);
    for k in 0..f.basis.t {
        let z = hs.zeta(k).unwrap();
        assert_eq!(z.nodes[0].norm(), 0.0);
        for (j, a) in hs.extract(&z, f.basis.outgoing()).into_iter().enumerate() {
            let target = if j == k { 1.0 } else { 0.0 };
            assert!((a - target).norm() < 1e-6, "zeta_{k}: {a}");
        }
    }
}

#[test]
fn green_formula_matches_extraction() {
    let f = fixture();
    let hs = solver(f);
    let zetas = hs.zeta_fields().unwrap();
    let sh0 = &f.basis.outgoing()[sh0_index(&f.basis)];
    let (dev, a, _) = hs.coefficient_crosscheck(&DirichletData { g: sh0.value(0.0) }, &zetas);
    assert!(dev < 1e-6);
    assert!((a[sh0_index(&f.basis)] - 1.0).norm() < 1e-6);
    let (dev0, a0, b0) = hs.coefficient_crosscheck(&DirichletData { g: CVec::zeros(f.s.forms.dim()) }, &zetas);
    assert_eq!(dev0, 0.0);
    assert!(a0.iter().chain(&b0).all(|z| z.norm() == 0.0));
    for seed in [11, 12] {
        let g = DirichletData { g: smooth_random_trace(&f.s.grid, seed) };
        assert!(hs.coefficient_crosscheck(&g, &zetas).0 < 1e-5);
    }
}

#[test]
fn dtn_map_properties() {
    let f = fixture();
    let hs = solver(f);
    let dtn = hs.dtn_operator().unwrap();
    let n = f.s.forms.n;
    // SH0 trace: sigma_23 = i mu c
    let sh0 = &f.basis.outgoing()[sh0_index(&f.basis)];
    let g = sh0.value(0.0);
    let t = dtn.apply(&g);
    for a in 0..n {
        assert!((t[n + a] - C64::new(0.0, f.s.cfg.lame_mu) * g[n + a]).norm() < 1e-6 * g[n + a].norm());
    }
    // linearity
    let h = smooth_random_trace(&f.s.grid, 3);
    let alpha = C64::new(0.3, -1.7);
    let lin = dtn.apply(&(&h * alpha)) - dtn.apply(&h) * alpha;
    assert!(lin.norm() < 1e-12 * dtn.apply(&h).norm() * alpha.norm());
    // weak-form identity: g^H t_weak = -b(u, u0)
    let gd = DirichletData { g: h.clone() };
    let sol = hs.solve(&gd);
    let u0 = lift_dirichlet(&gd, hs.domain());
    let lhs = h.dotc(&(&dtn.weak * &h));
    let rhs = -hs.system.form(&sol.field.nodes, &u0);
    assert!((lhs - rhs).norm() < 1e-6 * lhs.norm());
}

#[test]
fn remainder_decays_at_the_gap_rate() {
    let f = fixture();
    let sol = solver(f).solve(&DirichletData { g: smooth_random_trace(&f.s.grid, 5) });
    let gap = 2.0 * f.s.window.delta;
    assert!((sol.decay.slope + gap).abs() < 0.1 * gap, "slope {}", sol.decay.slope);
    assert_eq!(sol.decay.slab_norms.len(), 8);
}

#[test]
fn amplitudes_stabilize_with_length() {
    let f = fixture();
    let g = DirichletData { g: smooth_random_trace(&f.s.grid, 9) };
    let amps = |l: f64| {
        let d = TruncatedDomain::new(l, DEFAULT_ELEMENT_LENGTH, 4, DEFAULT_EVANESCENT).unwrap();
        HalfStripSolver::new(&f.s.forms, &f.basis, &f.s.window, &d).unwrap().solve(&g).amplitudes
    };
    let (a, b) = (amps(8.0), amps(10.0));
    let dev = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    assert!(dev < 1e-8, "{dev:.2e}");
}

#[test]
fn cutoff_frequency_is_rejected() {
    let s = default_setup(std::f64::consts::FRAC_PI_2);
    let b = basis(&s);
    let r = HalfStripSolver::new(&s.forms, &b, &s.window, &domain());
    assert!(matches!(r, Err(Error::AssumptionViolation(_))));
}
