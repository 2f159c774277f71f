mod common;

use common::*;
use lamb_strip::cross_section::ProblemConfig;
use lamb_strip::linalg::C64;
use lamb_strip::pencil_spectrum::*;
use lamb_strip::Error;

#[test]
fn sh_axis_and_real_pairs_match_closed_form() {
    for omega in [0.5, 1.0, 2.3] {
        let s = default_setup(omega);
        let exact = sh_closed_form(&s.cfg, 1.5);
        let found: Vec<C64> = modes_in_strip(&s.forms, 1.5).modes.iter().filter(|m| m.branch == Branch::Sh).map(|m| m.nu).collect();
        for nu in &found {
            let err = exact.iter().map(|e| (e - nu).norm()).fold(f64::INFINITY, f64::min);
            assert!(err < 1e-8, "omega {omega}: {nu} off by {err:.2e}");
        }
        let inside = exact.iter().filter(|e| e.re.abs() < 1.5).count();
        assert_eq!(found.len(), inside, "omega {omega}");
    }
}

#[test]
fn lamb_determinant_roots_match_rayleigh_lamb() {
    let cfg = example_cfg();
    let det = |k: f64| lamb_determinant(&cfg, C64::new(0.0, k)).unwrap().re;
    let roots = scan_roots(det, 1e-3, 2.5, 500);
    let closed = rayleigh_lamb_roots(&cfg);
    assert_eq!(roots.len(), closed.len(), "{roots:?} vs {closed:?}");
    for (a, b) in roots.iter().zip(&closed) {
        assert!((a - b).abs() < 1e-9 * b, "{a} vs {b}");
    }
    // the determinant is real on the imaginary axis
    let z = lamb_determinant(&cfg, C64::new(0.0, 0.8)).unwrap();
    assert!(z.im.abs() < 1e-10 * z.re.abs());
}

#[test]
fn in_plane_axis_modes_match_rayleigh_lamb() {
    for omega in [0.5, 1.0, 2.0] {
        let s = default_setup(omega);
        let closed = rayleigh_lamb_roots(&s.cfg);
        let ks: Vec<f64> = s
            .modes
            .propagating()
            .filter(|m| m.branch == Branch::InPlane && m.nu.im > 0.0)
            .map(|m| m.nu.im)
            .collect();
        assert_eq!(ks.len(), closed.len());
        for k in ks {
            let err = closed.iter().map(|c| (c - k).abs() / c).fold(f64::INFINITY, f64::min);
            assert!(err < 1e-8, "omega {omega} k {k} rel err {err:.2e}");
        }
    }
}

#[test]
fn off_axis_spectrum_has_both_symmetries() {
    let s = default_setup(1.0);
    let ev = off_axis_eigenvalues(&s.forms).unwrap();
    let nus: Vec<C64> = ev.iter().map(|e| e.0).filter(|z| z.norm() < 6.0).collect();
    for nu in &nus {
        for image in [-nu, nu.conj()] {
            let d = nus.iter().map(|z| (z - image).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-8 * (1.0 + nu.norm()), "{nu}: image {image} missing ({d:.2e})");
        }
    }
}

#[test]
fn default_window_is_half_the_gap() {
    let s = default_setup(1.0);
    let gap = spectral_gap(&s.forms).unwrap();
    assert!((s.window.delta - gap / 2.0).abs() < 1e-14);
    assert!((gap - 0.5771790628).abs() < 1e-8);
    assert!(validate_window(&s.forms, &s.window).is_ok());
    let wide = SpectralWindow::symmetric(gap * 1.0000001);
    assert!(matches!(validate_window(&s.forms, &wide), Err(Error::AssumptionViolation(_))));
}

#[test]
fn example_counts_and_ordering() {
    let s = default_setup(1.0);
    assert_eq!(s.modes.kappa(), 6);
    assert!(s.modes.modes.iter().all(|m| m.algebraic_multiplicity() == 1));
    let branches: Vec<Branch> = s.modes.modes.iter().map(|m| m.branch).collect();
    let first_sh = branches.iter().position(|b| *b == Branch::Sh).unwrap();
    assert!(branches[first_sh..].iter().all(|b| *b == Branch::Sh));
}

#[test]
fn chains_satisfy_their_relations() {
    for omega in [1.0, std::f64::consts::FRAC_PI_2] {
        let s = default_setup(omega);
        for m in &s.modes.modes {
            for c in &m.chains {
                assert!(c.residual(&s.forms) < 1e-10, "{} residual {:.2e}", m.nu, c.residual(&s.forms));
            }
        }
    }
}

#[test]
fn cutoff_gives_length_two_chains_at_zero() {
    let s = default_setup(std::f64::consts::FRAC_PI_2);
    let at_zero: Vec<&Mode> = s.modes.modes.iter().filter(|m| m.nu.norm() < 1e-8).collect();
    assert_eq!(at_zero.len(), 2);
    for m in at_zero {
        assert_eq!(m.partial_multiplicities(), vec![2]);
        assert!(m.propagating);
    }
    assert!(s.window.delta > 0.5);
    let sh = sh_reference_spectrum(&s.cfg, &s.window);
    assert!(sh.iter().any(|(nu, mult)| nu.norm() == 0.0 && *mult == 2));
}

#[test]
fn compute_jordan_chains_on_a_simple_eigenvalue() {
    let s = default_setup(1.0);
    let nu = s.modes.modes[0].nu;
    let chains = compute_jordan_chains(&s.forms, nu).unwrap();
    assert_eq!(chains.len(), 1);
    assert_eq!(chains[0].len(), 1);
    assert!((chains[0].vectors[0].norm() - 1.0).abs() < 1e-12);
}

#[test]
fn keldysh_biorthogonality_holds() {
    for omega in [0.5, 1.0, std::f64::consts::FRAC_PI_2, 2.3] {
        let s = default_setup(omega);
        for m in &s.modes.modes {
            let r = keldysh_residual(&s.forms, m);
            assert!(r < 1e-9, "omega {omega} nu {} residual {r:.2e}", m.nu);
        }
    }
}

#[test]
fn residues_match_chain_projectors() {
    let s = default_setup(1.0);
    let simple = s.modes.modes.iter().find(|m| m.nu.im > 1.0 && m.branch == Branch::InPlane).unwrap();
    assert!(resolvent_residue_check(&s.forms, &s.modes, simple.nu, 0.05).unwrap() < 1e-8);
    let c = default_setup(std::f64::consts::FRAC_PI_2);
    assert!(resolvent_residue_check(&c.forms, &c.modes, C64::new(0.0, 0.0), 0.2).unwrap() < 1e-6);
}

#[test]
fn circle_through_an_eigenvalue_is_rejected() {
    let s = default_setup(1.0);
    let nu = s.modes.modes[0].nu;
    let r = resolvent_residue_check(&s.forms, &s.modes, nu - 0.1, 0.1);
    assert!(matches!(r, Err(Error::CircleTouchesSpectrum(_))), "{r:?}");
}

#[test]
fn decaying_modes_are_sorted_below_the_window() {
    let s = default_setup(1.0);
    let d = decaying_modes(&s.forms, &s.window, 8).unwrap();
    assert_eq!(d.iter().map(|m| m.algebraic_multiplicity()).sum::<usize>(), 8);
    assert!(d.iter().all(|m| m.nu.re < -s.window.delta && !m.propagating));
    assert!(d.windows(2).all(|w| w[0].nu.re >= w[1].nu.re - 1e-12));
    assert!((d[0].nu.re + 0.5771790628).abs() < 1e-8);
}

#[test]
fn invalid_material_is_rejected() {
    let cfg = ProblemConfig::new(-1.0, 1.0, 1.0, 1.0, 1.0);
    assert!(matches!(lamb_strip::cross_section::validate_config(cfg), Err(Error::InvalidMaterial(_))));
}
