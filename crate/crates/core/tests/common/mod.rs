//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use lamb_strip::cross_section::{assemble_forms, build_grid, CrossSectionGrid, FormMatrices, ProblemConfig};
use lamb_strip::linalg::{CVec, C64};
use lamb_strip::modes_flux::{build_canonical_basis, ModalBasis, SymplecticGram};
use lamb_strip::pencil_spectrum::{compute_adjoint_chains, default_window, solve_qep, ModeSet, SpectralWindow};
use lamb_strip::strip_solver::AxialBump;
use lamb_strip::quadrature::gauss_legendre;
use rand::{RngExt, SeedableRng};

pub fn example_cfg() -> ProblemConfig<f64> {
    ProblemConfig::new(2.0, 1.0, 1.0, 1.0, 1.0)
}

pub struct Setup {
    pub cfg: ProblemConfig<f64>,
    pub grid: CrossSectionGrid<f64>,
    pub forms: FormMatrices<f64>,
    pub window: SpectralWindow,
    pub modes: ModeSet,
}

pub fn setup(cfg: ProblemConfig<f64>, ne: usize, p: usize) -> Setup {
    let grid = build_grid(&cfg, ne, p).unwrap();
    let forms = assemble_forms(&cfg, &grid);
    let window = default_window(&forms, None).unwrap();
    let modes = compute_adjoint_chains(&forms, &solve_qep(&forms, &window).unwrap()).unwrap();
    Setup { cfg, grid, forms, window, modes }
}

/// All eigenvalues with |Re nu| < reach (off-axis ones included).
pub fn modes_in_strip(forms: &FormMatrices<f64>, reach: f64) -> ModeSet {
    solve_qep(forms, &SpectralWindow::symmetric(reach)).unwrap()
}

pub fn default_setup(omega: f64) -> Setup {
    setup(example_cfg().with_omega(omega), 8, 4)
}

pub fn basis(s: &Setup) -> ModalBasis {
    build_canonical_basis(&s.forms, &SymplecticGram::build(&s.forms, &s.modes).unwrap()).unwrap()
}

/// nu^2 = (n pi / 2h)^2 - rho omega^2 / mu, every n with |nu| <= reach.
pub fn sh_closed_form(cfg: &ProblemConfig<f64>, reach: f64) -> Vec<C64> {
    let k2 = cfg.density * cfg.omega.powi(2) / cfg.lame_mu;
    let mut out = Vec::new();
    for n in 0..200 {
        let q = n as f64 * std::f64::consts::PI / (2.0 * cfg.half_thickness);
        let nu2 = q * q - k2;
        if nu2.abs().sqrt() > reach && nu2 > 0.0 {
            break;
        }
        let r = C64::new(nu2, 0.0).sqrt();
        out.push(r);
        out.push(-r);
    }
    out
}

/// Rayleigh-Lamb functions (symmetric, antisymmetric) at real wavenumber k, scaled so they are
/// real and finite whether the partial wavenumbers are real or imaginary.
pub fn rayleigh_lamb(cfg: &ProblemConfig<f64>, k: f64) -> (f64, f64) {
    let h = cfg.half_thickness;
    let w2 = cfg.omega * cfg.omega * cfg.density;
    let p = C64::new(w2 / (cfg.lame_lambda + 2.0 * cfg.lame_mu) - k * k, 0.0).sqrt();
    let q = C64::new(w2 / cfg.lame_mu - k * k, 0.0).sqrt();
    let sinc = |z: C64| if z.norm() < 1e-8 { C64::new(h, 0.0) } else { (z * h).sin() / z };
    let d = (q * q - k * k).powi(2);
    let s = d * (p * h).cos() * sinc(q) + p * (p * h).sin() * (q * h).cos() * (4.0 * k * k);
    let a = d * sinc(p) * (q * h).cos() + q * (q * h).sin() * (p * h).cos() * (4.0 * k * k);
    (s.re, a.re)
}

pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if b - a < 1e-15 * b.abs().max(1.0) {
            break;
        }
    }
    0.5 * (a + b)
}

/// All sign-change roots of f on (lo, hi) from a uniform scan.
pub fn scan_roots<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    for i in 0..n {
        if ys[i] == 0.0 {
            out.push(xs[i]);
        } else if (ys[i] > 0.0) != (ys[i + 1] > 0.0) {
            out.push(bisect(&f, xs[i], xs[i + 1]));
        }
    }
    out
}

/// Propagating Lamb wavenumbers k > 0 from the closed-form Rayleigh-Lamb relations.
pub fn rayleigh_lamb_roots(cfg: &ProblemConfig<f64>) -> Vec<f64> {
    let hi = 1.5 * cfg.omega * (cfg.density / cfg.lame_mu).sqrt() + 0.5;
    let mut r = scan_roots(|k| rayleigh_lamb(cfg, k).0, 1e-3, hi, 4000);
    r.extend(scan_roots(|k| rayleigh_lamb(cfg, k).1, 1e-3, hi, 4000));
    r.sort_by(f64::total_cmp);
    r
}

/// Brute-force Laplace transform of a bump by composite Gauss quadrature.
pub fn transform_by_quadrature(b: &AxialBump, nu: C64) -> C64 {
    let (lo, hi) = b.support();
    let (x, w) = gauss_legendre::<f64>(40);
    let panels = 16;
    let mut s = C64::new(0.0, 0.0);
    for k in 0..panels {
        let a = lo + (hi - lo) * k as f64 / panels as f64;
        let c = a + (hi - lo) / panels as f64;
        for (xi, wi) in x.iter().zip(&w) {
            let t = 0.5 * (a + c) + 0.5 * (c - a) * xi;
            s += (-nu * t).exp() * (b.eval(t) * wi * 0.5 * (c - a));
        }
    }
    s
}

/// Dirichlet trace sampled from a smooth random function of x1.
pub fn smooth_random_trace(grid: &CrossSectionGrid<f64>, seed: u64) -> CVec {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let n = grid.dof_per_component();
    let mut out = CVec::zeros(3 * n);
    for comp in 0..3 {
        let coef: Vec<(f64, f64)> = (0..4).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        for (a, &x) in grid.nodes.iter().enumerate() {
            let mut z = C64::new(0.0, 0.0);
            for (k, (re, im)) in coef.iter().enumerate() {
                let phase = k as f64 * std::f64::consts::FRAC_PI_2 * x;
                z += C64::new(*re, *im) * C64::new(phase.cos(), 0.0) / (1.0 + k as f64);
            }
            out[comp * n + a] = z;
        }
    }
    out
}
