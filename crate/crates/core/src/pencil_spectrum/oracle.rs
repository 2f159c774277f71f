use crate::cross_section::ProblemConfig;
use crate::error::{Error, Result};
use crate::linalg::C64;

use super::SpectralWindow;

/// Closed-form SH eigenvalues nu^2 = (n pi / 2h)^2 - rho omega^2 / mu inside the window strip,
/// with algebraic multiplicity (2 at a cutoff, 1 otherwise).
pub fn sh_reference_spectrum(cfg: &ProblemConfig<f64>, window: &SpectralWindow) -> Vec<(C64, usize)> {
    let k2 = cfg.density * cfg.omega * cfg.omega / cfg.lame_mu;
    let reach = window.strip_lo.abs().max(window.strip_hi.abs());
    let mut out = Vec::new();
    for n in 0.. {
        let q = n as f64 * std::f64::consts::PI / (2.0 * cfg.half_thickness);
        let nu2 = q * q - k2;
        if nu2 > 0.0 && nu2.sqrt() >= reach {
            break;
        }
        if nu2.abs() <= 1e-13 * k2.max(1.0) {
            if window.contains(C64::new(0.0, 0.0)) {
                out.push((C64::new(0.0, 0.0), 2));
            }
        } else if nu2 < 0.0 {
            let k = (-nu2).sqrt();
            if window.contains(C64::new(0.0, k)) {
                out.push((C64::new(0.0, -k), 1));
                out.push((C64::new(0.0, k), 1));
            }
        } else {
            let r = nu2.sqrt();
            for nu in [C64::new(r, 0.0), C64::new(-r, 0.0)] {
                if window.contains(nu) {
                    out.push((nu, 1));
                }
            }
        }
    }
    out
}

const RHS_DIM: usize = 8;
type State = [C64; RHS_DIM];

struct LambOde {
    lam: f64,
    mu: f64,
    rw2: f64,
    nu: C64,
}

impl LambOde {
    /// Two copies of the first-order system in (u1, u3, s11, s13).
    fn rhs(&self, y: &State) -> State {
        let mut out = [C64::new(0.0, 0.0); RHS_DIM];
        let p2m = self.lam + 2.0 * self.mu;
        for b in 0..2 {
            let (u1, u3, t1, t3) = (y[4 * b], y[4 * b + 1], y[4 * b + 2], y[4 * b + 3]);
            let du1 = (t1 - self.nu * self.lam * u3) / p2m;
            let du3 = t3 / self.mu - self.nu * u1;
            let s33 = du1 * self.lam + self.nu * p2m * u3;
            out[4 * b] = du1;
            out[4 * b + 1] = du3;
            out[4 * b + 2] = -self.nu * t3 - u1 * self.rw2;
            out[4 * b + 3] = -self.nu * s33 - u3 * self.rw2;
        }
        out
    }
}

fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..RHS_DIM {
            out[i] += k[i] * (h * c);
        }
    }
    out
}

/// Adaptive Dormand-Prince 5(4) from x0 to x1 (the system is autonomous in x).
fn dopri5(ode: &LambOde, mut y: State, x0: f64, x1: f64, rtol: f64, atol: f64) -> Result<State> {
    let a21 = 1.0 / 5.0;
    let (a31, a32) = (3.0 / 40.0, 9.0 / 40.0);
    let (a41, a42, a43) = (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0);
    let (a51, a52, a53, a54) = (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0);
    let (a61, a62, a63, a64, a65) =
        (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0);
    let (b1, b3, b4, b5, b6) = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0);
    let (e1, e3, e4, e5, e6, e7) = (
        71.0 / 57600.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    );
    let span = x1 - x0;
    let mut x = x0;
    let mut h = span / 200.0;
    let hmin = 1e-13 * span;
    let mut k1 = ode.rhs(&y);
    let mut steps = 0usize;
    while x < x1 {
        if x + h > x1 {
            h = x1 - x;
        }
        let k2 = ode.rhs(&axpy(&y, h, &[(a21, &k1)]));
        let k3 = ode.rhs(&axpy(&y, h, &[(a31, &k1), (a32, &k2)]));
        let k4 = ode.rhs(&axpy(&y, h, &[(a41, &k1), (a42, &k2), (a43, &k3)]));
        let k5 = ode.rhs(&axpy(&y, h, &[(a51, &k1), (a52, &k2), (a53, &k3), (a54, &k4)]));
        let k6 = ode.rhs(&axpy(&y, h, &[(a61, &k1), (a62, &k2), (a63, &k3), (a64, &k4), (a65, &k5)]));
        let ynew = axpy(&y, h, &[(b1, &k1), (b3, &k3), (b4, &k4), (b5, &k5), (b6, &k6)]);
        let k7 = ode.rhs(&ynew);
        let mut err: f64 = 0.0;
        for i in 0..RHS_DIM {
            let e = (k1[i] * e1 + k3[i] * e3 + k4[i] * e4 + k5[i] * e5 + k6[i] * e6 + k7[i] * e7) * h;
            let sc = atol + rtol * y[i].norm().max(ynew[i].norm());
            err = err.max(e.norm() / sc);
        }
        if !err.is_finite() {
            return Err(Error::IntegratorFailure(format!("non-finite state near x = {x}")));
        }
        if err <= 1.0 {
            x += h;
            y = ynew;
            k1 = k7;
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
        if h < hmin && x < x1 - hmin {
            return Err(Error::IntegratorFailure(format!("step size underflow at x = {x}")));
        }
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::IntegratorFailure("too many steps".into()));
        }
    }
    Ok(y)
}

/// Rayleigh-Lamb determinant: 2x2 traction matrix at x = h of the solutions that are
/// traction free at x = -h. Real on the imaginary axis, zero exactly at in-plane eigenvalues.
pub fn lamb_determinant(cfg: &ProblemConfig<f64>, nu: C64) -> Result<C64> {
    let ode = LambOde {
        lam: cfg.lame_lambda,
        mu: cfg.lame_mu,
        rw2: cfg.density * cfg.omega * cfg.omega,
        nu,
    };
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let y0 = [one, zero, zero, zero, zero, one, zero, zero];
    let h = cfg.half_thickness;
    let y = dopri5(&ode, y0, -h, h, 1e-13, 1e-15)?;
    Ok(y[2] * y[7] - y[3] * y[6])
}
