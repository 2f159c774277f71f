//! Full-strip problem by inverse Laplace transform along vertical lines, and the
//! residue asymptotics between two lines.

use rayon::prelude::*;

use crate::cross_section::{CrossSectionGrid, FormMatrices};
use crate::error::{Error, Result};
use crate::linalg::{lu_solve, CMat, CVec, C64};
use crate::modes_flux::{make_wave, smoothstep, Field, WaveKind};
use crate::pencil_spectrum::{BlockPencil, Branch, ModeSet, AXIS_TOLERANCE};
use crate::quadrature::gauss_legendre;

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Beta function B(a, b) for positive arguments.
fn beta(a: f64, b: f64) -> f64 {
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_pow(a: &[f64], q: usize) -> Vec<f64> {
    (0..q).fold(vec![1.0], |acc, _| poly_mul(&acc, a))
}

/// k-th derivative of the polynomial `p` at `t`.
fn poly_deriv_at(p: &[f64], k: usize, t: f64) -> f64 {
    (k..p.len())
        .map(|i| {
            let ff: f64 = (i - k + 1..=i).map(|x| x as f64).product();
            p[i] * ff * t.powi((i - k) as i32)
        })
        .sum()
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Axial factor P(t) (1 - t^2)^q with t = (x - center) / half_width, zero outside the support.
#[derive(Debug, Clone, PartialEq)]
pub struct AxialBump {
    pub center: f64,
    pub half_width: f64,
    /// Coefficients of P in powers of t.
    pub poly: Vec<f64>,
    pub q: usize,
}

impl AxialBump {
    pub fn new(center: f64, half_width: f64, q: usize) -> Self {
        AxialBump { center, half_width, poly: vec![1.0], q }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.half_width;
        if t.abs() >= 1.0 {
            return 0.0;
        }
        let p = self.poly.iter().rev().fold(0.0, |acc, &c| acc * t + c);
        p * (1.0 - t * t).powi(self.q as i32)
    }

    /// d/dx of the bump, again of the form P(t)(1 - t^2)^(q-1).
    pub fn derivative(&self) -> AxialBump {
        assert!(self.q >= 1);
        let q = self.q as f64;
        // P' (1 - t^2) - 2 q t P
        let dp: Vec<f64> = self.poly.iter().enumerate().skip(1).map(|(i, &c)| i as f64 * c).collect();
        let mut out = poly_mul(if dp.is_empty() { &[0.0] } else { &dp }, &[1.0, 0.0, -1.0]);
        let tp = poly_mul(&self.poly, &[0.0, -2.0 * q]);
        if tp.len() > out.len() {
            out.resize(tp.len(), 0.0);
        }
        for (i, c) in tp.into_iter().enumerate() {
            out[i] += c;
        }
        let w = self.half_width;
        AxialBump { center: self.center, half_width: w, poly: out.iter().map(|c| c / w).collect(), q: self.q - 1 }
    }

    pub fn scaled(&self, s: f64) -> AxialBump {
        AxialBump { poly: self.poly.iter().map(|c| c * s).collect(), ..self.clone() }
    }

    /// Laplace transform int e^{-nu x} a(x) dx.
    pub fn transform(&self, nu: C64) -> C64 {
        (-nu * self.center).exp() * self.half_width * self.reference_transform(-nu * self.half_width)
    }

    /// int_{-1}^{1} e^{z t} P(t) (1 - t^2)^q dt.
    pub fn reference_transform(&self, z: C64) -> C64 {
        if z.norm() <= (self.q as f64 + 4.0).max(8.0) {
            self.series(z)
        } else {
            self.parts(z)
        }
    }

    /// Power series with moments int t^n (1 - t^2)^q = B((n+1)/2, q+1) for even n.
    fn series(&self, z: C64) -> C64 {
        let q1 = self.q as f64 + 1.0;
        let mut sum = C64::new(0.0, 0.0);
        let mut zj = C64::new(1.0, 0.0);
        let mut small = 0;
        for j in 0..400 {
            let mut mom = 0.0;
            for (i, &c) in self.poly.iter().enumerate() {
                let n = i + j;
                if n % 2 == 0 {
                    mom += c * beta((n as f64 + 1.0) / 2.0, q1);
                }
            }
            let term = zj * mom;
            sum += term;
            if term.norm() <= 1e-18 * sum.norm() && j > 2 {
                small += 1;
                if small > 2 {
                    break;
                }
            } else {
                small = 0;
            }
            zj *= z / (j as f64 + 1.0);
        }
        sum
    }

    /// Finite integration by parts sum over the derivatives of order q..deg at t = +-1.
    fn parts(&self, z: C64) -> C64 {
        let q = self.q;
        let r_plus = poly_mul(&self.poly, &poly_pow(&[1.0, 1.0], q)); // P (1+t)^q
        let r_minus = poly_mul(&self.poly, &poly_pow(&[1.0, -1.0], q)); // P (1-t)^q
        let deg = r_plus.len() - 1 + q;
        let sq = if q.is_multiple_of(2) { 1.0 } else { -1.0 };
        let qf = factorial(q);
        let (ep, em) = (z.exp(), (-z).exp());
        let mut sum = C64::new(0.0, 0.0);
        let mut zp = z;
        for m in 0..=deg {
            if m >= q {
                let c = binom(m, q) * qf;
                let d_plus = sq * c * poly_deriv_at(&r_plus, m - q, 1.0);
                let d_minus = c * poly_deriv_at(&r_minus, m - q, -1.0);
                let sm = if m % 2 == 0 { 1.0 } else { -1.0 };
                sum += (ep * d_plus - em * d_minus) * sm / zp;
            }
            zp *= z;
        }
        sum
    }
}

/// One separable term: load vector on the section times an axial bump.
#[derive(Debug, Clone)]
pub struct SourceTerm {
    pub load: CVec,
    pub axial: AxialBump,
}

#[derive(Debug, Clone, Default)]
pub struct SeparableSource {
    pub terms: Vec<SourceTerm>,
}

impl SeparableSource {
    pub fn new(terms: Vec<SourceTerm>) -> Self {
        SeparableSource { terms }
    }

    /// f_hat(nu) = sum_t load_t * a_hat_t(nu).
    pub fn transform(&self, nu: C64) -> CVec {
        let dim = self.terms.first().map(|t| t.load.len()).unwrap_or(0);
        self.terms.iter().fold(CVec::zeros(dim), |acc, t| acc + &t.load * t.axial.transform(nu))
    }

    /// Union of the axial supports.
    pub fn support(&self) -> (f64, f64) {
        self.terms.iter().map(|t| t.axial.support()).fold((f64::INFINITY, f64::NEG_INFINITY), |a, b| {
            (a.0.min(b.0), a.1.max(b.1))
        })
    }
}

/// Load vector int f(x1) . N_a(x1) dx1 of a section profile given pointwise.
pub fn load_from_function<F: Fn(f64) -> [C64; 3]>(grid: &CrossSectionGrid<f64>, f: F) -> CVec {
    let n = grid.dof_per_component();
    let mut out = CVec::zeros(3 * n);
    for qp in grid.section_quadrature() {
        let v = f(qp.x);
        for (a, &na) in qp.values.iter().enumerate() {
            let g = grid.node_index(qp.element, a);
            for comp in 0..3 {
                out[comp * n + g] += v[comp] * (qp.weight * na);
            }
        }
    }
    out
}

/// Samples of a strip field on sections x3 (each a 3n vector).
#[derive(Debug, Clone)]
pub struct StripField {
    pub x3: Vec<f64>,
    pub values: Vec<CVec>,
    pub beta: f64,
}

impl StripField {
    pub fn max_norm(&self) -> f64 {
        self.values.iter().flat_map(|v| v.iter().map(|z| z.norm())).fold(0.0, f64::max)
    }
}

/// Trapezoid rule on the line Re nu = -beta.
#[derive(Debug, Clone, Copy)]
pub struct LineQuadrature {
    pub s_max: f64,
    pub ds: f64,
}

impl LineQuadrature {
    pub fn default_for(beta: f64) -> Self {
        LineQuadrature { s_max: 200.0 * (1.0 + beta.abs()), ds: 0.01 }
    }
}

/// Every finite eigenvalue of the pencil (raw linearization values).
fn spectrum(forms: &FormMatrices<f64>) -> Result<Vec<C64>> {
    let mut out = Vec::new();
    for branch in Branch::ALL {
        out.extend(crate::pencil_spectrum::block_eigenvalues(&BlockPencil::new(forms, branch))?);
    }
    Ok(out)
}

const TAIL_TOLERANCE: f64 = 1e-12;

/// u(x3) = (1/2 pi i) int_{Re nu = -beta} e^{nu x3} L(nu)^{-1} f_hat(nu) dnu.
pub fn laplace_line_solve(
    forms: &FormMatrices<f64>,
    src: &SeparableSource,
    beta: f64,
    x3_grid: &[f64],
    quad: LineQuadrature,
) -> Result<StripField> {
    let dim = forms.dim();
    let nx = x3_grid.len();
    if src.terms.is_empty() {
        return Ok(StripField { x3: x3_grid.to_vec(), values: vec![CVec::zeros(dim); nx], beta });
    }
    let dist = spectrum(forms)?
        .iter()
        .filter(|z| z.norm().is_finite())
        .map(|z| (z.re + beta).abs())
        .fold(f64::INFINITY, f64::min);
    if dist < 10.0 * AXIS_TOLERANCE {
        return Err(Error::LineNearSpectrum(format!(
            "line Re nu = {} is within {dist:.3e} of an eigenvalue",
            -beta
        )));
    }
    let n_half = (quad.s_max / quad.ds).round() as i64;
    // size of the data along the line, used to drop nodes below round-off and to bound the tail
    let weight = |s: f64| -> f64 {
        let nu = C64::new(-beta, s);
        src.terms.iter().map(|t| t.axial.transform(nu).norm() * t.load.norm()).sum::<f64>()
    };
    let wmax = (-200..=200).map(|k| weight(k as f64 * 0.05)).fold(0.0, f64::max);
    // the resolvent decays like 1/|nu|^2 on the line, the data at least like 1/|nu|^(q+1)
    let tail = weight(quad.s_max).max(weight(-quad.s_max)) / quad.s_max;
    if tail > TAIL_TOLERANCE * wmax {
        return Err(Error::QuadratureUnderresolved(format!(
            "transform tail {:.3e} at s_max = {} exceeds tolerance",
            tail / wmax,
            quad.s_max
        )));
    }
    let blocks: Vec<BlockPencil> = Branch::ALL.iter().map(|&b| BlockPencil::new(forms, b)).collect();
    let loads: Vec<CMat> = blocks
        .iter()
        .map(|bp| CMat::from_fn(bp.size(), src.terms.len(), |i, t| src.terms[t].load[bp.idx[i]]))
        .collect();
    let nodes: Vec<i64> = (-n_half..=n_half).collect();
    const CHUNK: usize = 256;
    let partials: Vec<Vec<CVec>> = nodes
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![CVec::zeros(dim); nx];
            for &k in chunk {
                let s = k as f64 * quad.ds;
                if weight(s) < 1e-18 * wmax {
                    continue;
                }
                let nu = C64::new(-beta, s);
                let ahat: Vec<C64> = src.terms.iter().map(|t| t.axial.transform(nu)).collect();
                let mut u = CVec::zeros(dim);
                for (bp, load) in blocks.iter().zip(&loads) {
                    let Some(sol) = lu_solve(&bp.eval(nu), load) else { continue };
                    for (t, a) in ahat.iter().enumerate() {
                        for i in 0..bp.size() {
                            u[bp.idx[i]] += sol[(i, t)] * a;
                        }
                    }
                }
                // dnu = i ds, so (1/2 pi i) dnu = ds / (2 pi)
                let w = quad.ds / (2.0 * std::f64::consts::PI);
                for (j, &x) in x3_grid.iter().enumerate() {
                    acc[j] += &u * ((nu * x).exp() * w);
                }
            }
            acc
        })
        .collect();
    let mut values = vec![CVec::zeros(dim); nx];
    for part in partials {
        for (v, p) in values.iter_mut().zip(part) {
            *v += p;
        }
    }
    Ok(StripField { x3: x3_grid.to_vec(), values, beta })
}

/// Complementary partition phi_beta = 1 - S, phi_gamma = S with S the smoothstep on [a, b].
#[derive(Debug, Clone, Copy)]
pub struct Partition {
    pub a: f64,
    pub b: f64,
}

impl Default for Partition {
    fn default() -> Self {
        Partition { a: -1.0, b: 1.0 }
    }
}

/// Coefficients c^i_{j,s} for every mode of `modes`: `out[i][j][s]`.
///
/// c_{j,s} = int conj(v_{j, kappa-1-s}) . f, split into the two partition pieces.
pub fn asymptotic_coefficients(
    src: &SeparableSource,
    modeset: &ModeSet,
    modes: &[usize],
    partition: Partition,
) -> Result<Vec<Vec<Vec<C64>>>> {
    let (lo, hi) = src.support();
    let mut breaks = vec![lo, hi];
    for t in &src.terms {
        let (a, b) = t.axial.support();
        breaks.extend([a, b]);
    }
    for x in [partition.a, partition.b] {
        if x > lo && x < hi {
            breaks.push(x);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let (gx, gw) = gauss_legendre::<f64>(48);
    let mut out = Vec::new();
    for &i in modes {
        let mode = &modeset.modes[i];
        let mut per_chain = Vec::new();
        for (j, chain) in mode.chains.iter().enumerate() {
            let kap = chain.len();
            let mut cs = Vec::new();
            for s in 0..kap {
                let v = make_wave(modeset, i, j, kap - 1 - s, WaveKind::AdjointReflected)?;
                let mut pieces = [C64::new(0.0, 0.0); 2];
                for seg in breaks.windows(2) {
                    let (a, b) = (seg[0], seg[1]);
                    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                    for (&r, &w) in gx.iter().zip(&gw) {
                        let x = mid + half * r;
                        let vx = v.value(x);
                        let mut f = C64::new(0.0, 0.0);
                        for t in &src.terms {
                            let ax = t.axial.eval(x);
                            if ax != 0.0 {
                                f += vx.dotc(&t.load) * ax;
                            }
                        }
                        let phi_g = smoothstep(x, partition.a, partition.b).0;
                        pieces[0] += f * (w * half * (1.0 - phi_g));
                        pieces[1] += f * (w * half * phi_g);
                    }
                }
                cs.push(pieces[0] + pieces[1]);
            }
            per_chain.push(cs);
        }
        out.push(per_chain);
    }
    Ok(out)
}

/// Sum of c^i_{j,s} u^i_{j,s}(x) over the given modes.
pub fn residue_field(modeset: &ModeSet, modes: &[usize], coeffs: &[Vec<Vec<C64>>], x: f64) -> Result<CVec> {
    let dim = 3 * modeset.n;
    let mut out = CVec::zeros(dim);
    for (ci, &i) in modes.iter().enumerate() {
        for (j, cs) in coeffs[ci].iter().enumerate() {
            for (s, &c) in cs.iter().enumerate() {
                out += make_wave(modeset, i, j, s, WaveKind::Direct)?.value(x) * c;
            }
        }
    }
    Ok(out)
}

/// Indices of the modes with -gamma < Re nu < -beta.
pub fn modes_between(modeset: &ModeSet, beta: f64, gamma: f64) -> Vec<usize> {
    modeset
        .modes
        .iter()
        .enumerate()
        .filter(|(_, m)| m.nu.re > -gamma && m.nu.re < -beta)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone)]
pub struct StripReport {
    /// max |u_beta - u_gamma - sum c u| / max |u_beta| over the slab
    pub residual: f64,
    pub x3: Vec<f64>,
    pub scale: f64,
}

/// Compare u_beta - u_gamma with the residue sum on the slab x3 in [3, 6].
pub fn verify_strip_asymptotics(
    forms: &FormMatrices<f64>,
    src: &SeparableSource,
    beta: f64,
    gamma: f64,
    modeset: &ModeSet,
) -> Result<StripReport> {
    if !(beta < gamma) {
        return Err(Error::InvalidDiscretization(format!("need beta < gamma, got {beta} >= {gamma}")));
    }
    let x3: Vec<f64> = (0..=30).map(|k| 3.0 + 0.1 * k as f64).collect();
    let ub = laplace_line_solve(forms, src, beta, &x3, LineQuadrature::default_for(beta))?;
    let ug = laplace_line_solve(forms, src, gamma, &x3, LineQuadrature::default_for(gamma))?;
    let idx = modes_between(modeset, beta, gamma);
    let coeffs = asymptotic_coefficients(src, modeset, &idx, Partition::default())?;
    let scale = ub.max_norm().max(ug.max_norm()).max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for (k, &x) in x3.iter().enumerate() {
        let r = residue_field(modeset, &idx, &coeffs, x)?;
        let d = &ub.values[k] - &ug.values[k] - r;
        worst = worst.max(d.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok(StripReport { residual: worst / scale, x3, scale })
}
