//! Power-exponential waves, the flux form q and the canonical outgoing/incoming basis.
//!
//! For discrete fields the weak traction on a section x3 = R is t(u) = C u_x + E u, so
//! q(u, v) = v^H (E^T - E) u + v_x^H C u - v^H C u_x, all evaluated at R.

use crate::cross_section::FormMatrices;
use crate::error::{Error, Result};
use crate::linalg::{lu_solve_vec, scatter, submatrix, svd_right, CMat, CVec, C64};
use crate::pencil_spectrum::{Branch, ModeSet};

/// Tolerance for classifying a wave as flux free, relative to its section norm.
pub const NULL_FLUX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveKind {
    Direct,
    AdjointReflected,
}

/// e^{nu x} sum_k x^k coeffs[k], optionally multiplied by the cutoff chi(x).
#[derive(Debug, Clone)]
pub struct Wave {
    pub nu: C64,
    pub coeffs: Vec<CVec>,
    pub kind: WaveKind,
    pub cutoff_applied: bool,
    pub branch: Branch,
}

/// Anything with a cross-section profile and axial derivative at every section.
pub trait Field {
    fn value(&self, x: f64) -> CVec;
    fn derivative(&self, x: f64) -> CVec;
}

/// C^2 quintic smoothstep: 0 for x <= a, 1 for x >= b.
pub fn smoothstep(x: f64, a: f64, b: f64) -> (f64, f64) {
    if x <= a {
        return (0.0, 0.0);
    }
    if x >= b {
        return (1.0, 0.0);
    }
    let w = b - a;
    let t = (x - a) / w;
    let v = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let d = 30.0 * t * t * (1.0 - t) * (1.0 - t) / w;
    (v, d)
}

impl Wave {
    fn raw(&self, x: f64) -> (CVec, CVec) {
        let e = (self.nu * x).exp();
        let dim = self.coeffs[0].len();
        let mut val = CVec::zeros(dim);
        let mut der = CVec::zeros(dim);
        for (k, p) in self.coeffs.iter().enumerate() {
            let xk = x.powi(k as i32);
            val += p * C64::new(xk, 0.0);
            let mut dk = self.nu * xk;
            if k > 0 {
                dk += k as f64 * x.powi(k as i32 - 1);
            }
            der += p * dk;
        }
        (val * e, der * e)
    }

    /// Same wave multiplied by chi, the smoothstep from 0 on (-inf, 1] to 1 on [2, inf).
    pub fn with_cutoff(&self) -> Wave {
        Wave { cutoff_applied: true, ..self.clone() }
    }

    /// Mirror image x3 -> -x3 with u3 -> -u3; maps solutions to solutions and flips the flux sign.
    pub fn reflected(&self) -> Wave {
        let n = self.coeffs[0].len() / 3;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                CVec::from_fn(p.len(), |i, _| if i / n == 2 { -p[i] * sign } else { p[i] * sign })
            })
            .collect();
        Wave { nu: -self.nu, coeffs, ..self.clone() }
    }

    pub fn scaled(&self, a: C64) -> Wave {
        Wave { coeffs: self.coeffs.iter().map(|p| p * a).collect(), ..self.clone() }
    }
}

impl Field for Wave {
    fn value(&self, x: f64) -> CVec {
        let (v, _) = self.raw(x);
        if self.cutoff_applied {
            v * C64::new(smoothstep(x, 1.0, 2.0).0, 0.0)
        } else {
            v
        }
    }

    fn derivative(&self, x: f64) -> CVec {
        let (v, d) = self.raw(x);
        if self.cutoff_applied {
            let (chi, dchi) = smoothstep(x, 1.0, 2.0);
            d * C64::new(chi, 0.0) + v * C64::new(dchi, 0.0)
        } else {
            d
        }
    }
}

/// Linear combination of waves.
#[derive(Debug, Clone)]
pub struct WaveSum {
    pub terms: Vec<(C64, Wave)>,
}

impl WaveSum {
    pub fn reflected(&self) -> WaveSum {
        WaveSum { terms: self.terms.iter().map(|(a, w)| (*a, w.reflected())).collect() }
    }

    pub fn scaled(&self, s: C64) -> WaveSum {
        WaveSum { terms: self.terms.iter().map(|(a, w)| (*a * s, w.clone())).collect() }
    }

    pub fn branch(&self) -> Option<Branch> {
        let b = self.terms.first()?.1.branch;
        self.terms.iter().all(|(_, w)| w.branch == b).then_some(b)
    }
}

impl Field for WaveSum {
    fn value(&self, x: f64) -> CVec {
        let dim = self.terms[0].1.coeffs[0].len();
        self.terms.iter().fold(CVec::zeros(dim), |acc, (a, w)| acc + w.value(x) * *a)
    }

    fn derivative(&self, x: f64) -> CVec {
        let dim = self.terms[0].1.coeffs[0].len();
        self.terms.iter().fold(CVec::zeros(dim), |acc, (a, w)| acc + w.derivative(x) * *a)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// u^i_{j,s} (direct) or v^i_{j,s} (adjoint reflected) from the chains of mode `i`.
pub fn make_wave(modeset: &ModeSet, i: usize, j: usize, s: usize, kind: WaveKind) -> Result<Wave> {
    let mode = modeset
        .modes
        .get(i)
        .ok_or_else(|| Error::IndexOutOfRange(format!("mode {i} of {}", modeset.modes.len())))?;
    let chain = mode
        .chains
        .get(j)
        .ok_or_else(|| Error::IndexOutOfRange(format!("chain {j} of {}", mode.chains.len())))?;
    if s >= chain.len() {
        return Err(Error::IndexOutOfRange(format!("chain index {s} >= length {}", chain.len())));
    }
    let (nu, coeffs) = match kind {
        WaveKind::Direct => (
            mode.nu,
            (0..=s).map(|k| chain.vectors[s - k].clone() / C64::new(factorial(k), 0.0)).collect(),
        ),
        WaveKind::AdjointReflected => {
            if !mode.has_adjoint() {
                return Err(Error::IndexOutOfRange(format!("mode {i} has no adjoint chains")));
            }
            let psi = &mode.adjoint[j];
            (
                -mode.nu.conj(),
                (0..=s)
                    .map(|k| {
                        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                        psi[s - k].clone() * C64::new(sign / factorial(k), 0.0)
                    })
                    .collect(),
            )
        }
    };
    Ok(Wave { nu, coeffs, kind, cutoff_applied: false, branch: mode.branch })
}

/// Weak traction C u_x + E u on the section x3 = `x` (load-vector form).
pub fn weak_traction<F: Field + ?Sized>(forms: &FormMatrices<f64>, u: &F, x: f64) -> CVec {
    &forms.c * u.derivative(x) + &forms.e * u.value(x)
}

/// Nodal values of sigma_{i3}(u) on the section x3 = `x` (mass projection of the weak traction).
pub fn traction_on_section<F: Field + ?Sized>(forms: &FormMatrices<f64>, u: &F, x: f64) -> CVec {
    let t = weak_traction(forms, u, x);
    lu_solve_vec(&forms.mass, &t).expect("mass matrix is positive definite")
}

/// q(u, v) on the section x3 = `r`; linear in u, antilinear in v.
pub fn symplectic_pairing<U: Field + ?Sized, V: Field + ?Sized>(
    forms: &FormMatrices<f64>,
    u: &U,
    v: &V,
    r: f64,
) -> C64 {
    let (uv, ud) = (u.value(r), u.derivative(r));
    let (vv, vd) = (v.value(r), v.derivative(r));
    pairing_from_traces(forms, &uv, &ud, &vv, &vd)
}

/// q from section values and axial derivatives.
pub fn pairing_from_traces(forms: &FormMatrices<f64>, uv: &CVec, ud: &CVec, vv: &CVec, vd: &CVec) -> C64 {
    let et = forms.e.transpose() - &forms.e;
    vv.dotc(&(&et * uv)) + vd.dotc(&(&forms.c * uv)) - vv.dotc(&(&forms.c * ud))
}

/// Max deviation of q(u^k_{j,s}, v^k'_{j',s'}) from delta_kk' delta_jj' delta_{s+s'=kappa-1}
/// over the propagating modes.
pub fn verify_chain_biorthogonality(forms: &FormMatrices<f64>, modeset: &ModeSet) -> Result<f64> {
    let mut direct = Vec::new();
    let mut adjoint = Vec::new();
    for (i, mode) in modeset.modes.iter().enumerate() {
        if !mode.propagating {
            continue;
        }
        for (j, chain) in mode.chains.iter().enumerate() {
            for s in 0..chain.len() {
                direct.push(((i, j, s, chain.len()), make_wave(modeset, i, j, s, WaveKind::Direct)?));
                adjoint.push(((i, j, s), make_wave(modeset, i, j, s, WaveKind::AdjointReflected)?));
            }
        }
    }
    let mut worst: f64 = 0.0;
    for ((i, j, s, kap), u) in &direct {
        for ((i2, j2, s2), v) in &adjoint {
            let q = symplectic_pairing(forms, u, v, 2.0);
            let target = if i == i2 && j == j2 && s + s2 + 1 == *kap { 1.0 } else { 0.0 };
            worst = worst.max((q - target).norm());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveClass {
    Outgoing,
    Incoming,
    NullFlux,
}

/// Squared L2 norm of the section profile at `x`.
pub fn section_norm_sqr<F: Field + ?Sized>(forms: &FormMatrices<f64>, u: &F, x: f64) -> f64 {
    let v = u.value(x);
    v.dotc(&(&forms.mass * &v)).re
}

/// Sign of i q(u, u) evaluated at `x`.
pub fn classify_wave<F: Field + ?Sized>(forms: &FormMatrices<f64>, u: &F, x: f64) -> WaveClass {
    let flux = (C64::new(0.0, 1.0) * symplectic_pairing(forms, u, u, x)).re;
    let nrm = section_norm_sqr(forms, u, x);
    if flux.abs() <= NULL_FLUX_TOLERANCE * nrm {
        WaveClass::NullFlux
    } else if flux > 0.0 {
        WaveClass::Outgoing
    } else {
        WaveClass::Incoming
    }
}

/// Gram matrix of q over the direct waves of all propagating modes.
#[derive(Debug, Clone)]
pub struct SymplecticGram {
    /// q[(a, b)] = q(W_a, W_b)
    pub q: CMat,
    pub t: usize,
    pub waves: Vec<Wave>,
}

impl SymplecticGram {
    pub fn build(forms: &FormMatrices<f64>, modeset: &ModeSet) -> Result<Self> {
        let mut waves = Vec::new();
        for (i, mode) in modeset.modes.iter().enumerate() {
            if !mode.propagating {
                continue;
            }
            for (j, chain) in mode.chains.iter().enumerate() {
                for s in 0..chain.len() {
                    waves.push(make_wave(modeset, i, j, s, WaveKind::Direct)?);
                }
            }
        }
        let k = waves.len();
        let q = CMat::from_fn(k, k, |a, b| symplectic_pairing(forms, &waves[a], &waves[b], 0.0));
        Ok(SymplecticGram { q, t: k / 2, waves })
    }

    pub fn kappa(&self) -> usize {
        self.waves.len()
    }

    /// i q(U, U) = a^H (i Q^T) a for U = sum a_k W_k.
    pub fn hermitian(&self) -> CMat {
        self.q.transpose() * C64::new(0.0, 1.0)
    }

    /// ||Q + Q^H|| relative to ||Q||.
    pub fn antihermitian_defect(&self) -> f64 {
        (&self.q + self.q.adjoint()).norm() / self.q.norm().max(f64::MIN_POSITIVE)
    }

    /// Eigenvalues of the Hermitian matrix i Q (ascending).
    pub fn flux_eigenvalues(&self) -> Vec<f64> {
        let h = self.hermitian();
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// (number of positive, number of negative) eigenvalues of i Q.
    pub fn signature(&self) -> (usize, usize) {
        let ev = self.flux_eigenvalues();
        let tol = 1e-10 * self.q.norm();
        (ev.iter().filter(|&&x| x > tol).count(), ev.iter().filter(|&&x| x < -tol).count())
    }
}

/// U_1..U_T outgoing (q = -i) and U_{T+1}..U_{2T} incoming (q = +i), mutually q-orthogonal.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    pub t: usize,
    pub modes: Vec<WaveSum>,
    /// i q(U_k, U_k) as built (+1 outgoing, -1 incoming).
    pub flux: Vec<f64>,
    /// True when the incoming modes are mirror images of the outgoing ones.
    pub mirrored: bool,
}

impl ModalBasis {
    pub fn outgoing(&self) -> &[WaveSum] {
        &self.modes[..self.t]
    }

    pub fn incoming(&self) -> &[WaveSum] {
        &self.modes[self.t..]
    }

    /// Max deviation of q(U_j, U_k) from the canonical pattern.
    pub fn orthogonality_defect(&self, forms: &FormMatrices<f64>) -> f64 {
        let n = self.modes.len();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for k in 0..n {
                let q = symplectic_pairing(forms, &self.modes[j], &self.modes[k], 0.0);
                let target = match (j == k, j < self.t) {
                    (false, _) => C64::new(0.0, 0.0),
                    (true, true) => C64::new(0.0, -1.0),
                    (true, false) => C64::new(0.0, 1.0),
                };
                worst = worst.max((q - target).norm());
            }
        }
        worst
    }
}

/// Combination of `waves` with coefficients `a`; round-off level coefficients are dropped.
fn combine(waves: &[Wave], a: &CVec) -> WaveSum {
    let amax = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    WaveSum {
        terms: a
            .iter()
            .zip(waves)
            .filter(|(c, _)| c.norm() > 1e-12 * amax)
            .map(|(c, w)| (*c, w.clone()))
            .collect(),
    }
}

/// Make the largest coefficient real positive.
fn phase_fix(a: &mut CVec) {
    if let Some(z) = a.iter().copied().max_by(|x, y| x.norm().total_cmp(&y.norm())) {
        if z.norm() > 0.0 {
            *a *= z.conj() / z.norm();
        }
    }
}

/// Canonical basis from the eigendecomposition of i Q.
///
/// Outgoing modes come from the positive eigenvectors scaled to i q = 1. Incoming modes
/// are their mirror images whenever that keeps the basis q-orthogonal, otherwise the
/// negative eigenvectors are used.
pub fn build_canonical_basis(forms: &FormMatrices<f64>, gram: &SymplecticGram) -> Result<ModalBasis> {
    let k = gram.kappa();
    if k == 0 {
        return Ok(ModalBasis { t: 0, modes: Vec::new(), flux: Vec::new(), mirrored: true });
    }
    let h = gram.hermitian();
    let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    let qn = gram.q.norm();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    // q never couples the two branches; diagonalize per branch so no mode mixes them
    for branch in Branch::ALL {
        let idx: Vec<usize> = (0..k).filter(|&a| gram.waves[a].branch == branch).collect();
        if idx.is_empty() {
            continue;
        }
        let eig = nalgebra::SymmetricEigen::new(submatrix(&h, &idx));
        for (col, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam.abs() < 1e-10 * qn {
                return Err(Error::DegenerateForm(format!(
                    "eigenvalue {lam:.3e} of iQ is negligible against ||Q|| = {qn:.3e}"
                )));
            }
            let v = eig.eigenvectors.column(col) / C64::new(lam.abs().sqrt(), 0.0);
            let mut a = scatter(&idx, &v, k);
            phase_fix(&mut a);
            if lam > 0.0 {
                pos.push(a);
            } else {
                neg.push(a);
            }
        }
    }
    if pos.len() != neg.len() {
        return Err(Error::AssumptionViolation(format!(
            "signature of iQ is ({}, {}), expected equal counts",
            pos.len(),
            neg.len()
        )));
    }
    // deterministic order: by the index of the dominant wave
    let dominant = |a: &CVec| a.iter().enumerate().max_by(|x, y| x.1.norm().total_cmp(&y.1.norm())).unwrap().0;
    pos.sort_by_key(dominant);
    neg.sort_by_key(dominant);
    let t = pos.len();
    let outgoing: Vec<WaveSum> = pos.iter().map(|a| combine(&gram.waves, a)).collect();
    let mut modes = outgoing.clone();
    modes.extend(outgoing.iter().map(|u| u.reflected()));
    let mut basis = ModalBasis { t, modes, flux: [vec![1.0; t], vec![-1.0; t]].concat(), mirrored: true };
    if basis.orthogonality_defect(forms) > 1e-8 {
        basis.modes.truncate(t);
        basis.modes.extend(neg.iter().map(|a| combine(&gram.waves, a)));
        basis.mirrored = false;
    }
    Ok(basis)
}

/// Rank and condition number of the (displacement, traction) traces at x3 = 0 of all waves.
pub fn mode_trace_rank(forms: &FormMatrices<f64>, waves: &[Wave]) -> (usize, f64) {
    let dim = forms.dim();
    let m = CMat::from_fn(2 * dim, waves.len(), |r, c| {
        if r < dim {
            waves[c].value(0.0)[r]
        } else {
            weak_traction(forms, &waves[c], 0.0)[r - dim]
        }
    });
    let (sv, _) = svd_right(&m);
    if sv.is_empty() {
        return (0, 1.0);
    }
    let rank = sv.iter().filter(|&&s| s > 1e-10 * sv[0]).count();
    let cond = sv[0] / sv[sv.len() - 1];
    (rank, cond)
}
