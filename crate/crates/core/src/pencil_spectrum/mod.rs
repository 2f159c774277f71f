//! Quadratic eigenvalue problem for L(nu), Jordan and adjoint chains, analytic oracles.

mod chains;
mod oracle;

pub use chains::{
    compute_adjoint_chains, compute_jordan_chains, keldysh_residual, resolvent_residue_check,
};
pub use oracle::{lamb_determinant, sh_reference_spectrum};

use nalgebra::DMatrix;

use crate::cross_section::FormMatrices;
use crate::error::{Error, Result};
use crate::linalg::{c, fix_phase, lu_solve_vec, scatter, submatrix, svd_right, CMat, CVec, C64, I};

pub const AXIS_TOLERANCE: f64 = 1e-8;
pub const CLUSTER_TOLERANCE: f64 = 1e-7;
pub const RANK_TOLERANCE: f64 = 1e-10;
pub const RANK_AMBIGUITY: f64 = 1e-6;

/// Decoupled displacement groups: in-plane (u1, u3) and shear-horizontal (u2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    InPlane,
    Sh,
}

impl Branch {
    pub const ALL: [Branch; 2] = [Branch::InPlane, Branch::Sh];

    pub fn components(self) -> &'static [usize] {
        match self {
            Branch::InPlane => &[0, 2],
            Branch::Sh => &[1],
        }
    }

    /// Global dof indices of the group for `n` nodes per component.
    pub fn indices(self, n: usize) -> Vec<usize> {
        self.components().iter().flat_map(|&comp| (0..n).map(move |a| comp * n + a)).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::InPlane => "in-plane",
            Branch::Sh => "SH",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralWindow {
    pub delta: f64,
    pub strip_lo: f64,
    pub strip_hi: f64,
    pub axis_tolerance: f64,
}

impl SpectralWindow {
    pub fn symmetric(delta: f64) -> Self {
        SpectralWindow { delta, strip_lo: -delta, strip_hi: delta, axis_tolerance: AXIS_TOLERANCE }
    }

    pub fn strip(lo: f64, hi: f64) -> Self {
        SpectralWindow { delta: hi.abs().min(lo.abs()), strip_lo: lo, strip_hi: hi, axis_tolerance: AXIS_TOLERANCE }
    }

    pub fn on_axis(&self, nu: C64) -> bool {
        nu.re.abs() <= self.axis_tolerance * nu.im.abs().max(1.0)
    }

    pub fn contains(&self, nu: C64) -> bool {
        nu.re > self.strip_lo && nu.re < self.strip_hi
    }

    fn near_boundary(&self, nu: C64) -> bool {
        let t = self.axis_tolerance * nu.im.abs().max(1.0);
        (nu.re - self.strip_lo).abs() <= t || (nu.re - self.strip_hi).abs() <= t
    }
}

/// A Jordan chain phi_0 .. phi_{s-1} of L at `nu` (full 3n vectors).
#[derive(Debug, Clone)]
pub struct JordanChain {
    pub nu: C64,
    pub vectors: Vec<CVec>,
}

impl JordanChain {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Largest relative residual of the chain relations sum_k L^(k)/k! phi_{j-k} = 0.
    pub fn residual(&self, forms: &FormMatrices<f64>) -> f64 {
        let l = taylor_coefficients(forms, self.nu);
        let scale = l[0].norm() + l[1].norm() + l[2].norm();
        let head = self.vectors[0].norm();
        (0..self.len())
            .map(|j| {
                let mut r = CVec::zeros(self.vectors[0].len());
                for (k, lk) in l.iter().enumerate().take(j + 1) {
                    r += lk * &self.vectors[j - k];
                }
                r.norm() / (scale * head)
            })
            .fold(0.0, f64::max)
    }
}

/// One eigenvalue with its canonical system of chains and the adjoint system.
#[derive(Debug, Clone)]
pub struct Mode {
    pub nu: C64,
    pub branch: Branch,
    pub chains: Vec<JordanChain>,
    /// Adjoint chains psi_{j,s}, same shape as `chains`; empty until computed.
    pub adjoint: Vec<Vec<CVec>>,
    pub propagating: bool,
}

impl Mode {
    pub fn geometric_multiplicity(&self) -> usize {
        self.chains.len()
    }

    pub fn partial_multiplicities(&self) -> Vec<usize> {
        self.chains.iter().map(|c| c.len()).collect()
    }

    pub fn algebraic_multiplicity(&self) -> usize {
        self.chains.iter().map(|c| c.len()).sum()
    }

    pub fn has_adjoint(&self) -> bool {
        self.adjoint.len() == self.chains.len()
    }
}

#[derive(Debug, Clone)]
pub struct ModeSet {
    pub modes: Vec<Mode>,
    pub window: SpectralWindow,
    /// Nodes per displacement component.
    pub n: usize,
}

impl ModeSet {
    pub fn propagating(&self) -> impl Iterator<Item = &Mode> {
        self.modes.iter().filter(|m| m.propagating)
    }

    /// Sum of algebraic multiplicities over the axis eigenvalues.
    pub fn kappa(&self) -> usize {
        self.propagating().map(|m| m.algebraic_multiplicity()).sum()
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        self.modes.iter().map(|m| m.nu).collect()
    }
}

/// L(nu), L'(nu), L''(nu)/2 restricted to a dof subset.
#[derive(Debug, Clone)]
pub struct BlockPencil {
    pub a: CMat,
    pub b: CMat,
    pub c: CMat,
    pub a0: CMat,
    pub m: CMat,
    pub omega: f64,
    pub idx: Vec<usize>,
    pub dim: usize,
    pub branch: Branch,
}

impl BlockPencil {
    pub fn new(forms: &FormMatrices<f64>, branch: Branch) -> Self {
        let idx = branch.indices(forms.n);
        BlockPencil {
            a: submatrix(&forms.a(), &idx),
            b: submatrix(&forms.b, &idx),
            c: submatrix(&forms.c, &idx),
            a0: submatrix(&forms.a0, &idx),
            m: submatrix(&forms.m, &idx),
            omega: forms.omega,
            dim: forms.dim(),
            idx,
            branch,
        }
    }

    pub fn size(&self) -> usize {
        self.idx.len()
    }

    pub fn eval(&self, nu: C64) -> CMat {
        let mi = -I * nu;
        &self.a + &self.b * mi + &self.c * (mi * mi)
    }

    pub fn deriv(&self, nu: C64) -> CMat {
        &self.b * (-I) - &self.c * (nu * 2.0)
    }

    /// Taylor coefficients L^(k)(nu)/k! for k = 0, 1, 2.
    pub fn taylor(&self, nu: C64) -> [CMat; 3] {
        [self.eval(nu), self.deriv(nu), -&self.c]
    }

    /// Symmetric diagonal scaling that equilibrates the pencil near `nu`.
    pub fn scaling(&self, nu: C64) -> Vec<f64> {
        let w2 = self.omega * self.omega;
        let s2 = 1.0 + nu.norm_sqr();
        (0..self.size())
            .map(|i| {
                let d = self.a0[(i, i)].norm() + w2 * self.m[(i, i)].norm() + s2 * self.c[(i, i)].norm();
                1.0 / d.sqrt()
            })
            .collect()
    }

    pub fn embed(&self, v: &CVec) -> CVec {
        scatter(&self.idx, v, self.dim)
    }
}

pub(crate) fn taylor_coefficients(forms: &FormMatrices<f64>, nu: C64) -> [CMat; 3] {
    let mi = -I * nu;
    let l0 = forms.a() + &forms.b * mi + &forms.c * (mi * mi);
    let l1 = &forms.b * (-I) - &forms.c * (nu * 2.0);
    [l0, l1, -&forms.c]
}

/// All finite eigenvalues of the block pencil from its companion linearization.
///
/// The substitution u3 -> i u3 makes the coefficients of the pencil in mu = -i nu
/// real symmetric, so the companion matrix is real.
pub fn block_eigenvalues(bp: &BlockPencil) -> Result<Vec<C64>> {
    let m = bp.size();
    let n = bp.dim / 3;
    let d: Vec<C64> = bp
        .idx
        .iter()
        .map(|&g| if g / n == 2 { I } else { c(1.0) })
        .collect();
    let realify = |x: &CMat| -> DMatrix<f64> {
        DMatrix::from_fn(m, m, |i, j| (d[i].conj() * x[(i, j)] * d[j]).re)
    };
    let (ar, br, cr) = (realify(&bp.a), realify(&bp.b), realify(&bp.c));
    let chol = cr
        .clone()
        .cholesky()
        .ok_or_else(|| Error::EigensolverFailure("leading coefficient is not positive definite".into()))?;
    let x = chol.solve(&ar);
    let y = chol.solve(&br);
    let mut comp = DMatrix::<f64>::zeros(2 * m, 2 * m);
    for i in 0..m {
        comp[(i, m + i)] = 1.0;
        for j in 0..m {
            comp[(m + i, j)] = -x[(i, j)];
            comp[(m + i, m + j)] = -y[(i, j)];
        }
    }
    let schur = nalgebra::Schur::try_new(comp, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::EigensolverFailure("Schur iteration did not converge".into()))?;
    let mus = schur.complex_eigenvalues();
    Ok(mus.iter().map(|&mu| I * C64::new(mu.re, mu.im)).collect())
}

/// Newton refinement on the bordered system [L, L' phi; w^H, 0].
pub(crate) fn newton_refine(bp: &BlockPencil, nu0: C64) -> (C64, CVec, bool) {
    let (_, v) = svd_right(&bp.eval(nu0));
    let mut phi = v.column(bp.size() - 1).into_owned();
    let w = phi.clone();
    let mut nu = nu0;
    let m = bp.size();
    let mut converged = false;
    for _ in 0..40 {
        let l = bp.eval(nu);
        let lp = &bp.deriv(nu) * &phi;
        let mut big = CMat::zeros(m + 1, m + 1);
        big.view_mut((0, 0), (m, m)).copy_from(&l);
        big.view_mut((0, m), (m, 1)).copy_from(&lp);
        big.view_mut((m, 0), (1, m)).copy_from(&w.adjoint());
        let mut rhs = CVec::zeros(m + 1);
        rhs.rows_mut(0, m).copy_from(&(-(&l * &phi)));
        rhs[m] = -((w.adjoint() * &phi)[0] - 1.0);
        let Some(step) = lu_solve_vec(&big, &rhs) else { break };
        phi += step.rows(0, m);
        nu += step[m];
        if !nu.re.is_finite() || (nu - nu0).norm() > 1e-2 * (1.0 + nu0.norm()) {
            return (nu0, w, false);
        }
        if step[m].norm() <= 4.0 * f64::EPSILON * (1.0 + nu.norm()) {
            converged = true;
            break;
        }
    }
    (nu, phi, converged)
}

/// Group eigenvalue approximations that belong to one (possibly defective) eigenvalue.
pub(crate) fn cluster(bp: &BlockPencil, nus: &[C64]) -> Result<Vec<Vec<usize>>> {
    let k = nus.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..k {
        for j in i + 1..k {
            if (nus[i] - nus[j]).norm() <= CLUSTER_TOLERANCE * (1.0 + nus[i].norm()) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    // A defective eigenvalue splits into a ring of radius ~ eps^(1/k) under round-off and
    // discretization; merge nearby groups when the rank test at their centre confirms it.
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a == b || (nus[i] - nus[j]).norm() > 1e-4 * (1.0 + nus[i].norm()) {
                continue;
            }
            let members: Vec<usize> = (0..k).filter(|&t| {
                let r = find(&mut parent, t);
                r == a || r == b
            }).collect();
            let centre = members.iter().map(|&t| nus[t]).sum::<C64>() / members.len() as f64;
            if let Ok(chains) = chains::jordan_chains_block(bp, centre, false) {
                let alg: usize = chains.iter().map(|c| c.len()).sum();
                if alg >= members.len() {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut roots: Vec<usize> = Vec::new();
    for i in 0..k {
        let r = find(&mut parent, i);
        match roots.iter().position(|&x| x == r) {
            Some(g) => groups[g].push(i),
            None => {
                roots.push(r);
                groups.push(vec![i]);
            }
        }
    }
    Ok(groups)
}

/// Refined, clustered eigenvalues of one block whose real part lies in (lo, hi).
pub(crate) fn block_modes(bp: &BlockPencil, lo: f64, hi: f64, window: &SpectralWindow) -> Result<Vec<Mode>> {
    let raw = block_eigenvalues(bp)?;
    let margin = 1e-6;
    let mut refined = Vec::new();
    for nu0 in raw.into_iter().filter(|z| z.re > lo - margin && z.re < hi + margin && z.norm().is_finite()) {
        let (nu, _, _) = newton_refine(bp, nu0);
        refined.push(nu);
    }
    let groups = cluster(bp, &refined)?;
    let mut modes = Vec::new();
    for g in groups {
        let mut nu = g.iter().map(|&t| refined[t]).sum::<C64>() / g.len() as f64;
        if window.on_axis(nu) {
            nu = C64::new(0.0, nu.im);
        }
        if window.near_boundary(nu) {
            return Err(Error::WindowViolation(format!(
                "eigenvalue {nu} lies on the boundary line of the strip ({}, {})",
                window.strip_lo, window.strip_hi
            )));
        }
        if !(nu.re > lo && nu.re < hi) {
            continue;
        }
        let chains = chains::jordan_chains_block(bp, nu, true)?;
        let chains = if chains.is_empty() {
            // the rank test did not see a kernel: fall back to the Newton eigenvector
            let (_, phi, _) = newton_refine(bp, nu);
            let mut phi = phi.normalize();
            fix_phase(&mut phi);
            vec![vec![phi]]
        } else {
            chains
        };
        modes.push(Mode {
            nu,
            branch: bp.branch,
            chains: chains
                .into_iter()
                .map(|vs| JordanChain { nu, vectors: vs.iter().map(|v| bp.embed(v)).collect() })
                .collect(),
            adjoint: Vec::new(),
            propagating: window.on_axis(nu),
        });
    }
    Ok(modes)
}

fn sort_modes(modes: &mut [Mode]) {
    modes.sort_by(|a, b| {
        a.branch
            .cmp(&b.branch)
            .then(a.nu.re.partial_cmp(&b.nu.re).unwrap().reverse())
            .then(a.nu.im.partial_cmp(&b.nu.im).unwrap())
    });
}

/// All eigenvalues in the window strip with canonical chains (adjoint chains not yet filled).
pub fn solve_qep(forms: &FormMatrices<f64>, window: &SpectralWindow) -> Result<ModeSet> {
    if !(window.delta > 0.0) {
        return Err(Error::WindowViolation("delta must be positive".into()));
    }
    let mut modes = Vec::new();
    for branch in Branch::ALL {
        let bp = BlockPencil::new(forms, branch);
        modes.extend(block_modes(&bp, window.strip_lo, window.strip_hi, window)?);
    }
    sort_modes(&mut modes);
    Ok(ModeSet { modes, window: *window, n: forms.n })
}

/// Eigenvalues with a nonzero real part, sorted by |Re nu| (raw linearization values).
///
/// Near-axis groups that the rank test identifies as one defective axis eigenvalue
/// (a cutoff split into +-eps) are not reported.
pub fn off_axis_eigenvalues(forms: &FormMatrices<f64>) -> Result<Vec<(C64, Branch)>> {
    let mut out = Vec::new();
    for branch in Branch::ALL {
        let bp = BlockPencil::new(forms, branch);
        let raw: Vec<C64> = block_eigenvalues(&bp)?.into_iter().filter(|z| z.norm().is_finite()).collect();
        let near: Vec<C64> = raw
            .iter()
            .copied()
            .filter(|z| z.re.abs() > 1e-6 * z.im.abs().max(1.0) && z.re.abs() <= 1e-4 * (1.0 + z.norm()))
            .collect();
        let mut absorbed: Vec<C64> = Vec::new();
        if !near.is_empty() {
            let refined: Vec<C64> = near.iter().map(|&z| newton_refine(&bp, z).0).collect();
            for g in cluster(&bp, &refined)? {
                if g.len() < 2 {
                    continue;
                }
                let centre = g.iter().map(|&t| refined[t]).sum::<C64>() / g.len() as f64;
                if centre.re.abs() <= AXIS_TOLERANCE * centre.im.abs().max(1.0) {
                    absorbed.extend(g.iter().map(|&t| near[t]));
                }
            }
        }
        for nu in raw {
            if nu.re.abs() > 1e-6 * nu.im.abs().max(1.0) && !absorbed.contains(&nu) {
                out.push((nu, branch));
            }
        }
    }
    out.sort_by(|a, b| a.0.re.abs().partial_cmp(&b.0.re.abs()).unwrap());
    Ok(out)
}

/// Smallest |Re nu| over eigenvalues off the imaginary axis.
pub fn spectral_gap(forms: &FormMatrices<f64>) -> Result<f64> {
    let off = off_axis_eigenvalues(forms)?;
    let (nu, branch) = off
        .first()
        .copied()
        .ok_or_else(|| Error::EigensolverFailure("no off-axis eigenvalues found".into()))?;
    let (refined, _, _) = newton_refine(&BlockPencil::new(forms, branch), nu);
    Ok(refined.re.abs())
}

/// Default window: delta is half the distance from the axis to the nearest off-axis eigenvalue.
pub fn default_window(forms: &FormMatrices<f64>, max_delta: Option<f64>) -> Result<SpectralWindow> {
    let gap = spectral_gap(forms)?;
    let mut delta = 0.5 * gap;
    if let Some(cap) = max_delta {
        delta = delta.min(cap);
    }
    Ok(SpectralWindow::symmetric(delta))
}

/// Check the window dichotomy: inside |Re nu| < delta only axis eigenvalues.
pub fn validate_window(forms: &FormMatrices<f64>, window: &SpectralWindow) -> Result<()> {
    for (nu, _) in off_axis_eigenvalues(forms)? {
        if nu.re.abs() < window.delta {
            return Err(Error::AssumptionViolation(format!(
                "eigenvalue {nu} lies strictly inside the window |Re nu| < {} but off the imaginary axis",
                window.delta
            )));
        }
    }
    Ok(())
}

/// The `count` slowest decaying modes (Re nu < -delta), used to close truncated domains.
pub fn decaying_modes(forms: &FormMatrices<f64>, window: &SpectralWindow, count: usize) -> Result<Vec<Mode>> {
    let mut cands: Vec<(C64, Branch)> = off_axis_eigenvalues(forms)?
        .into_iter()
        .filter(|(nu, _)| nu.re < -window.delta)
        .collect();
    cands.sort_by(|a, b| b.0.re.partial_cmp(&a.0.re).unwrap());
    cands.truncate(count);
    let mut out = Vec::new();
    for branch in Branch::ALL {
        let picked: Vec<C64> = cands.iter().filter(|(_, b)| *b == branch).map(|(nu, _)| *nu).collect();
        if picked.is_empty() {
            continue;
        }
        let lo = picked.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let hi = picked.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let bp = BlockPencil::new(forms, branch);
        let strip = SpectralWindow { strip_lo: lo - 1e-3, strip_hi: hi + 1e-3, ..*window };
        let modes = block_modes(&bp, strip.strip_lo, strip.strip_hi, &strip)?;
        out.extend(modes.into_iter().filter(|m| picked.iter().any(|z| (m.nu - z).norm() < 1e-6 * (1.0 + z.norm()))));
    }
    out.sort_by(|a, b| b.nu.re.partial_cmp(&a.nu.re).unwrap());
    out.truncate(count);
    for m in &mut out {
        m.propagating = false;
    }
    Ok(out)
}
