use crate::cross_section::FormMatrices;
use crate::error::{Error, Result};
use crate::linalg::{gather, lu_solve, svd_full, svd_right, CMat, CVec, C64};

use super::{
    taylor_coefficients, BlockPencil, Branch, JordanChain, ModeSet, RANK_AMBIGUITY, RANK_TOLERANCE,
};

const MAX_CHAIN: usize = 6;

fn scale_sym(x: &CMat, s: &[f64]) -> CMat {
    CMat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * (s[i] * s[j]))
}

/// Block lower-triangular Toeplitz matrix of the Taylor coefficients, k blocks.
fn toeplitz(l: &[CMat], k: usize) -> CMat {
    let m = l[0].nrows();
    let mut t = CMat::zeros(k * m, k * m);
    for j in 0..k {
        for d in 0..l.len().min(j + 1) {
            t.view_mut((j * m, (j - d) * m), (m, m)).copy_from(&l[d]);
        }
    }
    t
}

/// Phase that makes the largest-magnitude entry of `v` real and positive.
fn unit_phase(v: &CVec) -> C64 {
    let z = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(C64::new(1.0, 0.0));
    if z.norm() > 0.0 {
        z.conj() / z.norm()
    } else {
        C64::new(1.0, 0.0)
    }
}

fn orthonormal(vs: &[CVec]) -> Vec<CVec> {
    let mut q: Vec<CVec> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &q {
                let proj = u.dotc(&w);
                w -= u * proj;
            }
        }
        let nrm = w.norm();
        if nrm > 0.0 {
            q.push(w.unscale(nrm));
        }
    }
    q
}

/// Canonical system of Jordan chains of the block pencil at `nu` (block-local vectors).
///
/// Partial multiplicities come from the kernel dimensions of the Toeplitz matrices
/// T_1, T_2, ...; chains are picked longest first with heads independent of the
/// heads already chosen.
pub(crate) fn jordan_chains_block(bp: &BlockPencil, nu: C64, strict: bool) -> Result<Vec<Vec<CVec>>> {
    let m = bp.size();
    let s = bp.scaling(nu);
    let l: Vec<CMat> = bp.taylor(nu).iter().map(|x| scale_sym(x, &s)).collect();
    let mut dims = vec![0usize];
    let mut kernels: Vec<CMat> = Vec::new();
    for k in 1..=MAX_CHAIN {
        let t = toeplitz(&l, k);
        let (sv, v) = svd_right(&t);
        let smax = sv[0];
        if strict {
            if let Some(&amb) = sv
                .iter()
                .find(|&&x| x > RANK_TOLERANCE * smax && x < RANK_AMBIGUITY * smax)
            {
                return Err(Error::RankAmbiguity(format!(
                    "singular value {:.3e} (relative) of the order-{k} chain system at nu = {nu} lies in the tolerance band",
                    amb / smax
                )));
            }
        }
        let d = sv.iter().filter(|&&x| x <= RANK_TOLERANCE * smax).count();
        if d == *dims.last().unwrap() {
            break;
        }
        dims.push(d);
        kernels.push(v.columns(k * m - d, d).into_owned());
    }
    let kmax = dims.len() - 1;
    let mut chains: Vec<Vec<CVec>> = Vec::new();
    let mut heads: Vec<CVec> = Vec::new();
    for k in (1..=kmax).rev() {
        let need = dims[k] - dims[k - 1];
        if need <= heads.len() {
            continue;
        }
        let new = need - heads.len();
        let ker = &kernels[k - 1];
        let q = orthonormal(&heads);
        let mut proj = ker.rows(0, m).into_owned();
        for u in &q {
            let coef = u.adjoint() * &proj;
            proj -= u * coef;
        }
        let (_, sv, w) = svd_full(&proj);
        if sv.len() < new || sv[new - 1] < 1e-8 * sv[0].max(1e-300) {
            return Err(Error::RankAmbiguity(format!(
                "could not separate {new} new chain heads of length {k} at nu = {nu}"
            )));
        }
        for t in 0..new {
            let vec = ker * w.column(t);
            let chain: Vec<CVec> = (0..k).map(|j| vec.rows(j * m, m).into_owned()).collect();
            heads.push(chain[0].clone());
            chains.push(chain);
        }
    }
    // undo the scaling and normalize
    for chain in &mut chains {
        for v in chain.iter_mut() {
            for (i, x) in v.iter_mut().enumerate() {
                *x *= s[i];
            }
        }
        let nrm = chain[0].norm();
        let factor = unit_phase(&chain[0]) / nrm;
        for v in chain.iter_mut() {
            *v *= factor;
        }
        // remove head components from the generalized vectors (shifted chains stay chains)
        let h2 = chain[0].norm_squared();
        for sft in 1..chain.len() {
            let coef = chain[0].dotc(&chain[sft]) / h2;
            for t in sft..chain.len() {
                let sub = chain[t - sft].clone() * coef;
                chain[t] -= sub;
            }
        }
    }
    Ok(chains)
}

/// Canonical system of Jordan chains of L at `nu`; empty when `nu` is not an eigenvalue.
pub fn compute_jordan_chains(forms: &FormMatrices<f64>, nu: C64) -> Result<Vec<JordanChain>> {
    let mut out = Vec::new();
    for branch in Branch::ALL {
        let bp = BlockPencil::new(forms, branch);
        for chain in jordan_chains_block(&bp, nu, true)? {
            out.push(JordanChain { nu, vectors: chain.iter().map(|v| bp.embed(v)).collect() });
        }
    }
    Ok(out)
}

/// Adjoint chains normalized by the Keldysh biorthogonality conditions (block-local vectors).
///
/// Unknowns psi_{k,s} satisfy the chain relations of L^H plus
/// sum_{q+h+s = kappa_j + n} psi_{k,s}^H L_q phi_{j,h} = delta_jk delta_0n,
/// which fix them uniquely; solved in the least-squares sense.
fn adjoint_block(bp: &BlockPencil, nu: C64, chains: &[Vec<CVec>]) -> Result<Vec<Vec<CVec>>> {
    let m = bp.size();
    let s = bp.scaling(nu);
    let l: Vec<CMat> = bp.taylor(nu).iter().map(|x| scale_sym(x, &s)).collect();
    let lh: Vec<CMat> = l.iter().map(|x| x.adjoint()).collect();
    let phis: Vec<Vec<CVec>> = chains
        .iter()
        .map(|ch| ch.iter().map(|v| CVec::from_fn(m, |i, _| v[i] / s[i])).collect())
        .collect();
    let kap: Vec<usize> = chains.iter().map(|c| c.len()).collect();
    let mut off = vec![0usize];
    for &k in &kap {
        off.push(off.last().unwrap() + k);
    }
    let ktot = *off.last().unwrap();
    let jn = chains.len();
    let n_bio = jn * ktot;
    let rows = ktot * m + n_bio;
    let cols = ktot * m;
    let mut sys = CMat::zeros(rows, cols);
    let mut rhs = CVec::zeros(rows);
    let mut r = 0;
    for k in 0..jn {
        for sidx in 0..kap[k] {
            for t in 0..=sidx.min(2) {
                let col = (off[k] + sidx - t) * m;
                let mut blk = sys.view_mut((r, col), (m, m));
                blk += &lh[t];
            }
            r += m;
        }
    }
    for j in 0..jn {
        for k in 0..jn {
            for n in 0..kap[k] {
                for h in 0..kap[j] {
                    for sidx in 0..kap[k] {
                        let q = (kap[j] + n) as isize - h as isize - sidx as isize;
                        if !(0..=2).contains(&q) {
                            continue;
                        }
                        let row = phis[j][h].adjoint() * &lh[q as usize];
                        let col = (off[k] + sidx) * m;
                        for i in 0..m {
                            sys[(r, col + i)] += row[i];
                        }
                    }
                }
                if j == k && n == 0 {
                    rhs[r] = C64::new(1.0, 0.0);
                }
                r += 1;
            }
        }
    }
    let svd = nalgebra::SVD::new(sys, true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin < 1e-12 * smax {
        return Err(Error::SingularNormalization(format!(
            "biorthogonality system at nu = {nu} has relative singular value {:.3e}",
            smin / smax
        )));
    }
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::SingularNormalization(e.to_string()))?;
    let mut out = Vec::new();
    for k in 0..jn {
        let mut chain = Vec::new();
        for sidx in 0..kap[k] {
            let col = (off[k] + sidx) * m;
            chain.push(CVec::from_fn(m, |i, _| sol[col + i] * s[i]));
        }
        out.push(chain);
    }
    Ok(out)
}

/// Fill the adjoint chains of every mode.
pub fn compute_adjoint_chains(forms: &FormMatrices<f64>, modeset: &ModeSet) -> Result<ModeSet> {
    let mut out = modeset.clone();
    for mode in &mut out.modes {
        let bp = BlockPencil::new(forms, mode.branch);
        let local: Vec<Vec<CVec>> = mode
            .chains
            .iter()
            .map(|ch| ch.vectors.iter().map(|v| gather(&bp.idx, v)).collect())
            .collect();
        let adj = adjoint_block(&bp, mode.nu, &local)?;
        mode.adjoint = adj.iter().map(|ch| ch.iter().map(|v| bp.embed(v)).collect()).collect();
    }
    Ok(out)
}

/// Max deviation of the biorthogonality sums from delta_jk delta_0n.
pub fn keldysh_residual(forms: &FormMatrices<f64>, mode: &super::Mode) -> f64 {
    let l = taylor_coefficients(forms, mode.nu);
    let kap = mode.partial_multiplicities();
    let jn = kap.len();
    let mut worst: f64 = 0.0;
    for j in 0..jn {
        for k in 0..jn {
            for n in 0..kap[k] {
                let mut sum = C64::new(0.0, 0.0);
                for h in 0..kap[j] {
                    for sidx in 0..kap[k] {
                        let q = (kap[j] + n) as isize - h as isize - sidx as isize;
                        if !(0..=2).contains(&q) {
                            continue;
                        }
                        let v = &l[q as usize] * &mode.chains[j].vectors[h];
                        sum += mode.adjoint[k][sidx].dotc(&v);
                    }
                }
                let target = if j == k && n == 0 { 1.0 } else { 0.0 };
                worst = worst.max((sum - target).norm());
            }
        }
    }
    worst
}

/// Compare contour integrals of (nu - nu0)^(m-1) L(nu)^{-1} on a circle with the
/// projectors built from the chains; returns the largest relative deviation over m.
pub fn resolvent_residue_check(
    forms: &FormMatrices<f64>,
    modeset: &ModeSet,
    nu0: C64,
    radius: f64,
) -> Result<f64> {
    let inside: Vec<&super::Mode> = modeset
        .modes
        .iter()
        .filter(|md| (md.nu - nu0).norm() < radius)
        .collect();
    if inside.iter().any(|md| !md.has_adjoint()) {
        return Err(Error::SingularNormalization("adjoint chains not computed".into()));
    }
    let kmax = inside.iter().flat_map(|md| md.partial_multiplicities()).max().unwrap_or(0);
    let dim = forms.dim();
    let nodes = 128;
    let mut integrals = vec![CMat::zeros(dim, dim); kmax + 1];
    let ident = CMat::identity(dim, dim);
    for t in 0..nodes {
        let theta = 2.0 * std::f64::consts::PI * t as f64 / nodes as f64;
        let e = C64::from_polar(1.0, theta);
        let nu = nu0 + e * radius;
        let l = super::taylor_coefficients(forms, nu)[0].clone();
        let inv = lu_solve(&l, &ident)
            .ok_or_else(|| Error::CircleTouchesSpectrum(format!("singular pencil at node {nu}")))?;
        let cond = l.norm() * inv.norm();
        if !(cond < 1e14) {
            return Err(Error::CircleTouchesSpectrum(format!(
                "pencil condition {cond:.3e} at quadrature node {nu}"
            )));
        }
        // (1/2 pi i) d nu = radius e dtheta / (2 pi) over the circle
        let w = e * radius / nodes as f64;
        let mut pow = C64::new(1.0, 0.0);
        for integral in integrals.iter_mut() {
            *integral += &inv * (w * pow);
            pow *= e * radius;
        }
    }
    let mut projectors = vec![CMat::zeros(dim, dim); kmax + 1];
    for md in &inside {
        for (j, ch) in md.chains.iter().enumerate() {
            let kj = ch.len();
            for (mi, proj) in projectors.iter_mut().enumerate() {
                let mm = mi + 1;
                if mm > kj {
                    continue;
                }
                let sidx = kj - mm;
                for sigma in 0..=sidx {
                    *proj += &ch.vectors[sidx - sigma] * md.adjoint[j][sigma].adjoint();
                }
            }
        }
    }
    let scale = projectors
        .iter()
        .chain(&integrals)
        .map(|p| p.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for (mi, (integral, proj)) in integrals.iter().zip(&projectors).enumerate() {
        let denom = proj.norm().max(scale * radius.powi(mi as i32));
        worst = worst.max((integral - proj).norm() / denom);
    }
    Ok(worst)
}
