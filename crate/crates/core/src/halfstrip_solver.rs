//! Half-strip problem on (0, L) x (-h, h) with Dirichlet data at x3 = 0 and a modal
//! radiation closure at x3 = L; end scattering, DtN map and coefficient cross-checks.
//!
//! Axial elements have the same Lagrange order as the section. Element-interior axial
//! nodes are condensed out, leaving one unknown vector per element end section.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cross_section::FormMatrices;
use crate::error::{Error, Result};
use crate::linalg::{cond, gather, lu_solve, scatter, submatrix, CMat, CVec, C64};
use crate::modes_flux::{pairing_from_traces, smoothstep, Field, ModalBasis, WaveSum};
use crate::pencil_spectrum::{decaying_modes, Branch, Mode, SpectralWindow};
use crate::quadrature::{gauss_legendre, gll_nodes, LagrangeBasis};

pub const DEFAULT_LENGTH: f64 = 8.0;
pub const DEFAULT_ELEMENT_LENGTH: f64 = 0.25;
pub const DEFAULT_EVANESCENT: usize = 8;
const CLOSURE_CONDITION_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedDomain {
    pub length: f64,
    pub axial_elems: usize,
    pub axial_order: usize,
    pub n_evanescent: usize,
}

impl TruncatedDomain {
    pub fn new(length: f64, element_length: f64, axial_order: usize, n_evanescent: usize) -> Result<Self> {
        if !(length >= 4.0) {
            return Err(Error::InvalidGeometry(format!("truncation length must be at least 4, got {length}")));
        }
        if !(element_length > 0.0) || axial_order < 2 {
            return Err(Error::InvalidDiscretization(format!(
                "axial element length {element_length} and order {axial_order} are not admissible"
            )));
        }
        let axial_elems = (length / element_length).round().max(1.0) as usize;
        Ok(TruncatedDomain { length, axial_elems, axial_order, n_evanescent })
    }

    pub fn element_length(&self) -> f64 {
        self.length / self.axial_elems as f64
    }

    pub fn n_nodes(&self) -> usize {
        self.axial_elems * self.axial_order + 1
    }

    /// Axial coordinates of all nodes.
    pub fn node_positions(&self) -> Vec<f64> {
        let r = gll_nodes::<f64>(self.axial_order);
        let len = self.element_length();
        let mut out = Vec::with_capacity(self.n_nodes());
        for e in 0..self.axial_elems {
            for (a, &ra) in r.iter().enumerate() {
                if e > 0 && a == 0 {
                    continue;
                }
                out.push(len * (e as f64 + 0.5 * (ra + 1.0)));
            }
        }
        *out.last_mut().unwrap() = self.length;
        out
    }

    /// Section x3 = R where modal coefficients are extracted.
    pub fn extraction_section(&self) -> f64 {
        self.length - 1.0
    }
}

/// Scalar axial element matrices on an element of length `len`.
#[derive(Debug, Clone)]
struct AxialElement {
    /// (l, k): int M_k M_l
    mass: DMatrix<f64>,
    /// (l, k): int M_k' M_l'
    stiff: DMatrix<f64>,
    /// (l, k): int M_l' M_k
    g1: DMatrix<f64>,
    /// (l, k): int M_l M_k'
    g2: DMatrix<f64>,
}

fn axial_element(order: usize, len: f64) -> AxialElement {
    let basis = LagrangeBasis::new(gll_nodes::<f64>(order));
    let (qx, qw) = gauss_legendre::<f64>(order + 2);
    let n = order + 1;
    let jac = 0.5 * len;
    let mut el = AxialElement {
        mass: DMatrix::zeros(n, n),
        stiff: DMatrix::zeros(n, n),
        g1: DMatrix::zeros(n, n),
        g2: DMatrix::zeros(n, n),
    };
    for (&r, &w) in qx.iter().zip(&qw) {
        let (v, d) = basis.eval(r);
        let d: Vec<f64> = d.iter().map(|x| x / jac).collect();
        for l in 0..n {
            for k in 0..n {
                el.mass[(l, k)] += w * jac * v[k] * v[l];
                el.stiff[(l, k)] += w * jac * d[k] * d[l];
                el.g1[(l, k)] += w * jac * d[l] * v[k];
                el.g2[(l, k)] += w * jac * v[l] * d[k];
            }
        }
    }
    el
}

/// Condensed matrices of one displacement branch.
#[derive(Debug, Clone)]
struct BranchSystem {
    branch: Branch,
    idx: Vec<usize>,
    m: usize,
    mass: CMat,
    /// full element matrix, rows = test, blocks ordered by local axial node
    elem: CMat,
    s00: CMat,
    s01: CMat,
    s10: CMat,
    s11: CMat,
    /// interior nodal values = recover * [left; right]
    recover: CMat,
}

impl BranchSystem {
    fn new(forms: &FormMatrices<f64>, branch: Branch, ax: &AxialElement, order: usize) -> Result<Self> {
        let idx = branch.indices(forms.n);
        let m = idx.len();
        let a = submatrix(&forms.a(), &idx);
        let c = submatrix(&forms.c, &idx);
        let e = submatrix(&forms.e, &idx);
        let et = e.transpose();
        let mass = submatrix(&forms.mass, &idx);
        let nl = order + 1;
        let mut elem = CMat::zeros(nl * m, nl * m);
        for l in 0..nl {
            for k in 0..nl {
                let blk = &a * C64::new(ax.mass[(l, k)], 0.0)
                    + &c * C64::new(ax.stiff[(l, k)], 0.0)
                    + &e * C64::new(ax.g1[(l, k)], 0.0)
                    + &et * C64::new(ax.g2[(l, k)], 0.0);
                elem.view_mut((l * m, k * m), (m, m)).copy_from(&blk);
            }
        }
        let bnd: Vec<usize> = (0..m).chain(order * m..(order + 1) * m).collect();
        let int: Vec<usize> = (m..order * m).collect();
        let pick = |rows: &[usize], cols: &[usize]| CMat::from_fn(rows.len(), cols.len(), |i, j| elem[(rows[i], cols[j])]);
        let kbb = pick(&bnd, &bnd);
        let kbi = pick(&bnd, &int);
        let kib = pick(&int, &bnd);
        let kii = pick(&int, &int);
        let recover = -lu_solve(&kii, &kib)
            .ok_or_else(|| Error::SingularSystem("element interior block is singular".into()))?;
        let schur = kbb + &kbi * &recover;
        Ok(BranchSystem {
            branch,
            m,
            mass,
            s00: schur.view((0, 0), (m, m)).into_owned(),
            s01: schur.view((0, m), (m, m)).into_owned(),
            s10: schur.view((m, 0), (m, m)).into_owned(),
            s11: schur.view((m, m), (m, m)).into_owned(),
            elem,
            recover,
            idx,
        })
    }
}

/// Assembled (condensed) half-strip system for both branches.
#[derive(Debug, Clone)]
pub struct TruncatedSystem {
    pub domain: TruncatedDomain,
    blocks: Vec<BranchSystem>,
    dim: usize,
}

impl TruncatedSystem {
    /// b(u, v) = v^H K u over the elements, for nodal fields on all axial nodes.
    pub fn form(&self, u: &[CVec], v: &[CVec]) -> C64 {
        let p = self.domain.axial_order;
        let mut sum = C64::new(0.0, 0.0);
        for blk in &self.blocks {
            let m = blk.m;
            for el in 0..self.domain.axial_elems {
                let stack = |f: &[CVec]| {
                    let mut s = CVec::zeros((p + 1) * m);
                    for a in 0..=p {
                        s.rows_mut(a * m, m).copy_from(&gather(&blk.idx, &f[el * p + a]));
                    }
                    s
                };
                let (ue, ve) = (stack(u), stack(v));
                if ue.iter().all(|z| z.norm() == 0.0) || ve.iter().all(|z| z.norm() == 0.0) {
                    continue;
                }
                sum += ve.dotc(&(&blk.elem * ue));
            }
        }
        sum
    }
}

pub fn assemble_truncated(forms: &FormMatrices<f64>, domain: &TruncatedDomain) -> Result<TruncatedSystem> {
    let ax = axial_element(domain.axial_order, domain.element_length());
    let blocks = Branch::ALL
        .iter()
        .map(|&b| BranchSystem::new(forms, b, &ax, domain.axial_order))
        .collect::<Result<Vec<_>>>()?;
    Ok(TruncatedSystem { domain: *domain, blocks, dim: forms.dim() })
}

/// Dirichlet trace on x3 = 0 (nodal values, 3n).
#[derive(Debug, Clone)]
pub struct DirichletData {
    pub g: CVec,
}

/// u0 = g psi(x3) at the axial nodes, psi = 1 - smoothstep on [0, 1].
pub fn lift_dirichlet(g: &DirichletData, domain: &TruncatedDomain) -> Vec<CVec> {
    domain
        .node_positions()
        .iter()
        .map(|&x| &g.g * C64::new(1.0 - smoothstep(x, 0.0, 1.0).0, 0.0))
        .collect()
}

/// Nodal field on the axial nodes, evaluated with the axial Lagrange basis.
#[derive(Debug, Clone)]
pub struct AxialField {
    pub nodes: Vec<CVec>,
    pub domain: TruncatedDomain,
    basis: LagrangeBasis<f64>,
}

impl AxialField {
    pub fn new(nodes: Vec<CVec>, domain: TruncatedDomain) -> Self {
        AxialField { nodes, basis: LagrangeBasis::new(gll_nodes(domain.axial_order)), domain }
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let len = self.domain.element_length();
        let e = ((x / len).floor().max(0.0) as usize).min(self.domain.axial_elems - 1);
        (e, 2.0 * (x - e as f64 * len) / len - 1.0)
    }
}

impl Field for AxialField {
    fn value(&self, x: f64) -> CVec {
        let (e, r) = self.locate(x);
        let (v, _) = self.basis.eval(r);
        let p = self.domain.axial_order;
        (0..=p).fold(CVec::zeros(self.nodes[0].len()), |acc, a| acc + &self.nodes[e * p + a] * C64::new(v[a], 0.0))
    }

    fn derivative(&self, x: f64) -> CVec {
        let (e, r) = self.locate(x);
        let (_, d) = self.basis.eval(r);
        let p = self.domain.axial_order;
        let jac = 0.5 * self.domain.element_length();
        (0..=p).fold(CVec::zeros(self.nodes[0].len()), |acc, a| {
            acc + &self.nodes[e * p + a] * C64::new(d[a] / jac, 0.0)
        })
    }
}

/// Value and weak traction of a field on the section x3 = L.
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    pub branch: Branch,
    pub value: CVec,
    pub traction: CVec,
}

fn trace_of(forms: &FormMatrices<f64>, f: &WaveSum, x: f64) -> BoundaryTrace {
    let value = f.value(x);
    let deriv = f.derivative(x);
    BoundaryTrace {
        branch: f.branch().unwrap_or(Branch::InPlane),
        traction: &forms.c * &deriv + &forms.e * &value,
        value,
    }
}

/// Traces at x3 = L of the outgoing, incoming and decaying modes.
#[derive(Debug, Clone)]
pub struct RadiationClosure {
    pub outgoing: Vec<BoundaryTrace>,
    pub incoming: Vec<BoundaryTrace>,
    pub decaying: Vec<BoundaryTrace>,
    pub decaying_nu: Vec<C64>,
}

impl RadiationClosure {
    /// Traction of the expansion of `trace` in outgoing and decaying modes.
    pub fn apply(&self, trace: &CVec) -> Result<CVec> {
        let cols: Vec<&BoundaryTrace> = self.outgoing.iter().chain(&self.decaying).collect();
        let dim = trace.len();
        let p = CMat::from_fn(dim, cols.len(), |i, j| cols[j].value[i]);
        let t = CMat::from_fn(dim, cols.len(), |i, j| cols[j].traction[i]);
        let c = cond(&p);
        if c > CLOSURE_CONDITION_LIMIT {
            return Err(Error::IllConditionedClosure(format!("trace expansion condition number {c:.3e}")));
        }
        let a = crate::linalg::lstsq(&p, trace, 1e-14)
            .ok_or_else(|| Error::IllConditionedClosure("rank deficient trace expansion".into()))?;
        Ok(t * a)
    }
}

/// Decaying chain waves at x3 = L with the axial variable measured from L.
fn decaying_traces(forms: &FormMatrices<f64>, modes: &[Mode]) -> (Vec<BoundaryTrace>, Vec<C64>) {
    let mut out = Vec::new();
    let mut nus = Vec::new();
    for md in modes {
        for ch in &md.chains {
            for s in 0..ch.len() {
                let value = ch.vectors[s].clone();
                let mut deriv = &value * md.nu;
                if s > 0 {
                    deriv += &ch.vectors[s - 1];
                }
                out.push(BoundaryTrace {
                    branch: md.branch,
                    traction: &forms.c * &deriv + &forms.e * &value,
                    value,
                });
                nus.push(md.nu);
            }
        }
    }
    (out, nus)
}

pub fn radiation_closure(
    forms: &FormMatrices<f64>,
    basis: &ModalBasis,
    window: &SpectralWindow,
    domain: &TruncatedDomain,
) -> Result<RadiationClosure> {
    let l = domain.length;
    let outgoing = basis.outgoing().iter().map(|u| trace_of(forms, u, l)).collect();
    let incoming = basis.incoming().iter().map(|u| trace_of(forms, u, l)).collect();
    let modes = if domain.n_evanescent > 0 { decaying_modes(forms, window, domain.n_evanescent)? } else { Vec::new() };
    let (decaying, decaying_nu) = decaying_traces(forms, &modes);
    Ok(RadiationClosure { outgoing, incoming, decaying, decaying_nu })
}

/// Banded LU with partial pivoting (row interchanges, L kept as Gauss transforms).
#[derive(Debug, Clone)]
struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    w: usize,
    ab: Vec<C64>,
    piv: Vec<usize>,
}

impl BandedLu {
    fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let w = 2 * kl + ku + 1;
        BandedLu { n, kl, ku, w, ab: vec![C64::new(0.0, 0.0); n * w], piv: vec![0; n] }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.w + (j + self.kl - i)
    }

    fn add(&mut self, i: usize, j: usize, v: C64) {
        let k = self.at(i, j);
        self.ab[k] += v;
    }

    fn add_block(&mut self, r0: usize, c0: usize, blk: &CMat) {
        for i in 0..blk.nrows() {
            for j in 0..blk.ncols() {
                let v = blk[(i, j)];
                if v.norm() != 0.0 {
                    self.add(r0 + i, c0 + j, v);
                }
            }
        }
    }

    fn factor(&mut self) -> Result<()> {
        let n = self.n;
        for k in 0..n {
            let imax = (k + self.kl).min(n - 1);
            let jmax = (k + self.kl + self.ku).min(n - 1);
            let mut p = k;
            let mut best = self.ab[self.at(k, k)].norm();
            for i in k + 1..=imax {
                let v = self.ab[self.at(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularSystem(format!("zero pivot in column {k}")));
            }
            self.piv[k] = p;
            if p != k {
                for j in k..=jmax {
                    let (a, b) = (self.at(k, j), self.at(p, j));
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[self.at(k, k)];
            for i in k + 1..=imax {
                let ik = self.at(i, k);
                let l = self.ab[ik] / pivot;
                self.ab[ik] = l;
                if l.norm() == 0.0 {
                    continue;
                }
                for j in k + 1..=jmax {
                    let kj = self.ab[self.at(k, j)];
                    let ij = self.at(i, j);
                    self.ab[ij] -= l * kj;
                }
            }
        }
        Ok(())
    }

    fn solve(&self, b: &mut CMat) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap_rows(k, p);
            }
            for i in k + 1..=(k + self.kl).min(n - 1) {
                let l = self.ab[self.at(i, k)];
                if l.norm() == 0.0 {
                    continue;
                }
                for c in 0..b.ncols() {
                    let v = b[(k, c)];
                    b[(i, c)] -= l * v;
                }
            }
        }
        for i in (0..n).rev() {
            for c in 0..b.ncols() {
                let mut s = b[(i, c)];
                for j in i + 1..=(i + self.kl + self.ku).min(n - 1) {
                    s -= self.ab[self.at(i, j)] * b[(j, c)];
                }
                b[(i, c)] = s / self.ab[self.at(i, i)];
            }
        }
    }
}

/// Factored branch system with a fixed set of free closure modes.
#[derive(Debug, Clone)]
struct BranchFactor {
    lu: BandedLu,
    /// normalized closure columns (local)
    p: CMat,
    col_scale: Vec<f64>,
}

/// Right-hand side of one branch solve: Dirichlet trace and fixed content at x3 = L.
struct BranchRhs {
    g: CVec,
    fixed: Option<(CVec, CVec)>,
}

fn factor_branch(sys: &BranchSystem, domain: &TruncatedDomain, cols: &[&BoundaryTrace]) -> Result<BranchFactor> {
    let m = sys.m;
    let s = domain.axial_elems;
    let r = cols.len();
    let mut p = CMat::from_fn(m, r, |i, j| cols[j].value[sys.idx[i]]);
    let mut t = CMat::from_fn(m, r, |i, j| cols[j].traction[sys.idx[i]]);
    let mut col_scale = vec![1.0; r];
    for j in 0..r {
        let nrm = p.column(j).norm();
        if nrm > 0.0 {
            col_scale[j] = nrm;
            p.column_mut(j).unscale_mut(nrm);
            t.column_mut(j).unscale_mut(nrm);
        }
    }
    if r > 0 {
        let c = cond(&p);
        if c > CLOSURE_CONDITION_LIMIT {
            return Err(Error::IllConditionedClosure(format!(
                "{} closure trace matrix has condition number {c:.3e}",
                sys.branch.name()
            )));
        }
    }
    let n = (s - 1) * m + r;
    let band = (2 * m - 1).max(m + r.max(1) - 1);
    let mut lu = BandedLu::zeros(n, band, band);
    let base = |j: usize| (j - 1) * m;
    for j in 1..s {
        lu.add_block(base(j), base(j), &(&sys.s11 + &sys.s00));
        if j > 1 {
            lu.add_block(base(j), base(j - 1), &sys.s10);
        }
        if j + 1 < s {
            lu.add_block(base(j), base(j + 1), &sys.s01);
        } else if r > 0 {
            lu.add_block(base(j), (s - 1) * m, &(&sys.s01 * &p));
        }
    }
    if r > 0 {
        let ph = p.adjoint();
        lu.add_block((s - 1) * m, base(s - 1), &(&ph * &sys.s10));
        lu.add_block((s - 1) * m, (s - 1) * m, &(&ph * (&sys.s11 * &p - &t)));
    }
    lu.factor()?;
    Ok(BranchFactor { lu, p, col_scale })
}

/// Nodal fields (local dof) on all axial nodes and the free closure amplitudes.
fn solve_branch(
    sys: &BranchSystem,
    domain: &TruncatedDomain,
    fac: &BranchFactor,
    rhs: &[BranchRhs],
) -> Vec<(Vec<CVec>, CVec)> {
    let m = sys.m;
    let s = domain.axial_elems;
    let r = fac.p.ncols();
    let n = (s - 1) * m + r;
    let mut b = CMat::zeros(n, rhs.len());
    for (c, rh) in rhs.iter().enumerate() {
        let mut col = CVec::zeros(n);
        col.rows_mut(0, m).axpy(C64::new(-1.0, 0.0), &(&sys.s10 * &rh.g), C64::new(1.0, 0.0));
        if let Some((fv, ft)) = &rh.fixed {
            let rows = (s - 2) * m;
            col.rows_mut(rows, m).axpy(C64::new(-1.0, 0.0), &(&sys.s01 * fv), C64::new(1.0, 0.0));
            if r > 0 {
                let extra = fac.p.adjoint() * (&sys.s11 * fv - ft);
                col.rows_mut((s - 1) * m, r).axpy(C64::new(-1.0, 0.0), &extra, C64::new(1.0, 0.0));
            }
        }
        b.set_column(c, &col);
    }
    fac.lu.solve(&mut b);
    let p_ord = domain.axial_order;
    let mut out = Vec::with_capacity(rhs.len());
    for (c, rh) in rhs.iter().enumerate() {
        let sol = b.column(c);
        let amps = CVec::from_fn(r, |j, _| sol[(s - 1) * m + j]);
        let mut sections: Vec<CVec> = Vec::with_capacity(s + 1);
        sections.push(rh.g.clone());
        for j in 1..s {
            sections.push(sol.rows(base_index(j, m), m).into_owned());
        }
        let mut last = &fac.p * &amps;
        if let Some((fv, _)) = &rh.fixed {
            last += fv;
        }
        sections.push(last);
        let mut nodes = Vec::with_capacity(s * p_ord + 1);
        for e in 0..s {
            let mut ends = CVec::zeros(2 * m);
            ends.rows_mut(0, m).copy_from(&sections[e]);
            ends.rows_mut(m, m).copy_from(&sections[e + 1]);
            let interior = &sys.recover * &ends;
            nodes.push(sections[e].clone());
            for a in 0..p_ord - 1 {
                nodes.push(interior.rows(a * m, m).into_owned());
            }
        }
        nodes.push(sections[s].clone());
        let amps = CVec::from_fn(r, |j, _| amps[j] / fac.col_scale[j]);
        out.push((nodes, amps));
    }
    out
}

fn base_index(j: usize, m: usize) -> usize {
    (j - 1) * m
}

/// Slab norms of the remainder and their fitted exponential rate.
#[derive(Debug, Clone)]
pub struct DecayReport {
    pub slab_starts: Vec<f64>,
    pub slab_norms: Vec<f64>,
    /// least-squares slope of ln(slab norm) over slabs in [2, L - 1]
    pub slope: f64,
}

#[derive(Debug, Clone)]
pub struct HalfStripSolution {
    pub field: AxialField,
    /// a_k = i q(u, U_k) for the outgoing modes, in basis order
    pub amplitudes: Vec<C64>,
    pub decay: DecayReport,
    /// max residual of the section equations after the solve (relative)
    pub residual: f64,
}

/// Least-squares slope of y against x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// The half-strip solver with both closure factorizations prepared.
pub struct HalfStripSolver<'a> {
    pub forms: &'a FormMatrices<f64>,
    pub basis: &'a ModalBasis,
    pub system: TruncatedSystem,
    pub closure: RadiationClosure,
    /// outgoing + decaying free modes, per branch
    fac_out: Vec<BranchFactor>,
    /// incoming + decaying free modes, per branch
    fac_in: Vec<BranchFactor>,
}

impl<'a> HalfStripSolver<'a> {
    pub fn new(
        forms: &'a FormMatrices<f64>,
        basis: &'a ModalBasis,
        window: &SpectralWindow,
        domain: &TruncatedDomain,
    ) -> Result<Self> {
        for u in &basis.modes {
            if u.terms.iter().any(|(_, w)| w.coeffs.len() > 1) {
                return Err(Error::AssumptionViolation(
                    "propagating Jordan chain present (cutoff frequency); the half-strip problem is not posed".into(),
                ));
            }
            if u.branch().is_none() {
                return Err(Error::AssumptionViolation("modal basis mixes the SH and in-plane branches".into()));
            }
        }
        let system = assemble_truncated(forms, domain)?;
        let closure = radiation_closure(forms, basis, window, domain)?;
        let mut fac_out = Vec::new();
        let mut fac_in = Vec::new();
        for blk in &system.blocks {
            let b = blk.branch;
            let dec: Vec<&BoundaryTrace> = closure.decaying.iter().filter(|t| t.branch == b).collect();
            let out: Vec<&BoundaryTrace> =
                closure.outgoing.iter().filter(|t| t.branch == b).chain(dec.iter().copied()).collect();
            let inc: Vec<&BoundaryTrace> =
                closure.incoming.iter().filter(|t| t.branch == b).chain(dec.iter().copied()).collect();
            fac_out.push(factor_branch(blk, domain, &out)?);
            fac_in.push(factor_branch(blk, domain, &inc)?);
        }
        Ok(HalfStripSolver { forms, basis, system, closure, fac_out, fac_in })
    }

    pub fn domain(&self) -> &TruncatedDomain {
        &self.system.domain
    }

    fn solve_general(&self, g: &CVec, fixed: Option<&BoundaryTrace>, incoming_free: bool) -> Vec<CVec> {
        let dim = self.system.dim;
        let n_nodes = self.domain().n_nodes();
        let mut nodes = vec![CVec::zeros(dim); n_nodes];
        for (bi, blk) in self.system.blocks.iter().enumerate() {
            let gl = gather(&blk.idx, g);
            let fx = fixed
                .filter(|f| f.branch == blk.branch)
                .map(|f| (gather(&blk.idx, &f.value), gather(&blk.idx, &f.traction)));
            if gl.iter().all(|z| z.norm() == 0.0) && fx.is_none() {
                continue;
            }
            let fac = if incoming_free { &self.fac_in[bi] } else { &self.fac_out[bi] };
            let res = solve_branch(blk, self.domain(), fac, &[BranchRhs { g: gl, fixed: fx }]);
            for (k, v) in res[0].0.iter().enumerate() {
                nodes[k] += scatter(&blk.idx, v, dim);
            }
        }
        nodes
    }

    /// a_k = i q(u, U_k) averaged over the slab [R - 1/2, R + 1/2] around R = L - 1.
    pub fn extract(&self, field: &AxialField, modes: &[WaveSum]) -> Vec<C64> {
        let r = self.domain().extraction_section();
        let pts = slab_quadrature(self.domain(), r - 0.5, r + 0.5);
        modes
            .iter()
            .map(|u| {
                let mut acc = C64::new(0.0, 0.0);
                for &(x, w) in &pts {
                    let q = pairing_from_traces(
                        self.forms,
                        &field.value(x),
                        &field.derivative(x),
                        &u.value(x),
                        &u.derivative(x),
                    );
                    acc += q * w;
                }
                C64::new(0.0, 1.0) * acc
            })
            .collect()
    }

    fn decay_report(&self, field: &AxialField, known: &[(C64, &WaveSum)]) -> DecayReport {
        let l = self.domain().length;
        let mut starts = Vec::new();
        let mut norms = Vec::new();
        let mut j = 0.0;
        while j + 1.0 <= l + 1e-12 {
            let mut acc = 0.0;
            for (x, w) in slab_quadrature(self.domain(), j, j + 1.0) {
                let mut r = field.value(x);
                for (a, u) in known {
                    r -= u.value(x) * *a;
                }
                acc += w * r.dotc(&(&self.forms.mass * &r)).re;
            }
            starts.push(j);
            norms.push(acc.max(0.0).sqrt());
            j += 1.0;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = starts
            .iter()
            .zip(&norms)
            .filter(|(s, n)| **s >= 2.0 - 1e-12 && **s + 1.0 <= l - 1.0 + 1e-12 && **n > 0.0)
            .map(|(s, n)| (*s + 0.5, n.ln()))
            .unzip();
        let slope = if xs.len() >= 2 { fit_slope(&xs, &ys) } else { f64::NAN };
        DecayReport { slab_starts: starts, slab_norms: norms, slope }
    }

    fn finish(&self, nodes: Vec<CVec>, incident: Option<&WaveSum>) -> HalfStripSolution {
        let field = AxialField::new(nodes, *self.domain());
        let amplitudes = self.extract(&field, self.basis.outgoing());
        let mut known: Vec<(C64, &WaveSum)> = self.basis.outgoing().iter().zip(&amplitudes).map(|(u, a)| (*a, u)).collect();
        if let Some(inc) = incident {
            known.push((C64::new(1.0, 0.0), inc));
        }
        let decay = self.decay_report(&field, &known);
        let residual = self.interior_residual(&field);
        HalfStripSolution { field, amplitudes, decay, residual }
    }

    /// Max over interior sections of |(K u)_j| relative to |K| |u|.
    fn interior_residual(&self, field: &AxialField) -> f64 {
        let p = self.domain().axial_order;
        let s = self.domain().axial_elems;
        let mut worst: f64 = 0.0;
        for blk in &self.system.blocks {
            let sec = |j: usize| gather(&blk.idx, &field.nodes[j * p]);
            let scale = blk.s00.norm() * (0..=s).map(|j| sec(j).norm()).fold(0.0, f64::max);
            if scale == 0.0 {
                continue;
            }
            for j in 1..s {
                let r = &blk.s10 * sec(j - 1) + (&blk.s11 + &blk.s00) * sec(j) + &blk.s01 * sec(j + 1);
                worst = worst.max(r.norm() / scale);
            }
        }
        worst
    }

    /// Solution with Dirichlet data g and no incoming content.
    pub fn solve(&self, g: &DirichletData) -> HalfStripSolution {
        let nodes = self.solve_general(&g.g, None, false);
        self.finish(nodes, None)
    }

    /// eta_i: zero Dirichlet data, unit incoming U_{T+i}; returns the field and row s_{i, .}.
    pub fn end_reflection(&self, i: usize) -> Result<(HalfStripSolution, Vec<C64>)> {
        let inc = self
            .closure
            .incoming
            .get(i)
            .ok_or_else(|| Error::IndexOutOfRange(format!("incoming mode {i} of {}", self.basis.t)))?;
        let zero = CVec::zeros(self.system.dim);
        let nodes = self.solve_general(&zero, Some(inc), false);
        let sol = self.finish(nodes, Some(&self.basis.incoming()[i]));
        let row = sol.amplitudes.clone();
        Ok((sol, row))
    }

    /// zeta_k: zero Dirichlet data, unit outgoing U_k, free incoming and decaying content.
    pub fn zeta(&self, k: usize) -> Result<AxialField> {
        let out = self
            .closure
            .outgoing
            .get(k)
            .ok_or_else(|| Error::IndexOutOfRange(format!("outgoing mode {k} of {}", self.basis.t)))?;
        let zero = CVec::zeros(self.system.dim);
        Ok(AxialField::new(self.solve_general(&zero, Some(out), true), *self.domain()))
    }

    pub fn scattering_matrix(&self) -> Result<ScatteringMatrix> {
        let t = self.basis.t;
        let rows: Vec<Vec<C64>> =
            (0..t).into_par_iter().map(|i| self.end_reflection(i).map(|r| r.1)).collect::<Result<_>>()?;
        let s = CMat::from_fn(t, t, |i, k| rows[i][k]);
        let unitarity = (&s * s.adjoint() - CMat::identity(t, t)).norm();
        let reciprocity = (&s - s.transpose()).norm();
        Ok(ScatteringMatrix { s, unitarity_residual: unitarity, reciprocity_defect: reciprocity })
    }

    /// -i b(u0, zeta_k) for each outgoing k, with u0 the lifted Dirichlet data.
    pub fn green_coefficients(&self, g: &DirichletData, zetas: &[AxialField]) -> Vec<C64> {
        let u0 = lift_dirichlet(g, self.domain());
        zetas.iter().map(|z| C64::new(0.0, -1.0) * self.system.form(&u0, &z.nodes)).collect()
    }

    /// All zeta_k fields.
    pub fn zeta_fields(&self) -> Result<Vec<AxialField>> {
        (0..self.basis.t).map(|k| self.zeta(k)).collect()
    }

    /// Max deviation between q-extracted a_k and -i b(u0, zeta_k), relative to max |a_k|.
    pub fn coefficient_crosscheck(&self, g: &DirichletData, zetas: &[AxialField]) -> (f64, Vec<C64>, Vec<C64>) {
        let a = self.solve(g).amplitudes;
        let b = self.green_coefficients(g, zetas);
        let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let dev = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        (if scale > 0.0 { dev / scale } else { dev }, a, b)
    }

    /// Dirichlet-to-Neumann map g -> sigma_{i3}(u) on x3 = 0 (nodal, 3n x 3n).
    pub fn dtn_operator(&self) -> Result<DtnOperator> {
        let dim = self.system.dim;
        let mut weak = CMat::zeros(dim, dim);
        let mut nodal = CMat::zeros(dim, dim);
        for (bi, blk) in self.system.blocks.iter().enumerate() {
            let m = blk.m;
            let rhs: Vec<BranchRhs> = (0..m)
                .map(|i| {
                    let mut g = CVec::zeros(m);
                    g[i] = C64::new(1.0, 0.0);
                    BranchRhs { g, fixed: None }
                })
                .collect();
            let res = solve_branch(blk, self.domain(), &self.fac_out[bi], &rhs);
            let p = self.domain().axial_order;
            for (i, (nodes, _)) in res.iter().enumerate() {
                let t = -(&blk.s00 * &nodes[0] + &blk.s01 * &nodes[p]);
                let tn = lu_solve(&blk.mass, &CMat::from_column_slice(m, 1, t.as_slice()))
                    .ok_or_else(|| Error::SingularSystem("section mass".into()))?;
                for r in 0..m {
                    weak[(blk.idx[r], blk.idx[i])] = t[r];
                    nodal[(blk.idx[r], blk.idx[i])] = tn[(r, 0)];
                }
            }
        }
        Ok(DtnOperator { nodal, weak })
    }
}

/// Gauss points (x, weight) on [a, b], split at axial element boundaries.
fn slab_quadrature(domain: &TruncatedDomain, a: f64, b: f64) -> Vec<(f64, f64)> {
    let len = domain.element_length();
    let mut cuts = vec![a];
    let mut k = (a / len).floor() + 1.0;
    while k * len < b - 1e-12 {
        if k * len > a + 1e-12 {
            cuts.push(k * len);
        }
        k += 1.0;
    }
    cuts.push(b);
    let (gx, gw) = gauss_legendre::<f64>(domain.axial_order + 4);
    let mut out = Vec::new();
    for seg in cuts.windows(2) {
        let (mid, half) = (0.5 * (seg[0] + seg[1]), 0.5 * (seg[1] - seg[0]));
        for (&r, &w) in gx.iter().zip(&gw) {
            out.push((mid + half * r, w * half));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ScatteringMatrix {
    /// rows: incoming index i, columns: outgoing index k
    pub s: CMat,
    pub unitarity_residual: f64,
    /// ||S - S^T||, reported only
    pub reciprocity_defect: f64,
}

#[derive(Debug, Clone)]
pub struct DtnOperator {
    /// nodal traction values
    pub nodal: CMat,
    /// weak (load vector) traction
    pub weak: CMat,
}

impl DtnOperator {
    pub fn apply(&self, g: &CVec) -> CVec {
        &self.nodal * g
    }
}

/// Convenience wrapper: one half-strip solve.
pub fn solve_halfstrip(
    forms: &FormMatrices<f64>,
    g: &DirichletData,
    window: &SpectralWindow,
    domain: &TruncatedDomain,
    basis: &ModalBasis,
) -> Result<HalfStripSolution> {
    Ok(HalfStripSolver::new(forms, basis, window, domain)?.solve(g))
}

/// Convenience wrapper: the end scattering matrix.
pub fn scattering_matrix(
    forms: &FormMatrices<f64>,
    window: &SpectralWindow,
    domain: &TruncatedDomain,
    basis: &ModalBasis,
) -> Result<ScatteringMatrix> {
    HalfStripSolver::new(forms, basis, window, domain)?.scattering_matrix()
}

/// Convenience wrapper: eta_i and the row s_{i, .}.
pub fn solve_endreflection(
    forms: &FormMatrices<f64>,
    incident: usize,
    window: &SpectralWindow,
    domain: &TruncatedDomain,
    basis: &ModalBasis,
) -> Result<(HalfStripSolution, Vec<C64>)> {
    HalfStripSolver::new(forms, basis, window, domain)?.end_reflection(incident)
}

/// Convenience wrapper: the DtN map on x3 = 0.
pub fn dtn_operator(
    forms: &FormMatrices<f64>,
    window: &SpectralWindow,
    domain: &TruncatedDomain,
    basis: &ModalBasis,
) -> Result<DtnOperator> {
    HalfStripSolver::new(forms, basis, window, domain)?.dtn_operator()
}
