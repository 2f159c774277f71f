//! Cross-section discretization of (-h, h) and the sesquilinear forms of the pencil.
//!
//! Unknowns are ordered component-major: index `c * n + a` holds component `c`
//! (0 = u1, 1 = u2, 2 = u3) at node `a`. A form f(phi, psi) is stored as the
//! matrix X with f(phi, psi) = psi^H X phi.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, gll_nodes, LagrangeBasis};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConfig<T> {
    pub lame_lambda: T,
    pub lame_mu: T,
    pub density: T,
    pub omega: T,
    pub half_thickness: T,
}

impl<T: Real> ProblemConfig<T> {
    pub fn new(lame_lambda: T, lame_mu: T, density: T, omega: T, half_thickness: T) -> Self {
        ProblemConfig { lame_lambda, lame_mu, density, omega, half_thickness }
    }

    pub fn with_omega(&self, omega: T) -> Self {
        ProblemConfig { omega, ..*self }
    }

    /// Shear wave speed sqrt(mu / rho).
    pub fn shear_speed(&self) -> T {
        (self.lame_mu / self.density).sqrt()
    }
}

pub fn validate_config<T: Real>(cfg: ProblemConfig<T>) -> Result<ProblemConfig<T>> {
    let (l, m) = (cfg.lame_lambda, cfg.lame_mu);
    if !(m > T::zero()) {
        return Err(Error::InvalidMaterial(format!("mu must be positive, got {m:?}")));
    }
    let k = T::lit(3.0) * l + T::lit(2.0) * m;
    if !(k > T::zero()) {
        return Err(Error::InvalidMaterial(format!("3λ+2μ must be positive, got {k:?}")));
    }
    if !(cfg.density > T::zero()) {
        return Err(Error::InvalidMaterial(format!("density must be positive, got {:?}", cfg.density)));
    }
    if !(cfg.half_thickness > T::zero()) {
        return Err(Error::InvalidGeometry(format!(
            "half thickness must be positive, got {:?}",
            cfg.half_thickness
        )));
    }
    if !(cfg.omega > T::zero()) {
        return Err(Error::InvalidFrequency(format!("omega must be positive, got {:?}", cfg.omega)));
    }
    Ok(cfg)
}

/// Continuous Lagrange elements of order p on a uniform partition of [-h, h].
#[derive(Debug, Clone)]
pub struct CrossSectionGrid<T> {
    pub nodes: Vec<T>,
    pub element_order: usize,
    pub n_elems: usize,
    pub half_thickness: T,
    pub basis: LagrangeBasis<T>,
    /// Gauss rule on the reference element, exact to degree 2p + 1.
    pub quad_points: Vec<T>,
    pub quad_weights: Vec<T>,
}

impl<T: Real> CrossSectionGrid<T> {
    pub fn dof_per_component(&self) -> usize {
        self.n_elems * self.element_order + 1
    }

    pub fn total_dof(&self) -> usize {
        3 * self.dof_per_component()
    }

    pub fn element_length(&self) -> T {
        T::lit(2.0) * self.half_thickness / T::lit(self.n_elems as f64)
    }

    /// Global node index of local node `a` in element `e`.
    pub fn node_index(&self, e: usize, a: usize) -> usize {
        e * self.element_order + a
    }

    /// Element containing `x` and the reference coordinate of `x` in it.
    pub fn locate(&self, x: T) -> (usize, T) {
        let h = self.half_thickness;
        let len = self.element_length();
        let s = ((x + h) / len).floor().to_usize().unwrap_or(0);
        let e = s.min(self.n_elems - 1);
        let left = -h + len * T::lit(e as f64);
        let r = T::lit(2.0) * (x - left) / len - T::one();
        (e, r)
    }

    /// Quadrature points of the whole section: (x, weight, element, basis values, x-derivatives).
    pub fn section_quadrature(&self) -> Vec<QuadPoint<T>> {
        let len = self.element_length();
        let jac = len / T::lit(2.0);
        let mut out = Vec::with_capacity(self.n_elems * self.quad_points.len());
        for e in 0..self.n_elems {
            let left = -self.half_thickness + len * T::lit(e as f64);
            for (&r, &w) in self.quad_points.iter().zip(&self.quad_weights) {
                let (v, d) = self.basis.eval(r);
                out.push(QuadPoint {
                    x: left + jac * (r + T::one()),
                    weight: w * jac,
                    element: e,
                    values: v,
                    derivs: d.into_iter().map(|di| di / jac).collect(),
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct QuadPoint<T> {
    pub x: T,
    pub weight: T,
    pub element: usize,
    pub values: Vec<T>,
    pub derivs: Vec<T>,
}

pub fn build_grid<T: Real>(cfg: &ProblemConfig<T>, n_elems: usize, p: usize) -> Result<CrossSectionGrid<T>> {
    if p < 2 {
        return Err(Error::InvalidDiscretization(format!("element order must be at least 2, got {p}")));
    }
    if n_elems < 1 {
        return Err(Error::InvalidDiscretization("at least one element is required".into()));
    }
    if !(cfg.half_thickness > T::zero()) {
        return Err(Error::InvalidGeometry("half thickness must be positive".into()));
    }
    let h = cfg.half_thickness;
    let ref_nodes = gll_nodes::<T>(p);
    let len = T::lit(2.0) * h / T::lit(n_elems as f64);
    let mut nodes = Vec::with_capacity(n_elems * p + 1);
    for e in 0..n_elems {
        let left = -h + len * T::lit(e as f64);
        for (a, &r) in ref_nodes.iter().enumerate() {
            if e > 0 && a == 0 {
                continue;
            }
            nodes.push(left + len * (r + T::one()) / T::lit(2.0));
        }
    }
    nodes[0] = -h;
    let last = nodes.len() - 1;
    nodes[last] = h;
    let (qp, qw) = gauss_legendre::<T>(p + 1);
    Ok(CrossSectionGrid {
        nodes,
        element_order: p,
        n_elems,
        half_thickness: h,
        basis: LagrangeBasis::new(ref_nodes),
        quad_points: qp,
        quad_weights: qw,
    })
}

/// Scalar 1D finite element matrices on the grid (n x n, real).
#[derive(Debug, Clone)]
pub struct ScalarMatrices<T> {
    /// mass: int N_a N_b
    pub mass: DMatrix<T>,
    /// stiffness: int N_a' N_b'
    pub stiff: DMatrix<T>,
    /// mixed: entry (b, a) = int N_b N_a'
    pub mixed: DMatrix<T>,
}

pub fn scalar_matrices<T: Real>(grid: &CrossSectionGrid<T>) -> ScalarMatrices<T> {
    let n = grid.dof_per_component();
    let mut mass = DMatrix::from_element(n, n, T::zero());
    let mut stiff = mass.clone();
    let mut mixed = mass.clone();
    let p = grid.element_order;
    for q in grid.section_quadrature() {
        for b in 0..=p {
            let gb = grid.node_index(q.element, b);
            for a in 0..=p {
                let ga = grid.node_index(q.element, a);
                mass[(gb, ga)] += q.weight * q.values[a] * q.values[b];
                stiff[(gb, ga)] += q.weight * q.derivs[a] * q.derivs[b];
                mixed[(gb, ga)] += q.weight * q.values[b] * q.derivs[a];
            }
        }
    }
    ScalarMatrices { mass, stiff, mixed }
}

/// Discrete forms a0, m, b, c of the pencil plus the traction coupling e.
///
/// `e` is real with psi^H E phi = int lambda phi1' conj(psi3) + mu phi3' conj(psi1);
/// the pencil coefficient is B = i (E^T - E).
#[derive(Debug, Clone)]
pub struct FormMatrices<T> {
    pub a0: DMatrix<Complex<T>>,
    pub m: DMatrix<Complex<T>>,
    pub b: DMatrix<Complex<T>>,
    pub c: DMatrix<Complex<T>>,
    pub e: DMatrix<Complex<T>>,
    /// Unweighted block-diagonal mass int N_a N_b for each component.
    pub mass: DMatrix<Complex<T>>,
    pub omega: T,
    /// Nodes per component.
    pub n: usize,
}

impl<T: Real> FormMatrices<T> {
    /// A = A0 - omega^2 M.
    pub fn a(&self) -> DMatrix<Complex<T>> {
        let w2 = Complex::new(self.omega * self.omega, T::zero());
        &self.a0 - &self.m * w2
    }

    pub fn dim(&self) -> usize {
        3 * self.n
    }
}

fn embed<T: Real>(
    dst: &mut DMatrix<Complex<T>>,
    row_comp: usize,
    col_comp: usize,
    n: usize,
    src: &DMatrix<T>,
    coef: Complex<T>,
) {
    for i in 0..n {
        for j in 0..n {
            let v = src[(i, j)];
            if v != T::zero() {
                dst[(row_comp * n + i, col_comp * n + j)] += coef * Complex::new(v, T::zero());
            }
        }
    }
}

pub fn assemble_forms<T: Real>(cfg: &ProblemConfig<T>, grid: &CrossSectionGrid<T>) -> FormMatrices<T> {
    let n = grid.dof_per_component();
    let s = scalar_matrices(grid);
    let re = |x: T| Complex::new(x, T::zero());
    let (lam, mu, rho) = (cfg.lame_lambda, cfg.lame_mu, cfg.density);
    let p2m = lam + T::lit(2.0) * mu;
    let zero = DMatrix::from_element(3 * n, 3 * n, Complex::new(T::zero(), T::zero()));

    let mut a0 = zero.clone();
    embed(&mut a0, 0, 0, n, &s.stiff, re(p2m));
    embed(&mut a0, 1, 1, n, &s.stiff, re(mu));
    embed(&mut a0, 2, 2, n, &s.stiff, re(mu));

    let mut mass = zero.clone();
    for comp in 0..3 {
        embed(&mut mass, comp, comp, n, &s.mass, re(T::one()));
    }
    let m = &mass * re(rho);

    let mut c = zero.clone();
    embed(&mut c, 0, 0, n, &s.mass, re(mu));
    embed(&mut c, 1, 1, n, &s.mass, re(mu));
    embed(&mut c, 2, 2, n, &s.mass, re(p2m));

    // E: row (3,b), col (1,a) = lambda G_ba; row (1,b), col (3,a) = mu G_ba
    let mut e = zero;
    embed(&mut e, 2, 0, n, &s.mixed, re(lam));
    embed(&mut e, 0, 2, n, &s.mixed, re(mu));

    let i = Complex::new(T::zero(), T::one());
    let b = (e.transpose() - &e) * i;

    FormMatrices { a0, m, b, c, e, mass, omega: cfg.omega, n }
}

/// L(nu) = A + (-i nu) B + (-i nu)^2 C.
pub fn evaluate_pencil<T: Real>(forms: &FormMatrices<T>, nu: Complex<T>) -> DMatrix<Complex<T>> {
    let mi = Complex::new(T::zero(), -T::one()) * nu;
    forms.a() + &forms.b * mi + &forms.c * (mi * mi)
}

/// d^k L / d nu^k for k = 0, 1, 2.
pub fn pencil_derivative<T: Real>(
    forms: &FormMatrices<T>,
    nu: Complex<T>,
    order: usize,
) -> Result<DMatrix<Complex<T>>> {
    let i = Complex::new(T::zero(), T::one());
    match order {
        0 => Ok(evaluate_pencil(forms, nu)),
        1 => Ok(&forms.b * (-i) - &forms.c * (nu * T::lit(2.0))),
        2 => Ok(&forms.c * Complex::new(-T::lit(2.0), T::zero())),
        k => Err(Error::UnsupportedOrder(k)),
    }
}
