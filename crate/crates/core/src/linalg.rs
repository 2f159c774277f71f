//! Dense complex helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Singular values (descending) with the right singular vectors as columns of V.
pub fn svd_right(m: &CMat) -> (Vec<f64>, CMat) {
    let svd = nalgebra::SVD::new(m.clone(), false, true);
    let sv = svd.singular_values.iter().copied().collect();
    let v = svd.v_t.expect("requested").adjoint();
    (sv, v)
}

/// Full SVD: (U, singular values descending, V).
pub fn svd_full(m: &CMat) -> (CMat, Vec<f64>, CMat) {
    let svd = nalgebra::SVD::new(m.clone(), true, true);
    let sv = svd.singular_values.iter().copied().collect();
    (svd.u.expect("requested"), sv, svd.v_t.expect("requested").adjoint())
}

pub fn lu_solve(m: &CMat, rhs: &CMat) -> Option<CMat> {
    m.clone().lu().solve(rhs)
}

pub fn lu_solve_vec(m: &CMat, rhs: &CVec) -> Option<CVec> {
    m.clone().lu().solve(rhs)
}

/// Least-squares solve through the SVD; returns None when the system is rank deficient
/// below `rel_tol` relative to the largest singular value.
pub fn lstsq(m: &CMat, rhs: &CVec, rel_tol: f64) -> Option<CVec> {
    let svd = nalgebra::SVD::new(m.clone(), true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 || svd.singular_values.min() < rel_tol * smax {
        return None;
    }
    svd.solve(rhs, 0.0).ok()
}

/// Condition number in the 2-norm.
pub fn cond(m: &CMat) -> f64 {
    let sv = nalgebra::SVD::new(m.clone(), false, false).singular_values;
    let lo = sv.min();
    if lo == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / lo
    }
}

/// Copy `v` (indexed by `idx`) into a zero vector of length `dim`.
pub fn scatter(idx: &[usize], v: &CVec, dim: usize) -> CVec {
    let mut out = CVec::zeros(dim);
    for (k, &i) in idx.iter().enumerate() {
        out[i] = v[k];
    }
    out
}

pub fn gather(idx: &[usize], v: &CVec) -> CVec {
    CVec::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

pub fn submatrix(m: &CMat, idx: &[usize]) -> CMat {
    CMat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Multiply by a phase so the largest-magnitude entry becomes real and positive.
pub fn fix_phase(v: &mut CVec) {
    if let Some((k, _)) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
    {
        let z = v[k];
        if z.norm() > 0.0 {
            let ph = z.conj() / z.norm();
            *v *= ph;
        }
    }
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_gather_roundtrip() {
        let v = CVec::from_vec(vec![c(1.0), c(2.0)]);
        let full = scatter(&[3, 0], &v, 4);
        assert_eq!(full[3], c(1.0));
        assert_eq!(full[0], c(2.0));
        assert_eq!(gather(&[3, 0], &full), v);
    }

    #[test]
    fn least_squares_and_condition() {
        let m = CMat::from_fn(3, 2, |i, j| c((i + 2 * j) as f64 + if i == j { 1.0 } else { 0.0 }));
        let x = CVec::from_vec(vec![C64::new(1.0, -1.0), c(0.5)]);
        let got = lstsq(&m, &(&m * &x), 1e-14).unwrap();
        assert!((got - x).norm() < 1e-12);
        assert!((cond(&CMat::identity(3, 3)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn phase_fix_makes_largest_entry_real() {
        let mut v = CVec::from_vec(vec![C64::new(0.1, 0.2), C64::new(0.0, -3.0)]);
        fix_phase(&mut v);
        assert!(v[1].im.abs() < 1e-15 && v[1].re > 0.0);
    }
}
