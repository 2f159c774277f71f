//! Gauss rules and Lagrange bases on the reference interval [-1, 1].

use crate::scalar::Real;

/// Legendre polynomial P_n and its derivative at `x`.
fn legendre<T: Real>(n: usize, x: T) -> (T, T) {
    let one = T::one();
    if n == 0 {
        return (one, T::zero());
    }
    let (mut p0, mut p1) = (one, x);
    for k in 2..=n {
        let kf = T::lit(k as f64);
        let p2 = ((T::lit(2.0) * kf - one) * x * p1 - (kf - one) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = T::lit(n as f64);
    let dp = if (one - x * x).abs() > T::epsilon() {
        nf * (p0 - x * p1) / (one - x * x)
    } else {
        let s = if x > T::zero() || n % 2 == 1 { one } else { -one };
        s * nf * (nf + one) / T::lit(2.0)
    };
    (p1, dp)
}

/// Gauss-Legendre rule with `n` points, exact for degree 2n - 1.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1);
    let mut x = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    for i in 0..n {
        let guess = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        // iterate in f64 first, then polish in T
        let mut z = guess;
        for _ in 0..100 {
            let (p, dp) = legendre::<f64>(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let mut zt = T::lit(z);
        for _ in 0..3 {
            let (p, dp) = legendre(n, zt);
            zt -= p / dp;
        }
        let (_, dp) = legendre(n, zt);
        x[n - 1 - i] = zt;
        w[n - 1 - i] = T::lit(2.0) / ((T::one() - zt * zt) * dp * dp);
    }
    (x, w)
}

/// Gauss-Lobatto-Legendre nodes for polynomial degree `p` (p + 1 points, endpoints included).
pub fn gll_nodes<T: Real>(p: usize) -> Vec<T> {
    assert!(p >= 1);
    let mut nodes = vec![T::zero(); p + 1];
    nodes[0] = -T::one();
    nodes[p] = T::one();
    // interior nodes are the roots of P_p'
    for i in 1..p {
        let mut z = -(std::f64::consts::PI * i as f64 / p as f64).cos();
        for _ in 0..100 {
            let (pv, dp) = legendre::<f64>(p, z);
            // P_p'' from the Legendre ODE
            let d2p = (2.0 * z * dp - (p * (p + 1)) as f64 * pv) / (1.0 - z * z);
            let dz = dp / d2p;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = T::lit(z);
    }
    if p.is_multiple_of(2) {
        nodes[p / 2] = T::zero();
    }
    nodes
}

/// Lagrange basis on a fixed node set.
#[derive(Debug, Clone)]
pub struct LagrangeBasis<T> {
    pub nodes: Vec<T>,
    denom: Vec<T>,
}

impl<T: Real> LagrangeBasis<T> {
    pub fn new(nodes: Vec<T>) -> Self {
        let denom = (0..nodes.len())
            .map(|a| {
                nodes
                    .iter()
                    .enumerate()
                    .filter(|&(b, _)| b != a)
                    .fold(T::one(), |acc, (_, &xb)| acc * (nodes[a] - xb))
            })
            .collect();
        LagrangeBasis { nodes, denom }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Values and first derivatives of every basis function at `x`.
    pub fn eval(&self, x: T) -> (Vec<T>, Vec<T>) {
        let n = self.nodes.len();
        let mut val = vec![T::zero(); n];
        let mut der = vec![T::zero(); n];
        for a in 0..n {
            let mut prod = T::one();
            let mut dsum = T::zero();
            for b in 0..n {
                if b == a {
                    continue;
                }
                // derivative of the product by the product rule
                let mut term = T::one();
                for c in 0..n {
                    if c != a && c != b {
                        term *= x - self.nodes[c];
                    }
                }
                dsum += term;
                prod *= x - self.nodes[b];
            }
            val[a] = prod / self.denom[a];
            der[a] = dsum / self.denom[a];
        }
        (val, der)
    }
}
