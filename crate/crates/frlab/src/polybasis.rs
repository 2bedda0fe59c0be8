//! Legendre and Lagrange polynomial machinery: quadrature rules, Vandermonde
//! and differentiation matrices, and boundary interpolation vectors.
//!
//! Everything operates on the reference element `[-1, 1]`. Legendre
//! polynomials are evaluated by the three-term recurrence so that orders up to
//! ~15 stay well conditioned; Gauss nodes come from Newton iteration on
//! Chebyshev initial guesses.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Slack admitted when checking that an evaluation point lies in `[-1, 1]`.
const DOMAIN_SLACK: f64 = 1e-12;

/// Convergence tolerance for the Gauss-node Newton iteration.
const NEWTON_TOL: f64 = 1e-14;

/// A set of solution points on the reference element, optionally carrying
/// quadrature weights (always present for Gauss-Legendre rules).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    /// Polynomial order; the set holds `p + 1` points.
    pub p: usize,
    /// Strictly increasing abscissae in `[-1, 1]`.
    pub nodes: Vec<f64>,
    /// Quadrature weights matching `nodes`.
    pub weights: Vec<f64>,
}

impl NodeSet {
    /// Number of points in the set.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// The per-element discrete operators every other module consumes.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    /// Nodal differentiation matrix, `D[(i, j)] = l_j'(xi_i)`.
    pub d: DMatrix<f64>,
    /// Legendre Vandermonde, `V[(i, j)] = psi_j(xi_i)`.
    pub v: DMatrix<f64>,
    /// Diagonal of the modal mass matrix, `2 / (2j + 1)`.
    pub m_tilde: DVector<f64>,
    /// Interpolation vector to the left face `xi = -1`.
    pub l_l: DVector<f64>,
    /// Interpolation vector to the right face `xi = +1`.
    pub l_r: DVector<f64>,
}

impl OperatorSet {
    /// Modal differentiation matrix `V^{-1} D V`.
    pub fn modal_diff(&self) -> Result<DMatrix<f64>> {
        let v_inv = self
            .v
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("Vandermonde matrix".into()))?;
        Ok(&v_inv * &self.d * &self.v)
    }
}

fn check_domain(xi: f64) -> Result<()> {
    if xi.abs() > 1.0 + DOMAIN_SLACK {
        return Err(Error::Domain(format!("xi = {xi} outside [-1, 1]")));
    }
    Ok(())
}

/// Evaluate the Legendre polynomial `psi_n` together with its derivative,
/// without a domain check. Uses the recurrences
/// `(n+1) psi_{n+1} = (2n+1) xi psi_n - n psi_{n-1}` and
/// `psi'_{n+1} = psi'_{n-1} + (2n+1) psi_n`.
pub(crate) fn legendre_with_deriv(n: usize, xi: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut pm1, mut p) = (1.0, xi); // psi_0, psi_1
    let (mut dm1, mut d) = (0.0, 1.0); // psi_0', psi_1'
    for m in 1..n {
        let mf = m as f64;
        let pp1 = ((2.0 * mf + 1.0) * xi * p - mf * pm1) / (mf + 1.0);
        let dp1 = dm1 + (2.0 * mf + 1.0) * p;
        pm1 = p;
        p = pp1;
        dm1 = d;
        d = dp1;
    }
    (p, d)
}

/// Evaluate the Legendre polynomial of the first kind `psi_n(xi)`.
pub fn legendre_eval(n: usize, xi: f64) -> Result<f64> {
    check_domain(xi)?;
    Ok(legendre_with_deriv(n, xi).0)
}

/// Evaluate the derivative `d psi_n / d xi`.
pub fn legendre_deriv(n: usize, xi: f64) -> Result<f64> {
    check_domain(xi)?;
    Ok(legendre_with_deriv(n, xi).1)
}

/// The Legendre cross-derivative inner product `integral of psi_l * psi_m'`:
/// `2` when `l` and `m` have opposite parity with `l <= m`, `0` otherwise.
pub fn legendre_udu(l: usize, m: usize) -> f64 {
    if l <= m && (l % 2) != (m % 2) {
        2.0
    } else {
        0.0
    }
}

/// Gauss-Legendre rule with `n` points: the roots of `psi_n` with weights
/// `2 / ((1 - x^2) psi_n'(x)^2)`. Exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre_points(n: usize) -> Result<NodeSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one node".into()));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Only the lower half needs Newton iteration; the rest follows by symmetry.
    for i in 0..n.div_ceil(2) {
        // Chebyshev-based initial guess for the i-th root in ascending order.
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dpn = 0.0;
        for _ in 0..100 {
            let (pn, dp) = legendre_with_deriv(n, x);
            dpn = dp;
            let dx = pn / dp;
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                let (_, dp) = legendre_with_deriv(n, x);
                dpn = dp;
                break;
            }
        }
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        let w = 2.0 / ((1.0 - x * x) * dpn * dpn);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        // The middle root of an odd rule is exactly zero.
        nodes[n / 2] = 0.0;
        let (_, dp) = legendre_with_deriv(n, 0.0);
        weights[n / 2] = 2.0 / (dp * dp);
    }
    Ok(NodeSet {
        p: n - 1,
        nodes,
        weights,
    })
}

/// Evaluate the `j`-th Lagrange cardinal basis of `ns` at `xi`.
pub fn lagrange_eval(ns: &NodeSet, j: usize, xi: f64) -> Result<f64> {
    if j >= ns.len() {
        return Err(Error::Index {
            index: j,
            len: ns.len(),
        });
    }
    let mut value = 1.0;
    for (i, &xi_i) in ns.nodes.iter().enumerate() {
        if i != j {
            value *= (xi - xi_i) / (ns.nodes[j] - xi_i);
        }
    }
    Ok(value)
}

/// All Lagrange cardinal values at `xi` as a column vector.
pub fn lagrange_all(ns: &NodeSet, xi: f64) -> DVector<f64> {
    DVector::from_fn(ns.len(), |j, _| {
        let mut value = 1.0;
        for (i, &xi_i) in ns.nodes.iter().enumerate() {
            if i != j {
                value *= (xi - xi_i) / (ns.nodes[j] - xi_i);
            }
        }
        value
    })
}

/// Assemble the differentiation matrix, Vandermonde, modal mass diagonal, and
/// face interpolation vectors for a node set.
pub fn build_operators(ns: &NodeSet) -> Result<OperatorSet> {
    let n = ns.len();
    for i in 1..n {
        if ns.nodes[i] - ns.nodes[i - 1] <= f64::EPSILON {
            return Err(Error::Singular(
                "nodes must be distinct and increasing".into(),
            ));
        }
    }
    // Barycentric weights for a numerically clean differentiation matrix.
    let mut bary = vec![1.0; n];
    for (j, w) in bary.iter_mut().enumerate() {
        for i in 0..n {
            if i != j {
                *w *= ns.nodes[j] - ns.nodes[i];
            }
        }
        *w = 1.0 / *w;
    }
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let dij = (bary[j] / bary[i]) / (ns.nodes[i] - ns.nodes[j]);
                d[(i, j)] = dij;
                diag -= dij;
            }
        }
        // The row sum of a differentiation matrix vanishes (constants).
        d[(i, i)] = diag;
    }
    let v = DMatrix::from_fn(n, n, |i, j| legendre_with_deriv(j, ns.nodes[i]).0);
    let m_tilde = DVector::from_fn(n, |j, _| 2.0 / (2.0 * j as f64 + 1.0));
    Ok(OperatorSet {
        d,
        v,
        m_tilde,
        l_l: lagrange_all(ns, -1.0),
        l_r: lagrange_all(ns, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_3_INV: f64 = 0.577_350_269_189_625_8;
    const SQRT_3_5: f64 = 0.774_596_669_241_483_4;

    #[test]
    fn legendre_low_orders() {
        assert_eq!(legendre_eval(0, 0.3).unwrap(), 1.0);
        assert_eq!(legendre_eval(1, -1.0).unwrap(), -1.0);
        // (35 xi^4 - 30 xi^2 + 3) / 8 at 0.5, expanded by hand.
        assert!((legendre_eval(4, 0.5).unwrap() - (-0.2890625)).abs() < 1e-15);
        // psi_n(1) = 1 for all n.
        for n in 0..12 {
            assert!((legendre_eval(n, 1.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn legendre_derivatives() {
        assert_eq!(legendre_deriv(0, 0.7).unwrap(), 0.0);
        assert_eq!(legendre_deriv(1, -0.2).unwrap(), 1.0);
        // d/dxi (3 xi^2 - 1)/2 = 3 xi at 0.5.
        assert!((legendre_deriv(2, 0.5).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn legendre_rejects_out_of_domain() {
        assert!(legendre_eval(3, 1.5).is_err());
        assert!(legendre_deriv(3, -1.0 - 1e-9).is_err());
        // Round-off slack is admitted.
        assert!(legendre_eval(3, 1.0 + 1e-13).is_ok());
    }

    #[test]
    fn gauss_rules_match_hand_values() {
        let g1 = gauss_legendre_points(1).unwrap();
        assert!((g1.nodes[0]).abs() < 1e-15);
        assert!((g1.weights[0] - 2.0).abs() < 1e-15);

        let g2 = gauss_legendre_points(2).unwrap();
        assert!((g2.nodes[0] + SQRT_3_INV).abs() < 1e-14);
        assert!((g2.nodes[1] - SQRT_3_INV).abs() < 1e-14);
        assert!((g2.weights[0] - 1.0).abs() < 1e-14);
        assert!((g2.weights[1] - 1.0).abs() < 1e-14);

        let g3 = gauss_legendre_points(3).unwrap();
        assert!((g3.nodes[0] + SQRT_3_5).abs() < 1e-14);
        assert!((g3.nodes[1]).abs() < 1e-15);
        assert!((g3.nodes[2] - SQRT_3_5).abs() < 1e-14);
        assert!((g3.weights[0] - 5.0 / 9.0).abs() < 1e-14);
        assert!((g3.weights[1] - 8.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_weights_sum_to_two() {
        for n in 1..=12 {
            let g = gauss_legendre_points(n).unwrap();
            let sum: f64 = g.weights.iter().sum();
            assert!((sum - 2.0).abs() < 1e-13, "n = {n}: weight sum {sum}");
        }
    }

    #[test]
    fn gauss_exactness() {
        // n points integrate monomials up to degree 2n - 1 exactly.
        for n in 1..=9 {
            let g = gauss_legendre_points(n).unwrap();
            for degree in 0..2 * n {
                let quad: f64 = g
                    .nodes
                    .iter()
                    .zip(&g.weights)
                    .map(|(&x, &w)| w * x.powi(degree as i32))
                    .sum();
                let exact = if degree % 2 == 0 {
                    2.0 / (degree as f64 + 1.0)
                } else {
                    0.0
                };
                assert!(
                    (quad - exact).abs() < 1e-12,
                    "n = {n}, degree = {degree}: {quad} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn gauss_reproduces_modal_mass() {
        for n in 2..=8 {
            let g = gauss_legendre_points(n).unwrap();
            for i in 0..n {
                for j in 0..n {
                    if i + j > 2 * n - 1 {
                        continue;
                    }
                    let quad: f64 = g
                        .nodes
                        .iter()
                        .zip(&g.weights)
                        .map(|(&x, &w)| {
                            w * legendre_with_deriv(i, x).0 * legendre_with_deriv(j, x).0
                        })
                        .sum();
                    let exact = if i == j {
                        2.0 / (2.0 * i as f64 + 1.0)
                    } else {
                        0.0
                    };
                    assert!((quad - exact).abs() < 1e-12, "({i}, {j}): {quad}");
                }
            }
        }
    }

    #[test]
    fn lagrange_cardinality_and_partition() {
        let ns = gauss_legendre_points(5).unwrap();
        for j in 0..ns.len() {
            for i in 0..ns.len() {
                let v = lagrange_eval(&ns, j, ns.nodes[i]).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-12);
            }
        }
        for &xi in &[-0.9, -0.3, 0.1, 0.77] {
            let sum: f64 = (0..ns.len())
                .map(|j| lagrange_eval(&ns, j, xi).unwrap())
                .sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lagrange_hand_value() {
        // Middle basis on {-1, 0, 1} at 0.5: (xi + 1)(xi - 1) / ((0+1)(0-1)).
        let ns = NodeSet {
            p: 2,
            nodes: vec![-1.0, 0.0, 1.0],
            weights: vec![1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0],
        };
        assert!((lagrange_eval(&ns, 1, 0.5).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn lagrange_index_error() {
        let ns = gauss_legendre_points(3).unwrap();
        assert!(lagrange_eval(&ns, 3, 0.0).is_err());
    }

    #[test]
    fn operators_p1_hand_check() {
        let ns = gauss_legendre_points(2).unwrap();
        let ops = build_operators(&ns).unwrap();
        let dx = ns.nodes[1] - ns.nodes[0];
        // Two linear cardinal bases: derivative is constant +-1/dx.
        for i in 0..2 {
            assert!((ops.d[(i, 0)] + 1.0 / dx).abs() < 1e-13);
            assert!((ops.d[(i, 1)] - 1.0 / dx).abs() < 1e-13);
        }
    }

    #[test]
    fn operators_invariants() {
        for n in 1..=9 {
            let ns = gauss_legendre_points(n).unwrap();
            let ops = build_operators(&ns).unwrap();
            // D annihilates constants.
            let ones = DVector::from_element(n, 1.0);
            assert!((&ops.d * &ones).amax() < 1e-12);
            // V column 0 is all ones.
            for i in 0..n {
                assert!((ops.v[(i, 0)] - 1.0).abs() < 1e-14);
            }
            // Face vectors interpolate constants exactly.
            assert!((ops.l_l.dot(&ones) - 1.0).abs() < 1e-13);
            assert!((ops.l_r.dot(&ones) - 1.0).abs() < 1e-13);
            // Modal mass diagonal.
            for j in 0..n {
                assert!((ops.m_tilde[j] - 2.0 / (2.0 * j as f64 + 1.0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn differentiation_is_exact_on_polynomials() {
        let ns = gauss_legendre_points(7).unwrap();
        let ops = build_operators(&ns).unwrap();
        // d/dxi xi^k = k xi^{k-1} for k <= p.
        for k in 1..=ns.p {
            let values = DVector::from_fn(ns.len(), |i, _| ns.nodes[i].powi(k as i32));
            let derivative = &ops.d * &values;
            for i in 0..ns.len() {
                let exact = k as f64 * ns.nodes[i].powi(k as i32 - 1);
                assert!((derivative[i] - exact).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn modal_diff_shifts_degree() {
        let ns = gauss_legendre_points(5).unwrap();
        let ops = build_operators(&ns).unwrap();
        let dt = ops.modal_diff().unwrap();
        // Column j of D-tilde holds the Legendre coefficients of psi_j', which
        // involve only lower orders of opposite parity with coefficient 2n+1.
        for j in 0..ns.len() {
            for i in 0..ns.len() {
                let expect = if i < j && (i % 2) != (j % 2) {
                    2.0 * i as f64 + 1.0
                } else {
                    0.0
                };
                assert!((dt[(i, j)] - expect).abs() < 1e-10, "({i}, {j})");
            }
        }
    }

    #[test]
    fn legendre_udu_cases() {
        assert_eq!(legendre_udu(0, 1), 2.0);
        assert_eq!(legendre_udu(1, 0), 0.0);
        assert_eq!(legendre_udu(2, 2), 0.0);
        // Agreement with direct quadrature for all l, m <= 10.
        let g = gauss_legendre_points(12).unwrap();
        for l in 0..=10 {
            for m in 0..=10 {
                let quad: f64 = g
                    .nodes
                    .iter()
                    .zip(&g.weights)
                    .map(|(&x, &w)| w * legendre_with_deriv(l, x).0 * legendre_with_deriv(m, x).1)
                    .sum();
                assert!(
                    (quad - legendre_udu(l, m)).abs() < 1e-10,
                    "({l}, {m}): {quad}"
                );
            }
        }
    }
}
