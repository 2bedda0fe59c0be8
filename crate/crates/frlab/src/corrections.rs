//! Correction-function families for flux reconstruction.
//!
//! A correction pair `(h_L, h_R)` consists of two degree `p + 1` polynomials
//! on the reference element satisfying `h_L(-1) = 1`, `h_L(1) = 0` and the
//! mirrored conditions for `h_R`. Three constructions are provided:
//!
//! * [`osfr`] — the classical one-parameter family controlled by `iota`;
//! * [`esfr_from_k`] — the matrix-parameter family built from a filter matrix
//!   `K` acting on the modal gradient solve;
//! * [`glsfr_from_params`] — the broad family fixed only by two parity-sum
//!   conditions on the Legendre coefficients, leaving `p - 2` free parameters.
//!
//! All pairs are stored as Legendre coefficient vectors of length `p + 2`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polybasis::{gauss_legendre_points, legendre_with_deriv, NodeSet, OperatorSet};

/// Tolerance on the four boundary conditions of a validated pair.
const BC_TOL: f64 = 1e-12;

/// Tolerance below which a validation-report entry counts as zero.
const REPORT_TOL: f64 = 1e-10;

/// Provenance label of a correction pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Osfr,
    Esfr,
    Glsfr,
    Custom,
}

/// A left/right correction-function pair in the Legendre basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionPair {
    /// Solution polynomial order; coefficient vectors have length `p + 2`.
    pub p: usize,
    /// Construction the pair came from.
    pub family: Family,
    /// Legendre coefficients of `h_L`.
    pub hl_coeffs: Vec<f64>,
    /// Legendre coefficients of `h_R`; always the mirror `(-1)^i hl[i]`.
    pub hr_coeffs: Vec<f64>,
}

/// Serialized form: `h_R` is implied by mirror symmetry, so only `h_L` is stored.
#[derive(Serialize, Deserialize)]
struct PairRecord {
    p: usize,
    family_tag: Family,
    hl_coeffs: Vec<f64>,
}

/// Synthesize `sum_i coeffs[i] psi_i(xi)`.
fn synth(coeffs: &[f64], xi: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| c * legendre_with_deriv(i, xi).0)
        .sum()
}

/// Synthesize the derivative `sum_i coeffs[i] psi_i'(xi)`.
fn synth_deriv(coeffs: &[f64], xi: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| c * legendre_with_deriv(i, xi).1)
        .sum()
}

fn mirror(hl: &[f64]) -> Vec<f64> {
    hl.iter()
        .enumerate()
        .map(|(i, &c)| if i % 2 == 0 { c } else { -c })
        .collect()
}

impl CorrectionPair {
    /// Build a pair from left coefficients, deriving `h_R` by mirror symmetry
    /// and validating the boundary conditions.
    pub fn from_left(p: usize, family: Family, hl_coeffs: Vec<f64>) -> Result<Self> {
        if hl_coeffs.len() != p + 2 {
            return Err(Error::InvalidParameter(format!(
                "expected {} coefficients for order {p}, got {}",
                p + 2,
                hl_coeffs.len()
            )));
        }
        let pair = Self::from_left_unchecked(p, family, hl_coeffs);
        let (left_bc, right_bc) = (synth(&pair.hl_coeffs, -1.0), synth(&pair.hl_coeffs, 1.0));
        if (left_bc - 1.0).abs() > BC_TOL || right_bc.abs() > BC_TOL {
            return Err(Error::BoundaryClosure(format!(
                "h_L(-1) = {left_bc}, h_L(1) = {right_bc}"
            )));
        }
        Ok(pair)
    }

    /// Build a pair without boundary validation. Intended for diagnostic work
    /// on deliberately inadmissible coefficient sets.
    pub fn from_left_unchecked(p: usize, family: Family, hl_coeffs: Vec<f64>) -> Self {
        let hr_coeffs = mirror(&hl_coeffs);
        Self {
            p,
            family,
            hl_coeffs,
            hr_coeffs,
        }
    }

    /// Serialize as a flat JSON record `{p, family_tag, hl_coeffs}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PairRecord {
            p: self.p,
            family_tag: self.family,
            hl_coeffs: self.hl_coeffs.clone(),
        })
        .expect("correction pair serialization cannot fail")
    }

    /// Parse a pair from the flat JSON record, restoring `h_R` by mirror symmetry.
    pub fn from_json(text: &str) -> Result<Self> {
        let record: PairRecord = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("correction JSON: {e}")))?;
        if record.hl_coeffs.len() != record.p + 2 {
            return Err(Error::InvalidParameter(format!(
                "correction JSON: expected {} coefficients for order {}, got {}",
                record.p + 2,
                record.p,
                record.hl_coeffs.len()
            )));
        }
        Ok(Self::from_left_unchecked(
            record.p,
            record.family_tag,
            record.hl_coeffs,
        ))
    }
}

/// Free parameters of the GLSFR construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlsfrParams {
    /// Order, at least 2.
    pub p: usize,
    /// `p - 2` free Legendre coefficients `h-tilde[0..p-3]` (empty when `p = 2`).
    pub q: Vec<f64>,
}

impl GlsfrParams {
    pub fn new(p: usize, q: Vec<f64>) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidParameter(format!(
                "GLSFR requires p >= 2, got {p}"
            )));
        }
        if q.len() != p - 2 {
            return Err(Error::InvalidParameter(format!(
                "GLSFR at order {p} takes {} free parameters, got {}",
                p - 2,
                q.len()
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "GLSFR parameters must be finite".into(),
            ));
        }
        Ok(Self { p, q })
    }
}

/// Construct a GLSFR pair from its free parameters.
///
/// The first `p - 2` Legendre coefficients of `h_L` are the free parameters;
/// indices `p - 2` and `p - 1` close the two parity sums
/// `sum of h-tilde[i] over even i <= p - 1 = 0` and the same over odd `i`,
/// and the top two coefficients `(-1)^p / 2`, `(-1)^{p+1} / 2` enforce the
/// boundary conditions.
pub fn glsfr_from_params(gp: &GlsfrParams) -> Result<CorrectionPair> {
    let p = gp.p;
    let mut hl = vec![0.0; p + 2];
    for (i, &qi) in gp.q.iter().enumerate() {
        hl[i] = qi;
    }
    // Close each parity chain: the entry at index p-2 (resp. p-1) cancels the
    // free entries sharing its parity.
    let mut close = |idx: usize| {
        hl[idx] = -gp
            .q
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 2 == idx % 2)
            .map(|(_, &qi)| qi)
            .sum::<f64>();
    };
    close(p - 2);
    close(p - 1);
    let sign_p = if p.is_multiple_of(2) { 1.0 } else { -1.0 };
    hl[p] = 0.5 * sign_p;
    hl[p + 1] = -0.5 * sign_p;
    CorrectionPair::from_left(p, Family::Glsfr, hl)
}

/// Central binomial term `a_p = (2p)! / (2^p (p!)^2)`.
pub fn osfr_a(p: usize) -> f64 {
    // Multiplicative binomial evaluation keeps everything integral until the
    // final power-of-two division.
    let mut binom = 1.0_f64;
    for j in 1..=p {
        binom = binom * (p + j) as f64 / j as f64;
    }
    binom / 2f64.powi(p as i32)
}

/// The OSFR family parameter `eta_p = iota (2p+1) (a_p p!)^2 / 2`.
pub fn osfr_eta(p: usize, iota: f64) -> f64 {
    let factorial: f64 = (1..=p).map(|j| j as f64).product();
    iota * (2.0 * p as f64 + 1.0) * (osfr_a(p) * factorial).powi(2) / 2.0
}

/// Construct the one-parameter OSFR pair
/// `h_L = ((-1)^p / 2) [psi_p - (eta_p psi_{p-1} + psi_{p+1}) / (1 + eta_p)]`.
pub fn osfr(p: usize, iota: f64) -> Result<CorrectionPair> {
    if p == 0 {
        return Err(Error::InvalidParameter("OSFR requires p >= 1".into()));
    }
    let eta = osfr_eta(p, iota);
    let denom = 1.0 + eta;
    if denom.abs() < 1e-12 {
        return Err(Error::Singular(format!(
            "OSFR denominator 1 + eta_p = {denom} for iota = {iota}"
        )));
    }
    let sign_p = if p.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut hl = vec![0.0; p + 2];
    hl[p - 1] = -sign_p * eta / (2.0 * denom);
    hl[p] = sign_p / 2.0;
    hl[p + 1] = -sign_p / (2.0 * denom);
    CorrectionPair::from_left(p, Family::Osfr, hl)
}

/// The ESFR filter matrix together with its order.
#[derive(Debug, Clone)]
pub struct EsfrK {
    pub p: usize,
    pub k: DMatrix<f64>,
}

impl EsfrK {
    pub fn new(p: usize, k: DMatrix<f64>) -> Result<Self> {
        if k.nrows() != p + 1 || k.ncols() != p + 1 {
            return Err(Error::InvalidParameter(format!(
                "K must be {n} x {n} for order {p}, got {r} x {c}",
                n = p + 1,
                r = k.nrows(),
                c = k.ncols()
            )));
        }
        Ok(Self { p, k })
    }

    /// Diagonal single-parameter member `K = diag(0, ..., 0, kappa)`; the
    /// value `kappa = 2 eta_p / (2p + 1)` reproduces `osfr(p, iota)`.
    pub fn diagonal(p: usize, kappa: f64) -> Self {
        let mut k = DMatrix::zeros(p + 1, p + 1);
        k[(p, p)] = kappa;
        Self { p, k }
    }
}

/// Antidifferentiate modal Legendre coefficients using
/// `integral of psi_n = (psi_{n+1} - psi_{n-1}) / (2n + 1)`, leaving the
/// constant term unset.
fn antidifferentiate(g: &DVector<f64>) -> Vec<f64> {
    let mut h = vec![0.0; g.len() + 1];
    for n in 0..g.len() {
        if n == 0 {
            h[1] += g[0];
        } else {
            let scale = 2.0 * n as f64 + 1.0;
            h[n + 1] += g[n] / scale;
            h[n - 1] -= g[n] / scale;
        }
    }
    h
}

/// Construct an ESFR pair from a filter matrix.
///
/// Validates the three admissibility conditions (`K` symmetric, `K D-tilde`
/// skew-symmetrizing, `M-tilde + K` positive definite), solves
/// `g-tilde_L = -(M-tilde + K)^{-1} l-tilde` for the modal gradient, and
/// recovers `h_L` by exact modal antidifferentiation with the constant fixed
/// by `h_L(1) = 0`.
pub fn esfr_from_k(ek: &EsfrK, ops: &OperatorSet) -> Result<CorrectionPair> {
    let n = ek.p + 1;
    if ops.m_tilde.len() != n {
        return Err(Error::InvalidParameter(format!(
            "operator set is order {}, filter matrix is order {}",
            ops.m_tilde.len() - 1,
            ek.p
        )));
    }
    let k_scale = ek.k.amax().max(1.0);
    let sym_err = (&ek.k - ek.k.transpose()).amax();
    if sym_err > 1e-12 * k_scale {
        return Err(Error::EsfrCondition(format!(
            "K is not symmetric (max asymmetry {sym_err:.3e})"
        )));
    }
    let d_tilde = ops.modal_diff()?;
    let kd = &ek.k * &d_tilde;
    let kd_scale = (k_scale * d_tilde.amax()).max(1.0);
    let skew_err = (&kd + kd.transpose()).amax();
    if skew_err > 1e-10 * kd_scale {
        return Err(Error::EsfrCondition(format!(
            "K D-tilde + (K D-tilde)^T is not zero (max residual {skew_err:.3e})"
        )));
    }
    let mk = DMatrix::from_diagonal(&ops.m_tilde) + &ek.k;
    let min_eig = mk
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig <= 1e-12 {
        return Err(Error::EsfrCondition(format!(
            "M-tilde + K is not positive definite (min eigenvalue {min_eig:.3e})"
        )));
    }

    let decomposition = mk.lu();
    let l_tilde = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
    let r_tilde = DVector::from_element(n, 1.0);
    let g_left = decomposition
        .solve(&(-&l_tilde))
        .ok_or_else(|| Error::Singular("M-tilde + K".into()))?;
    let g_right = decomposition
        .solve(&r_tilde)
        .ok_or_else(|| Error::Singular("M-tilde + K".into()))?;

    let mut hl = antidifferentiate(&g_left);
    // h_L(1) = sum of coefficients; shift the constant to zero it.
    let at_one: f64 = hl.iter().sum();
    hl[0] -= at_one;
    let at_minus_one = synth(&hl, -1.0);
    if (at_minus_one - 1.0).abs() > 1e-10 {
        return Err(Error::BoundaryClosure(format!(
            "antidifferentiated h_L(-1) = {at_minus_one}, expected 1"
        )));
    }
    // The right correction from g-tilde_R must be the mirror of h_L; a filter
    // matrix mixing Legendre parities would break that and is rejected.
    let mut hr = antidifferentiate(&g_right);
    let at_minus_one_r: f64 = hr
        .iter()
        .enumerate()
        .map(|(i, &c)| if i % 2 == 0 { c } else { -c })
        .sum();
    hr[0] -= at_minus_one_r;
    let mirror_err: f64 = hl
        .iter()
        .zip(&hr)
        .enumerate()
        .map(|(i, (&l, &r))| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            (r - sign * l).abs()
        })
        .fold(0.0, f64::max);
    if mirror_err > 1e-10 {
        return Err(Error::EsfrCondition(format!(
            "filter matrix produces a non-mirror pair (max deviation {mirror_err:.3e})"
        )));
    }
    CorrectionPair::from_left(ek.p, Family::Esfr, hl)
}

/// Evaluate `(h_L, h_R)` at a reference coordinate.
pub fn eval_correction(cp: &CorrectionPair, xi: f64) -> Result<(f64, f64)> {
    if xi.abs() > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("xi = {xi} outside [-1, 1]")));
    }
    Ok((synth(&cp.hl_coeffs, xi), synth(&cp.hr_coeffs, xi)))
}

/// Nodal values of the correction gradients `dh_L/dxi` and `dh_R/dxi`.
pub fn correction_gradients(cp: &CorrectionPair, ns: &NodeSet) -> (DVector<f64>, DVector<f64>) {
    let g_l = DVector::from_fn(ns.len(), |j, _| synth_deriv(&cp.hl_coeffs, ns.nodes[j]));
    let g_r = DVector::from_fn(ns.len(), |j, _| synth_deriv(&cp.hr_coeffs, ns.nodes[j]));
    (g_l, g_r)
}

/// Diagnostic report from [`validate_lebesgue`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LebesgueReport {
    /// Sum of `hl_coeffs[i]` over even `i <= p - 1`.
    pub even_sum: f64,
    /// Sum of `hl_coeffs[i]` over odd `i <= p - 1`.
    pub odd_sum: f64,
    /// Largest `|integral of h_L u'|` over the sampled degree-p polynomials.
    pub max_il: f64,
    /// Largest `|integral of h_R u'|` over the sampled degree-p polynomials.
    pub max_ir: f64,
    /// Residuals of `h_L(-1) = 1`, `h_L(1) = 0`, `h_R(-1) = 0`, `h_R(1) = 1`.
    pub bc_residuals: [f64; 4],
    /// True when every entry above is below `1e-10` in magnitude.
    pub lebesgue_stable: bool,
}

/// Compute the parity sums over coefficient indices `0..=p-1`.
pub fn parity_sums(cp: &CorrectionPair) -> (f64, f64) {
    let mut even = 0.0;
    let mut odd = 0.0;
    for i in 0..cp.p {
        if i % 2 == 0 {
            even += cp.hl_coeffs[i];
        } else {
            odd += cp.hl_coeffs[i];
        }
    }
    (even, odd)
}

/// The correction moments `I_L = integral of h_L u'` and `I_R` likewise, for a
/// polynomial `u` given by monomial coefficients (`u = sum_k coeffs[k] xi^k`),
/// evaluated by Gauss quadrature exact for the integrand degree.
pub fn correction_moments(cp: &CorrectionPair, monomial_coeffs: &[f64]) -> (f64, f64) {
    let degree = monomial_coeffs.len().saturating_sub(1);
    // Integrand degree is (p + 1) + (degree - 1); p + 2 + degree/2 points are
    // comfortably exact.
    let n_quad = (cp.p + 2 + degree.div_ceil(2)).max(2);
    let rule = gauss_legendre_points(n_quad).expect("quadrature rule");
    let mut il = 0.0;
    let mut ir = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let mut du = 0.0;
        for (k, &a) in monomial_coeffs.iter().enumerate().skip(1) {
            du += a * k as f64 * x.powi(k as i32 - 1);
        }
        il += w * synth(&cp.hl_coeffs, x) * du;
        ir += w * synth(&cp.hr_coeffs, x) * du;
    }
    (il, ir)
}

/// Report the parity sums, boundary residuals, and the correction moments
/// against a basis of `p + 1` random degree-`p` polynomials. The pair is
/// declared Lebesgue-stable when everything is below `1e-10`.
pub fn validate_lebesgue(cp: &CorrectionPair) -> LebesgueReport {
    let (even_sum, odd_sum) = parity_sums(cp);
    let bc_residuals = [
        (synth(&cp.hl_coeffs, -1.0) - 1.0).abs(),
        synth(&cp.hl_coeffs, 1.0).abs(),
        synth(&cp.hr_coeffs, -1.0).abs(),
        (synth(&cp.hr_coeffs, 1.0) - 1.0).abs(),
    ];
    // A fixed seed keeps the report deterministic run to run.
    let mut rng = ChaCha8Rng::seed_from_u64(0x1eb5);
    let mut max_il = 0.0_f64;
    let mut max_ir = 0.0_f64;
    for _ in 0..cp.p + 1 {
        let coeffs: Vec<f64> = (0..=cp.p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (il, ir) = correction_moments(cp, &coeffs);
        max_il = max_il.max(il.abs());
        max_ir = max_ir.max(ir.abs());
    }
    let lebesgue_stable = even_sum.abs() < REPORT_TOL
        && odd_sum.abs() < REPORT_TOL
        && max_il < REPORT_TOL
        && max_ir < REPORT_TOL
        && bc_residuals.iter().all(|r| *r < REPORT_TOL);
    LebesgueReport {
        even_sum,
        odd_sum,
        max_il,
        max_ir,
        bc_residuals,
        lebesgue_stable,
    }
}
