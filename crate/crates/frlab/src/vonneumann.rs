//! Von Neumann (Bloch-wave) analysis of the semi- and fully-discrete FR
//! schemes: per-wavenumber symbols for advection and diffusion, physical-mode
//! extraction, dispersion/dissipation curves, and CFL limits.
//!
//! All symbols are assembled on the reference element (`h = 2`, unit
//! Jacobian); physical speed and diffusivity enter only through the
//! combination `Q_ad = 2c Q_a + 4 nu Q_d` and the CFL normalization
//! `tau-hat = (2c/h + 4 nu/h^2) tau`, which is what makes the returned
//! `tau-hat` values mesh-independent.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::corrections::{correction_gradients, CorrectionPair, GlsfrParams};
use crate::eig::{eigen_complex, eigenvalues_complex};
use crate::error::{Error, Result};
use crate::polybasis::{build_operators, gauss_legendre_points, NodeSet};

/// Reference element width used for every symbol.
const H_REF: f64 = 2.0;

/// Margin admitted on the spectral-radius stability test.
const RHO_TOL: f64 = 1e-10;

/// Overlap gap below which physical-mode selection is declared ambiguous.
const MODE_GAP_TOL: f64 = 1e-9;

/// Scheme parameters shared by the symbol analysis and the 1D solver.
#[derive(Debug, Clone)]
pub struct SchemeConfig {
    /// Solution polynomial order.
    pub p: usize,
    /// Gauss-Legendre solution points with quadrature weights.
    pub ns: NodeSet,
    /// Advection upwinding ratio in `[0.5, 1]` (1 = full upwind, 0.5 = central).
    pub alpha_a: f64,
    /// Diffusion interface ratio; BR1 fixes this to the arithmetic average.
    pub alpha_d: f64,
    /// Advection speed.
    pub c: f64,
    /// Diffusion constant, non-negative.
    pub nu: f64,
    /// Element width of the uniform physical grid (Jacobian `h / 2`).
    pub h: f64,
}

impl SchemeConfig {
    pub fn new(p: usize, alpha_a: f64, c: f64, nu: f64, h: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&alpha_a) {
            return Err(Error::InvalidParameter(format!(
                "upwinding ratio must lie in [0.5, 1], got {alpha_a}"
            )));
        }
        if !(nu >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "diffusion constant must be >= 0, got {nu}"
            )));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "element width must be positive, got {h}"
            )));
        }
        if !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "advection speed must be finite, got {c}"
            )));
        }
        Ok(Self {
            p,
            ns: gauss_legendre_points(p + 1)?,
            alpha_a,
            alpha_d: 0.5,
            c,
            nu,
            h,
        })
    }

    /// Config on the reference element (`h = 2`), the natural choice for
    /// pure symbol work.
    pub fn reference(p: usize, alpha_a: f64, c: f64, nu: f64) -> Result<Self> {
        Self::new(p, alpha_a, c, nu, H_REF)
    }

    /// Element Jacobian `h / 2`.
    pub fn jacobian(&self) -> f64 {
        self.h / 2.0
    }

    /// Normalized wavenumber `k h_ref / (p + 1)` of a reference wavenumber.
    pub fn k_hat(&self, k: f64) -> f64 {
        k * H_REF / (self.p as f64 + 1.0)
    }

    /// Reference wavenumber whose normalized value is `k_hat`.
    pub fn k_from_hat(&self, k_hat: f64) -> f64 {
        k_hat * (self.p as f64 + 1.0) / H_REF
    }

    /// The CFL normalization factor `2|c| + 4 nu` relating a reference time
    /// step to `tau-hat`.
    pub fn tau_hat_scale(&self) -> f64 {
        2.0 * self.c.abs() + 4.0 * self.nu
    }
}

/// The three neighbor-coupling matrices of the first-derivative FR operator.
#[derive(Debug, Clone)]
pub struct AdvectionOps {
    /// Interface ratio the matrices were assembled with.
    pub alpha: f64,
    /// Coupling to the right neighbor, `(1 - alpha) g_r l_l^T`.
    pub c_plus: DMatrix<f64>,
    /// In-element part, `D - alpha g_l l_l^T - (1 - alpha) g_r l_r^T`.
    pub c_zero: DMatrix<f64>,
    /// Coupling to the left neighbor, `alpha g_l l_r^T`.
    pub c_minus: DMatrix<f64>,
}

/// Assemble the C matrices for a given interface ratio.
pub fn assemble_with_ratio(
    cfg: &SchemeConfig,
    cp: &CorrectionPair,
    alpha: f64,
) -> Result<AdvectionOps> {
    if cp.p != cfg.p {
        return Err(Error::InvalidParameter(format!(
            "correction pair order {} does not match scheme order {}",
            cp.p, cfg.p
        )));
    }
    let ops = build_operators(&cfg.ns)?;
    let (g_l, g_r) = correction_gradients(cp, &cfg.ns);
    let c_plus = (1.0 - alpha) * &g_r * ops.l_l.transpose();
    let c_zero =
        &ops.d - alpha * &g_l * ops.l_l.transpose() - (1.0 - alpha) * &g_r * ops.l_r.transpose();
    let c_minus = alpha * &g_l * ops.l_r.transpose();
    Ok(AdvectionOps {
        alpha,
        c_plus,
        c_zero,
        c_minus,
    })
}

/// C matrices for the advective operator at the config's upwinding ratio.
pub fn assemble_advection(cfg: &SchemeConfig, cp: &CorrectionPair) -> Result<AdvectionOps> {
    assemble_with_ratio(cfg, cp, cfg.alpha_a)
}

/// C matrices for the diffusive first-derivative passes (BR1 averages).
pub fn assemble_diffusion(cfg: &SchemeConfig, cp: &CorrectionPair) -> Result<AdvectionOps> {
    assemble_with_ratio(cfg, cp, cfg.alpha_d)
}

fn check_wavenumber(cfg: &SchemeConfig, k: f64) -> Result<()> {
    let k_hat = cfg.k_hat(k);
    if !(k_hat > 0.0 && k_hat <= std::f64::consts::PI + 1e-12) {
        return Err(Error::Domain(format!(
            "wavenumber k = {k} has normalized value {k_hat} outside (0, pi]"
        )));
    }
    Ok(())
}

/// First-derivative Bloch symbol `-J^{-1}(C_+ e^{+ikh} + C_0 + C_- e^{-ikh})`
/// on the reference element; neighbor data is `u_{j +/- 1} = u_j e^{+/- ikh}`.
fn first_derivative_symbol(ops: &AdvectionOps, k: f64) -> DMatrix<Complex64> {
    let n = ops.c_zero.nrows();
    let plus = Complex64::from_polar(1.0, k * H_REF);
    let minus = Complex64::from_polar(1.0, -k * H_REF);
    let j_inv = 2.0 / H_REF;
    DMatrix::from_fn(n, n, |i, j| {
        -j_inv
            * (ops.c_plus[(i, j)] * plus
                + Complex64::new(ops.c_zero[(i, j)], 0.0)
                + ops.c_minus[(i, j)] * minus)
    })
}

/// Advection symbol `Q_a(k)` for unit speed on the reference element.
pub fn advection_symbol(
    ops: &AdvectionOps,
    cfg: &SchemeConfig,
    k: f64,
) -> Result<DMatrix<Complex64>> {
    check_wavenumber(cfg, k)?;
    Ok(first_derivative_symbol(ops, k))
}

/// The five-band coupling matrices of the second-derivative (BR1) operator:
/// `B_{-2} = J^{-2} C_- C_-`, `B_{-1} = J^{-2}(C_0 C_- + C_- C_0)`,
/// `B_0 = J^{-2}(C_+ C_- + C_0 C_0 + C_- C_+)`, and mirrored `B_{+1}`, `B_{+2}`.
pub fn diffusion_b_matrices(ops: &AdvectionOps) -> [DMatrix<f64>; 5] {
    let j_inv2 = (2.0 / H_REF) * (2.0 / H_REF);
    [
        j_inv2 * (&ops.c_minus * &ops.c_minus),
        j_inv2 * (&ops.c_zero * &ops.c_minus + &ops.c_minus * &ops.c_zero),
        j_inv2
            * (&ops.c_plus * &ops.c_minus + &ops.c_zero * &ops.c_zero + &ops.c_minus * &ops.c_plus),
        j_inv2 * (&ops.c_zero * &ops.c_plus + &ops.c_plus * &ops.c_zero),
        j_inv2 * (&ops.c_plus * &ops.c_plus),
    ]
}

/// Diffusion symbol `Q_d(k)` for unit diffusivity on the reference element,
/// assembled from the five B matrices with phases `e^{-2ikh} .. e^{+2ikh}`.
/// `ops` must be built with the BR1 ratio (see [`assemble_diffusion`]).
pub fn diffusion_symbol(
    ops: &AdvectionOps,
    cfg: &SchemeConfig,
    k: f64,
) -> Result<DMatrix<Complex64>> {
    check_wavenumber(cfg, k)?;
    let b = diffusion_b_matrices(ops);
    let n = ops.c_zero.nrows();
    let mut q = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for (m, band) in b.iter().enumerate() {
        let shift = m as f64 - 2.0;
        let phase = Complex64::from_polar(1.0, shift * k * H_REF);
        for i in 0..n {
            for j in 0..n {
                q[(i, j)] += phase * band[(i, j)];
            }
        }
    }
    Ok(q)
}

/// Combined symbol `Q_ad = 2c Q_a + 4 nu Q_d`.
pub fn advdiff_symbol(
    cfg: &SchemeConfig,
    q_a: &DMatrix<Complex64>,
    q_d: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    if q_a.shape() != q_d.shape() {
        return Err(Error::InvalidParameter(format!(
            "symbol shapes differ: {:?} vs {:?}",
            q_a.shape(),
            q_d.shape()
        )));
    }
    let two_c = Complex64::new(2.0 * cfg.c, 0.0);
    let four_nu = Complex64::new(4.0 * cfg.nu, 0.0);
    Ok(q_a * two_c + q_d * four_nu)
}

/// Truncated-exponential stability polynomial `sum_{m=0}^{order} z^m / m!`.
pub fn stability_poly(z: Complex64, order: usize) -> Complex64 {
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for m in 1..=order {
        term *= z / m as f64;
        sum += term;
    }
    sum
}

/// A fully discrete one-step update operator.
#[derive(Debug, Clone)]
pub struct UpdateMatrix {
    /// `R = sum_{m=0}^{order} (tau Q)^m / m!`.
    pub r: DMatrix<Complex64>,
    pub tau: f64,
    pub poly_order: usize,
}

fn check_poly_order(poly_order: usize) -> Result<()> {
    if poly_order != 3 && poly_order != 4 {
        return Err(Error::InvalidParameter(format!(
            "stability polynomial order must be 3 or 4, got {poly_order}"
        )));
    }
    Ok(())
}

/// Truncated-exponential update matrix of the given order.
pub fn update_matrix(q: &DMatrix<Complex64>, tau: f64, poly_order: usize) -> Result<UpdateMatrix> {
    check_poly_order(poly_order)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time step must be positive, got {tau}"
        )));
    }
    let n = q.nrows();
    let tq = q * Complex64::new(tau, 0.0);
    let mut term = DMatrix::identity(n, n);
    let mut r = term.clone();
    for m in 1..=poly_order {
        term = (&term * &tq) / Complex64::new(m as f64, 0.0);
        r += &term;
    }
    Ok(UpdateMatrix { r, tau, poly_order })
}

/// Select the physical mode: the column of `vectors` with the largest
/// normalized Gauss-weighted overlap against the nodal samples of `e^{ik xi}`.
pub fn physical_mode(vectors: &DMatrix<Complex64>, ns: &NodeSet, k: f64) -> Result<usize> {
    let n = vectors.ncols();
    if n == 1 {
        return Ok(0);
    }
    let target = DVector::from_fn(ns.len(), |j, _| Complex64::from_polar(1.0, k * ns.nodes[j]));
    let mut scores = Vec::with_capacity(n);
    for m in 0..n {
        scores.push((
            weighted_overlap(&vectors.column(m).clone_owned(), &target, ns),
            m,
        ));
    }
    scores.sort_by(|a, b| b.0.total_cmp(&a.0));
    let gap = scores[0].0 - scores[1].0;
    if gap < MODE_GAP_TOL {
        return Err(Error::AmbiguousMode {
            first: scores[0].1,
            second: scores[1].1,
            gap,
        });
    }
    Ok(scores[0].1)
}

/// `|<v, f>_w| / (||v||_w ||f||_w)` with Gauss weights.
fn weighted_overlap(v: &DVector<Complex64>, f: &DVector<Complex64>, ns: &NodeSet) -> f64 {
    let mut inner = Complex64::new(0.0, 0.0);
    let mut norm_v = 0.0;
    let mut norm_f = 0.0;
    for j in 0..ns.len() {
        let w = ns.weights[j];
        inner += w * v[j].conj() * f[j];
        norm_v += w * v[j].norm_sqr();
        norm_f += w * f[j].norm_sqr();
    }
    inner.norm() / (norm_v.sqrt() * norm_f.sqrt())
}

/// One point of a dispersion/dissipation curve.
#[derive(Debug, Clone)]
pub struct SpectralSample {
    /// Reference wavenumber.
    pub k: f64,
    /// Normalized wavenumber `k h / (p + 1)` in `(0, pi]`.
    pub k_hat: f64,
    /// Full spectrum of the analyzed operator at this `k`.
    pub eigenvalues: Vec<Complex64>,
    /// Index of the physical mode within `eigenvalues`.
    pub physical_index: usize,
    /// `-c Im(lambda)` for advection (equals `c k` for the exact scheme);
    /// `Im(k_hat^2 c_d)` for diffusion; `k Re(c(k; tau))` fully discrete.
    pub dispersion: f64,
    /// `c Re(lambda)` for advection (non-positive for stable schemes);
    /// `Re(k_hat^2 c_d)` for diffusion; `k Im(c(k; tau))` fully discrete.
    pub dissipation: f64,
}

/// Semi-discrete advection analysis at a single wavenumber.
pub fn semi_discrete_dispersion(
    cfg: &SchemeConfig,
    cp: &CorrectionPair,
    k: f64,
) -> Result<SpectralSample> {
    let ops = assemble_advection(cfg, cp)?;
    let q_a = advection_symbol(&ops, cfg, k)?;
    let (values, vectors) = eigen_complex(&q_a)?;
    let idx = physical_mode(&vectors, &cfg.ns, k)?;
    let lambda = values[idx];
    Ok(SpectralSample {
        k,
        k_hat: cfg.k_hat(k),
        eigenvalues: values,
        physical_index: idx,
        dispersion: -cfg.c * lambda.im,
        dissipation: cfg.c * lambda.re,
    })
}

/// Semi-discrete diffusion analysis at a single wavenumber: eigenvalues are
/// those of `c_d = -Q_d / k^2`, which tend to 1 for the physical mode as
/// `k_hat` tends to 0.
pub fn diffusion_dispersion(
    cfg: &SchemeConfig,
    cp: &CorrectionPair,
    k: f64,
) -> Result<SpectralSample> {
    let ops = assemble_diffusion(cfg, cp)?;
    let q_d = diffusion_symbol(&ops, cfg, k)?;
    let scale = Complex64::new(-1.0 / (k * k), 0.0);
    let c_d = q_d * scale;
    let (values, vectors) = eigen_complex(&c_d)?;
    let idx = physical_mode(&vectors, &cfg.ns, k)?;
    let k_hat = cfg.k_hat(k);
    let kh2 = k_hat * k_hat;
    let c_d_phys = values[idx];
    Ok(SpectralSample {
        k,
        k_hat,
        eigenvalues: values,
        physical_index: idx,
        dispersion: kh2 * c_d_phys.im,
        dissipation: kh2 * c_d_phys.re,
    })
}

/// Assemble `Q_ad` at a wavenumber, skipping the diffusion pass when `nu = 0`.
pub fn combined_symbol(
    cfg: &SchemeConfig,
    cp: &CorrectionPair,
    k: f64,
) -> Result<DMatrix<Complex64>> {
    let adv = assemble_advection(cfg, cp)?;
    let q_a = advection_symbol(&adv, cfg, k)?;
    if cfg.nu == 0.0 {
        return Ok(q_a * Complex64::new(2.0 * cfg.c, 0.0));
    }
    let dif = assemble_diffusion(cfg, cp)?;
    let q_d = diffusion_symbol(&dif, cfg, k)?;
    advdiff_symbol(cfg, &q_a, &q_d)
}

/// Fully discrete analysis at a single wavenumber: eigenvalues are those of
/// the update matrix `R(tau Q_ad)`. `Q_ad` is the unit-element-width operator
/// whose Bloch phase at reference wavenumber `k` is `2k`, so the modified
/// phase speed on the principal branch is `c(k; tau) = i Log(mu) / (2 k tau)`,
/// giving dispersion `-arg(mu) / (2 tau)` and dissipation
/// `ln|mu| / (2 tau)`; both converge to the semi-discrete advection values as
/// `tau` tends to 0 when `nu = 0`.
pub fn fully_discrete_dispersion(
    cfg: &SchemeConfig,
    cp: &CorrectionPair,
    tau: f64,
    k: f64,
    poly_order: usize,
) -> Result<SpectralSample> {
    let q = combined_symbol(cfg, cp, k)?;
    let update = update_matrix(&q, tau, poly_order)?;
    let (values, vectors) = eigen_complex(&update.r)?;
    let idx = physical_mode(&vectors, &cfg.ns, k)?;
    let mu = values[idx];
    if mu.norm() == 0.0 {
        return Err(Error::DegenerateMode { k });
    }
    let log_mu = Complex64::new(mu.norm().ln(), mu.arg());
    Ok(SpectralSample {
        k,
        k_hat: cfg.k_hat(k),
        eigenvalues: values,
        physical_index: idx,
        dispersion: -log_mu.im / (2.0 * tau),
        dissipation: log_mu.re / (2.0 * tau),
    })
}

/// Uniform `k_hat` grid over `(0, pi]`.
fn k_hat_grid(n_k: usize) -> Vec<f64> {
    (1..=n_k)
        .map(|m| std::f64::consts::PI * m as f64 / n_k as f64)
        .collect()
}

/// Track the previously selected eigenvector through the next spectrum by
/// maximal modulus of the plain inner product.
fn continue_mode(prev: &DVector<Complex64>, vectors: &DMatrix<Complex64>) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for m in 0..vectors.ncols() {
        let overlap = prev.dotc(&vectors.column(m).clone_owned()).norm();
        if overlap > best.0 {
            best = (overlap, m);
        }
    }
    best.1
}

/// Semi-discrete advection sweep over `n_k` normalized wavenumbers in
/// `(0, pi]`, with the physical mode selected by projection at the first
/// point and tracked by eigenvector overlap afterwards.
pub fn semi_discrete_sweep(
    cfg: &SchemeConfig,
    cp: &CorrectionPair,
    n_k: usize,
) -> Result<Vec<SpectralSample>> {
    let ops = assemble_advection(cfg, cp)?;
    let mut samples = Vec::with_capacity(n_k);
    let mut prev_vec: Option<DVector<Complex64>> = None;
    for k_hat in k_hat_grid(n_k) {
        let k = cfg.k_from_hat(k_hat);
        let q_a = advection_symbol(&ops, cfg, k)?;
        let (values, vectors) = eigen_complex(&q_a)?;
        let idx = match &prev_vec {
            None => physical_mode(&vectors, &cfg.ns, k)?,
            Some(prev) => continue_mode(prev, &vectors),
        };
        prev_vec = Some(vectors.column(idx).clone_owned());
        let lambda = values[idx];
        samples.push(SpectralSample {
            k,
            k_hat,
            eigenvalues: values,
            physical_index: idx,
            dispersion: -cfg.c * lambda.im,
            dissipation: cfg.c * lambda.re,
        });
    }
    Ok(samples)
}

/// Fully discrete sweep with mode tracking and cumulative phase unwrapping of
/// the logarithm branch, so dispersion curves stay continuous past the
/// principal-branch cut.
pub fn fully_discrete_sweep(
    cfg: &SchemeConfig,
    cp: &CorrectionPair,
    tau: f64,
    n_k: usize,
    poly_order: usize,
) -> Result<Vec<SpectralSample>> {
    check_poly_order(poly_order)?;
    let mut samples = Vec::with_capacity(n_k);
    let mut prev_vec: Option<DVector<Complex64>> = None;
    let mut prev_arg = 0.0_f64;
    for k_hat in k_hat_grid(n_k) {
        let k = cfg.k_from_hat(k_hat);
        let q = combined_symbol(cfg, cp, k)?;
        let update = update_matrix(&q, tau, poly_order)?;
        let (values, vectors) = eigen_complex(&update.r)?;
        let idx = match &prev_vec {
            None => physical_mode(&vectors, &cfg.ns, k)?,
            Some(prev) => continue_mode(prev, &vectors),
        };
        prev_vec = Some(vectors.column(idx).clone_owned());
        let mu = values[idx];
        if mu.norm() == 0.0 {
            return Err(Error::DegenerateMode { k });
        }
        // Unwrap the argument towards the previous sample's branch.
        let mut arg = mu.arg();
        while arg - prev_arg > std::f64::consts::PI {
            arg -= 2.0 * std::f64::consts::PI;
        }
        while prev_arg - arg > std::f64::consts::PI {
            arg += 2.0 * std::f64::consts::PI;
        }
        prev_arg = arg;
        samples.push(SpectralSample {
            k,
            k_hat,
            eigenvalues: values,
            physical_index: idx,
            dispersion: -arg / (2.0 * tau),
            dissipation: mu.norm().ln() / (2.0 * tau),
        });
    }
    Ok(samples)
}

/// Spectrum of `Q_ad` gathered over a `k_hat` grid, flattened.
fn gather_spectrum(
    cfg: &SchemeConfig,
    cp: &CorrectionPair,
    k_samples: usize,
) -> Result<Vec<Complex64>> {
    let adv = assemble_advection(cfg, cp)?;
    let dif = if cfg.nu > 0.0 {
        Some(assemble_diffusion(cfg, cp)?)
    } else {
        None
    };
    let mut all = Vec::with_capacity(k_samples * (cfg.p + 1));
    for k_hat in k_hat_grid(k_samples) {
        let k = cfg.k_from_hat(k_hat);
        let q_a = advection_symbol(&adv, cfg, k)?;
        let q = match &dif {
            None => q_a * Complex64::new(2.0 * cfg.c, 0.0),
            Some(ops) => {
                let q_d = diffusion_symbol(ops, cfg, k)?;
                advdiff_symbol(cfg, &q_a, &q_d)?
            }
        };
        all.extend(eigenvalues_complex(&q)?);
    }
    Ok(all)
}

/// Largest Re(eigenvalue) of the unit-speed advection symbol over a `k_hat`
/// grid — the semi-discrete stability indicator.
pub fn max_re_advection(cfg: &SchemeConfig, cp: &CorrectionPair, k_samples: usize) -> Result<f64> {
    let adv = assemble_advection(cfg, cp)?;
    let mut max_re = f64::NEG_INFINITY;
    for k_hat in k_hat_grid(k_samples) {
        let k = cfg.k_from_hat(k_hat);
        let q_a = advection_symbol(&adv, cfg, k)?;
        for lambda in eigenvalues_complex(&q_a)? {
            max_re = max_re.max(lambda.re);
        }
    }
    Ok(max_re)
}

/// Largest stable normalized time step `tau-hat`.
///
/// A `tau-hat` is stable when `max_k rho(R(tau Q_ad(k))) <= 1 + 1e-10` with
/// `tau = tau-hat / (2|c| + 4 nu)`. The spectrum is gathered once per `k`;
/// the search then scans a grid over `(0, cap]` (doubling `cap` while its top
/// remains stable) for the largest stable point — some schemes have stable
/// intervals detached from the origin — and resolves the upper boundary of
/// the stable set by bisection to `1e-4`. Returns 0 when no stable `tau-hat`
/// exists down to `1e-8`.
pub fn cfl_limit(
    cfg: &SchemeConfig,
    cp: &CorrectionPair,
    poly_order: usize,
    k_samples: usize,
) -> Result<f64> {
    check_poly_order(poly_order)?;
    if k_samples < 64 {
        return Err(Error::InvalidParameter(format!(
            "need at least 64 wavenumber samples, got {k_samples}"
        )));
    }
    let scale = cfg.tau_hat_scale();
    if scale <= 0.0 {
        return Err(Error::InvalidParameter(
            "CFL normalization requires |c| + nu > 0".into(),
        ));
    }
    let spectrum = gather_spectrum(cfg, cp, k_samples)?;
    let stable = |tau_hat: f64| -> bool {
        let tau = tau_hat / scale;
        spectrum
            .iter()
            .all(|&lambda| stability_poly(lambda * tau, poly_order).norm() <= 1.0 + RHO_TOL)
    };

    // Expand the search cap while its top stays stable (bounded: RK stability
    // regions are compact, so expansion terminates for any consistent scheme).
    let mut cap = 4.0;
    while stable(cap) && cap < 1024.0 {
        cap *= 2.0;
    }

    const GRID: usize = 512;
    let mut best = if stable(1e-8) { 1e-8 } else { 0.0 };
    for j in 1..=GRID {
        let t = cap * j as f64 / GRID as f64;
        if stable(t) && t > best {
            best = t;
        }
    }
    if best == 0.0 {
        return Ok(0.0);
    }
    let mut lo = best;
    let mut hi = (best + cap / GRID as f64).min(cap);
    if hi <= lo {
        return Ok(lo);
    }
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if stable(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Whether one concrete normalized time step is stable, under the same
/// spectral-radius test as [`cfl_limit`].
///
/// The CFL limit is the supremum of the stable set, and for some schemes
/// that set is an interval detached from the origin — a fraction of the
/// limit is then *not* automatically stable. Time-step heuristics should
/// check their candidate with this predicate instead of assuming
/// monotonicity.
pub fn tau_hat_is_stable(
    cfg: &SchemeConfig,
    cp: &CorrectionPair,
    tau_hat: f64,
    poly_order: usize,
    k_samples: usize,
) -> Result<bool> {
    check_poly_order(poly_order)?;
    if k_samples < 64 {
        return Err(Error::InvalidParameter(format!(
            "need at least 64 wavenumber samples, got {k_samples}"
        )));
    }
    let scale = cfg.tau_hat_scale();
    if scale <= 0.0 {
        return Err(Error::InvalidParameter(
            "CFL normalization requires |c| + nu > 0".into(),
        ));
    }
    if !(tau_hat > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau-hat must be positive, got {tau_hat}"
        )));
    }
    let tau = tau_hat / scale;
    let spectrum = gather_spectrum(cfg, cp, k_samples)?;
    Ok(spectrum
        .iter()
        .all(|&lambda| stability_poly(lambda * tau, poly_order).norm() <= 1.0 + RHO_TOL))
}

/// A verified-stable normalized time step for marching, or `None` when no
/// candidate passes.
///
/// Prefers `prefer * cfl_limit` and walks toward the limit in increments of
/// a tenth: for schemes whose stable set is a window detached from the
/// origin, small fractions of the limit lie outside the window and must be
/// rejected rather than assumed safe.
pub fn safe_tau_hat(
    cfg: &SchemeConfig,
    cp: &CorrectionPair,
    prefer: f64,
    poly_order: usize,
    k_samples: usize,
) -> Result<Option<f64>> {
    if !(prefer > 0.0 && prefer < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "preferred fraction must lie in (0, 1), got {prefer}"
        )));
    }
    let tau_hat_max = cfl_limit(cfg, cp, poly_order, k_samples)?;
    if tau_hat_max <= 0.0 {
        return Ok(None);
    }
    let mut frac = prefer;
    loop {
        let cand = frac * tau_hat_max;
        if tau_hat_is_stable(cfg, cp, cand, poly_order, k_samples)? {
            return Ok(Some(cand));
        }
        if frac >= 0.95 {
            return Ok(None);
        }
        frac = (frac + 0.1).min(0.95);
    }
}

/// A CFL map over the free GLSFR parameters.
#[derive(Debug, Clone)]
pub struct CflMap {
    /// First-axis parameter values, ascending.
    pub q0: Vec<f64>,
    /// Second-axis parameter values, ascending; a single zero for `p = 3`.
    pub q1: Vec<f64>,
    /// `tau_hat_max[i][j]` for the pair `(q0[i], q1[j])`; 0 marks unstable.
    pub tau_hat_max: Vec<Vec<f64>>,
    /// Matching semi-discrete indicator `max_k Re(eig Q_a)` per cell.
    pub max_re_eig: Vec<Vec<f64>>,
}

fn linspace(range: (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (range.0 + range.1)];
    }
    (0..n)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Dense map of `cfl_limit` (and the semi-discrete stability indicator) over
/// the free GLSFR parameters: two axes at `p = 4`, one at `p = 3`. Cells are
/// evaluated in parallel; the output layout is independent of the thread
/// count.
pub fn cfl_map(
    cfg: &SchemeConfig,
    q0_range: (f64, f64),
    q1_range: Option<(f64, f64)>,
    resolution: usize,
    poly_order: usize,
    k_samples: usize,
) -> Result<CflMap> {
    check_poly_order(poly_order)?;
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!(
            "map resolution must be at least 2, got {resolution}"
        )));
    }
    if !(q0_range.0 < q0_range.1) {
        return Err(Error::InvalidParameter(format!(
            "empty parameter range {q0_range:?}"
        )));
    }
    let q0 = linspace(q0_range, resolution);
    let q1 = match (cfg.p, q1_range) {
        (3, None) => vec![0.0],
        (3, Some(_)) => {
            return Err(Error::InvalidParameter(
                "p = 3 has a single free parameter; second range must be omitted".into(),
            ))
        }
        (4, Some(r)) => {
            if !(r.0 < r.1) {
                return Err(Error::InvalidParameter(format!(
                    "empty parameter range {r:?}"
                )));
            }
            linspace(r, resolution)
        }
        (4, None) => {
            return Err(Error::InvalidParameter(
                "p = 4 has two free parameters; second range required".into(),
            ))
        }
        (p, _) => {
            return Err(Error::InvalidParameter(format!(
                "CFL maps cover p = 3 or p = 4, got p = {p}"
            )))
        }
    };

    let cells: Vec<(usize, usize)> = (0..q0.len())
        .flat_map(|i| (0..q1.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<(f64, f64)>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let q = if cfg.p == 3 {
                vec![q0[i]]
            } else {
                vec![q0[i], q1[j]]
            };
            let cp = crate::corrections::glsfr_from_params(&GlsfrParams::new(cfg.p, q)?)?;
            let tau_hat = cfl_limit(cfg, &cp, poly_order, k_samples)?;
            let max_re = max_re_advection(cfg, &cp, k_samples)?;
            Ok((tau_hat, max_re))
        })
        .collect();

    let mut tau_hat_max = vec![vec![0.0; q1.len()]; q0.len()];
    let mut max_re_eig = vec![vec![0.0; q1.len()]; q0.len()];
    for (&(i, j), r) in cells.iter().zip(results) {
        let (tau_hat, max_re) = r?;
        tau_hat_max[i][j] = tau_hat;
        max_re_eig[i][j] = max_re;
    }
    Ok(CflMap {
        q0,
        q1,
        tau_hat_max,
        max_re_eig,
    })
}
