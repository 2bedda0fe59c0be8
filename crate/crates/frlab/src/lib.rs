//! Flux-reconstruction laboratory: correction-function families, von Neumann
//! analysis of the semi- and fully-discrete schemes, and a 1D reference
//! solver for linear advection and advection-diffusion.
//!
//! The crate is organized bottom-up:
//!
//! * [`polybasis`] — Legendre/Lagrange machinery and per-element operators;
//! * [`corrections`] — OSFR, ESFR, and GLSFR correction-function pairs;
//! * [`eig`] — dense complex eigensolver used by the symbol analysis;
//! * [`vonneumann`] — Bloch symbols, dispersion/dissipation curves, CFL limits;
//! * [`solver1d`] — periodic 1D solver with energy and conservation probes.

// Validation guards are written as `!(x > 0.0)` on purpose: unlike
// `x <= 0.0`, the negated form also rejects NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corrections;
pub mod eig;
pub mod error;
pub mod polybasis;
pub mod solver1d;
pub mod vonneumann;

pub use corrections::{
    correction_gradients, correction_moments, esfr_from_k, eval_correction, glsfr_from_params,
    osfr, osfr_eta, parity_sums, validate_lebesgue, CorrectionPair, EsfrK, Family, GlsfrParams,
    LebesgueReport,
};
pub use eig::{eigen_complex, eigenvalues_complex};
pub use error::{Error, Result};
pub use polybasis::{
    build_operators, gauss_legendre_points, lagrange_all, lagrange_eval, legendre_deriv,
    legendre_eval, legendre_udu, NodeSet, OperatorSet,
};
pub use solver1d::{
    convergence_study, energy, energy_rate, energy_rate_discrepancy, l2_error, project_initial,
    rhs, rhs_advdiff, rhs_advection, rk44_step, run, total_mass, ConvergenceReport, Discretization,
    EnergyRate, Mesh1D, SolverState, StepRecord,
};
pub use vonneumann::{
    advdiff_symbol, advection_symbol, assemble_advection, assemble_diffusion, cfl_limit, cfl_map,
    combined_symbol, diffusion_dispersion, diffusion_symbol, fully_discrete_dispersion,
    fully_discrete_sweep, max_re_advection, physical_mode, safe_tau_hat, semi_discrete_dispersion,
    semi_discrete_sweep, stability_poly, tau_hat_is_stable, update_matrix, AdvectionOps, CflMap,
    SchemeConfig, SpectralSample, UpdateMatrix,
};
