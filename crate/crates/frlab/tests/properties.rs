//! Property-based invariants of the correction families, the Bloch symbols,
//! and the CFL search: structural facts that must hold for *every* input in
//! the sampled domain, not just hand-picked examples.

use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;

use frlab::{
    advection_symbol, assemble_advection, assemble_diffusion, build_operators, cfl_limit,
    diffusion_symbol, eigenvalues_complex, gauss_legendre_points, glsfr_from_params, osfr,
    parity_sums, stability_poly, CorrectionPair, GlsfrParams, SchemeConfig,
};

/// Free GLSFR parameters for a given order.
fn q_strategy(p: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, p - 2)
}

/// A correction pair from either family, exercised with the same machinery.
fn pair_strategy(p: usize) -> BoxedStrategy<CorrectionPair> {
    let glsfr = q_strategy(p).prop_map(move |q| {
        glsfr_from_params(&GlsfrParams::new(p, q).expect("params")).expect("glsfr")
    });
    let osfr_pairs = (0.0..4.0f64).prop_map(move |iota| osfr(p, iota).expect("osfr"));
    prop_oneof![glsfr, osfr_pairs].boxed()
}

/// Pairs with a guaranteed modified-Sobolev energy norm (the OSFR family,
/// nodal DG at `iota = 0`).
fn sobolev_pair_strategy(p: usize) -> BoxedStrategy<CorrectionPair> {
    (0.0..4.0f64)
        .prop_map(move |iota| osfr(p, iota).expect("osfr"))
        .boxed()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Every GLSFR member satisfies the closure conditions and the boundary
    /// values, and its JSON form round-trips coefficient-exactly.
    #[test]
    fn glsfr_closure_boundaries_roundtrip(
        (p, q) in (2usize..=7).prop_flat_map(|p| (Just(p), q_strategy(p)))
    ) {
        let cp = glsfr_from_params(&GlsfrParams::new(p, q).unwrap()).unwrap();
        let (even, odd) = parity_sums(&cp);
        prop_assert!(even.abs() < 1e-13 && odd.abs() < 1e-13);
        let (hl_m, hr_m) = frlab::eval_correction(&cp, -1.0).unwrap();
        let (hl_p, hr_p) = frlab::eval_correction(&cp, 1.0).unwrap();
        prop_assert!((hl_m - 1.0).abs() < 1e-12 && hl_p.abs() < 1e-12);
        prop_assert!(hr_m.abs() < 1e-12 && (hr_p - 1.0).abs() < 1e-12);
        // Right coefficients mirror the left ones with alternating signs.
        for i in 0..p + 2 {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            prop_assert_eq!(cp.hr_coeffs[i], sign * cp.hl_coeffs[i]);
        }
        let back = CorrectionPair::from_json(&cp.to_json()).unwrap();
        prop_assert_eq!(back.hl_coeffs, cp.hl_coeffs);
        prop_assert_eq!(back.hr_coeffs, cp.hr_coeffs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The assembled FR derivative annihilates constants: with equal traces
    /// everywhere, `(C_- + C_0 + C_+) 1 = 0` for any pair and ratio.
    #[test]
    fn fr_derivative_annihilates_constants(
        (p, cp) in (2usize..=6).prop_flat_map(|p| (Just(p), pair_strategy(p))),
        alpha in 0.5..=1.0f64,
    ) {
        let cfg = SchemeConfig::reference(p, alpha, 1.0, 0.0).unwrap();
        let ops = assemble_advection(&cfg, &cp).unwrap();
        let ones = DVector::from_element(p + 1, 1.0);
        let sum = (&ops.c_minus + &ops.c_zero + &ops.c_plus) * ones;
        let scale = 1.0 + ops.c_zero.amax();
        prop_assert!(sum.amax() < 1e-12 * scale, "residual {:.3e}", sum.amax());
    }

    /// The advection-diffusion symbol is exactly its advertised combination
    /// of the two part symbols.
    #[test]
    fn combined_symbol_matches_parts(
        (p, cp) in (2usize..=5).prop_flat_map(|p| (Just(p), pair_strategy(p))),
        alpha in 0.5..=1.0f64,
        c in 0.1..10.0f64,
        nu in 0.01..2.0f64,
        k_hat in 1e-3..std::f64::consts::PI,
    ) {
        let cfg = SchemeConfig::reference(p, alpha, c, nu).unwrap();
        let k = cfg.k_from_hat(k_hat);
        let q_ad = frlab::combined_symbol(&cfg, &cp, k).unwrap();
        let q_a = advection_symbol(&assemble_advection(&cfg, &cp).unwrap(), &cfg, k).unwrap();
        let q_d = diffusion_symbol(&assemble_diffusion(&cfg, &cp).unwrap(), &cfg, k).unwrap();
        let manual = &q_a * Complex64::new(2.0 * c, 0.0) + &q_d * Complex64::new(4.0 * nu, 0.0);
        let scale = 1.0 + manual.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let diff = (&q_ad - &manual).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-13 * scale, "diff {diff:.3e}");
    }

    /// The differentiation matrix is exact on the polynomial space.
    #[test]
    fn differentiation_exact_on_polynomials(
        p in 1usize..=8,
        coeffs in prop::collection::vec(-2.0..2.0f64, 1..=9),
    ) {
        let ns = gauss_legendre_points(p + 1).unwrap();
        let ops = build_operators(&ns).unwrap();
        let coeffs = &coeffs[..coeffs.len().min(p + 1)];
        let eval = |x: f64| -> f64 {
            coeffs.iter().enumerate().map(|(n, a)| a * x.powi(n as i32)).sum()
        };
        let deriv = |x: f64| -> f64 {
            coeffs.iter().enumerate().skip(1)
                .map(|(n, a)| a * n as f64 * x.powi(n as i32 - 1)).sum()
        };
        let u = DVector::from_fn(p + 1, |i, _| eval(ns.nodes[i]));
        let du = &ops.d * u;
        let scale = 1.0 + ops.d.amax();
        for i in 0..p + 1 {
            prop_assert!((du[i] - deriv(ns.nodes[i])).abs() < 1e-10 * scale);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Central interfaces make the advection spectrum purely imaginary for
    /// the norm-based families (any OSFR member is similar to a
    /// skew-Hermitian matrix in its Sobolev metric). Arbitrary GLSFR pairs
    /// carry no such guarantee — their stability is a region property, which
    /// is what the CFL maps chart.
    #[test]
    fn central_spectrum_is_imaginary(
        (p, cp) in (2usize..=5).prop_flat_map(|p| (Just(p), sobolev_pair_strategy(p))),
        k_hat in 1e-2..std::f64::consts::PI,
    ) {
        let cfg = SchemeConfig::reference(p, 0.5, 1.0, 0.0).unwrap();
        let ops = assemble_advection(&cfg, &cp).unwrap();
        let q = advection_symbol(&ops, &cfg, cfg.k_from_hat(k_hat)).unwrap();
        let scale = 1.0 + q.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for lambda in eigenvalues_complex(&q).unwrap() {
            prop_assert!(lambda.re.abs() < 1e-9 * scale, "Re = {:.3e}", lambda.re);
        }
    }

    /// The BR1 diffusion symbol is the square of the central first-derivative
    /// symbol, so for the norm-based families its eigenvalues are real and
    /// non-positive (squares of purely imaginary numbers).
    #[test]
    fn diffusion_spectrum_real_nonpositive(
        (p, cp) in (2usize..=5).prop_flat_map(|p| (Just(p), sobolev_pair_strategy(p))),
        k_hat in 1e-2..std::f64::consts::PI,
    ) {
        let cfg = SchemeConfig::reference(p, 1.0, 0.0, 1.0).unwrap();
        let ops = assemble_diffusion(&cfg, &cp).unwrap();
        let q = diffusion_symbol(&ops, &cfg, cfg.k_from_hat(k_hat)).unwrap();
        let scale = 1.0 + q.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for lambda in eigenvalues_complex(&q).unwrap() {
            prop_assert!(lambda.im.abs() < 1e-8 * scale, "Im = {:.3e}", lambda.im);
            prop_assert!(lambda.re < 1e-8 * scale, "Re = {:.3e}", lambda.re);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Whatever `cfl_limit` returns is genuinely stable: re-verified against
    /// the raw spectrum slightly inside the reported boundary, and the call
    /// is bitwise deterministic.
    #[test]
    fn cfl_limit_is_stable_and_deterministic(
        (p, cp) in (3usize..=4).prop_flat_map(|p| (Just(p), pair_strategy(p))),
        alpha in 0.5..=1.0f64,
    ) {
        let cfg = SchemeConfig::reference(p, alpha, 1.0, 0.0).unwrap();
        let tau_hat = cfl_limit(&cfg, &cp, 4, 64).unwrap();
        let again = cfl_limit(&cfg, &cp, 4, 64).unwrap();
        prop_assert_eq!(tau_hat.to_bits(), again.to_bits());
        if tau_hat > 0.0 {
            let tau = 0.999 * tau_hat / cfg.tau_hat_scale();
            let ops = assemble_advection(&cfg, &cp).unwrap();
            for m in 1..=64 {
                let k_hat = std::f64::consts::PI * m as f64 / 64.0;
                let q = advection_symbol(&ops, &cfg, cfg.k_from_hat(k_hat)).unwrap();
                let q = q * Complex64::new(2.0 * cfg.c, 0.0);
                for lambda in eigenvalues_complex(&q).unwrap() {
                    let rho = stability_poly(lambda * tau, 4).norm();
                    prop_assert!(rho <= 1.0 + 2e-10, "rho = {rho:.12}");
                }
            }
        }
    }
}
