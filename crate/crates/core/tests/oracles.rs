//! Library values against independent reference quadratures.

mod common;

use std::sync::Arc;

use common::*;
use lsw_core::homogeneous::PsiProfile;
use lsw_core::kernels::ParamState;
use lsw_core::profiles::z_norm_of;
use lsw_core::{
    compute_psi, convolve, eval_a, kappa, phi_lsw, r_delta, r_zero, rho_delta, GammaIndex, Grid, NormSpec,
    ParamContext, Profile,
};

#[test]
fn integral_of_a_matches_adaptive_reference() {
    let g = Grid::build(0.01, 10.0, 200).unwrap();
    let lib = g.integrate_fn(|z| eval_a(z, 0.01).unwrap(), 0.0, 1.0).unwrap();
    let reference = s_split(|y| a_naive(y, 0.01));
    assert!((lib / reference - 1.0).abs() < 1e-6, "{lib} vs {reference}");
    // leading order κ/√δ
    assert!((reference * 0.1 / kappa() - 1.0).abs() < 0.2);
}

fn s_split(f: impl Fn(f64) -> f64 + Copy) -> f64 {
    [(0.0, 0.4), (0.4, 0.5), (0.5, 0.6), (0.6, 1.0)].iter().map(|&(a, b)| adaptive_cube(f, a, b, 1e-13)).sum()
}

#[test]
fn singular_integral_on_cube_grid() {
    let g = Grid::build(0.04, 10.0, 200).unwrap();
    let v = g.integrate_fn(|z| z.powf(-2.0 / 3.0), 0.0, 1.0).unwrap();
    assert!((v - 3.0).abs() < 1e-6);
    let ones = vec![1.0; g.len()];
    assert!((g.integrate(&ones, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn exponent_matches_reference() {
    let delta = 0.04;
    let grid = Arc::new(Grid::build(delta, 10.0, 400).unwrap());
    let psi = compute_psi(ParamState::hat(delta).unwrap(), &grid).unwrap();
    let lw = psi.log_weight();
    assert_eq!(lw.s_at(0.0), 0.0);
    for z in [0.1, 0.3, 0.5, 0.7, 1.0, 3.0] {
        let (lib, reference) = (lw.s_at(z), s_oracle(z, delta, 0.0, 0.0));
        assert!((lib - reference).abs() < 1e-8 * (1.0 + reference.abs()), "z={z}: {lib} vs {reference}");
    }
    // S(1) at leading order: the layer contributes κ/√δ
    let gaps: Vec<f64> =
        [0.04, 0.01, 0.0025].iter().map(|&d| (s_oracle(1.0, d, 0.0, 0.0) * d.sqrt() / kappa() - 1.0).abs()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");

    let psi = compute_psi(ParamState::new(delta, 0.02, 0.03).unwrap(), &grid).unwrap();
    let reference = s_oracle(2.0, delta, 0.02, 0.03);
    assert!((psi.log_weight().s_at(2.0) - reference).abs() < 1e-8 * reference.abs());
}

#[test]
fn psi_ratio_across_the_layer() {
    let delta = 0.04;
    let grid = Arc::new(Grid::build(delta, 10.0, 400).unwrap());
    let psi: PsiProfile = compute_psi(ParamState::hat(delta).unwrap(), &grid).unwrap();
    let ratio = psi.psi_ratio(0.25, 0.9).unwrap();
    assert!(ratio >= 10f64.exp());
    let reference = s_oracle(0.9, delta, 0.0, 0.0) - s_oracle(0.25, delta, 0.0, 0.0);
    assert!((ratio.ln() / reference - 1.0).abs() < 1e-6, "{} vs {reference}", ratio.ln());
    assert_eq!(psi.psi_ratio(0.3, 0.3).unwrap(), 1.0);
}

#[test]
fn lsw_profile_reference_values() {
    let mass = adaptive_cube(|z| z * phi_lsw(z), 0.0, 0.25, 1e-14) + adaptive(|z| z * phi_lsw(z), 0.25, 0.5, 1e-14);
    assert!((mass - 1.0).abs() < 1e-8, "{mass}");
    assert!(phi_lsw(0.499) < 1e-8 * phi_lsw(0.25));
    assert_eq!(phi_lsw(0.75), 0.0);
}

#[test]
fn rho_ratio_shrinks_with_delta() {
    let ratios: Vec<f64> =
        [0.1, 0.05, 0.025].iter().map(|&d| rho_delta(0.25, d).unwrap() / rho_delta(0.85, d).unwrap()).collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
    // ρ_δ(ξ) = ξ a(ξ) exp(-∫_ξ^1 ab) against the reference exponent
    for (xi, d) in [(0.25, 0.05), (0.85, 0.05)] {
        let reference = xi * a_naive(xi, d) * (s_oracle(xi, d, 0.0, 0.0) - s_oracle(1.0, d, 0.0, 0.0)).exp();
        let lib = rho_delta(xi, d).unwrap();
        assert!((lib / reference - 1.0).abs() < 1e-8, "{xi}: {lib} vs {reference}");
    }
}

#[test]
fn rho_mass_stays_bounded() {
    for d in [1.0, 0.1, 0.01] {
        let g = Grid::build(d, 10.0, 400).unwrap();
        let m = g.integrate_fn(|xi| if xi > 0.0 { rho_delta(xi, d).unwrap() } else { 0.0 }, 0.0, 1.0).unwrap();
        let reference = adaptive_cube(|xi| if xi > 0.0 { rho_delta(xi, d).unwrap() } else { 0.0 }, 0.0, 1.0, 1e-12);
        assert!(m > 0.0 && m < 2.0, "delta {d}: {m}");
        assert!((m / reference - 1.0).abs() < 1e-6);
    }
}

#[test]
fn r_delta_is_cauchy_towards_r_zero() {
    let mut gaps = Vec::new();
    for d in [0.08, 0.04, 0.02, 0.01] {
        let g = Arc::new(Grid::build(d, 10.0, 400).unwrap());
        let lsw = Profile::from_fn(g, NormSpec::default(), phi_lsw).unwrap();
        let h = convolve(&lsw, &lsw).unwrap();
        gaps.push((r_delta(&h, d).unwrap() - r_zero(&h).unwrap()).abs() / r_zero(&h).unwrap());
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    let g = Arc::new(Grid::build(0.04, 10.0, 100).unwrap());
    assert_eq!(r_delta(&Profile::zeros(g, NormSpec::default()), 0.04).unwrap(), 0.0);
}

#[test]
fn g_hat_over_k_r_tends_to_one() {
    let mut errs = Vec::new();
    for d in [0.08, 0.04, 0.02] {
        let g = Arc::new(Grid::build(d, 10.0, 400).unwrap());
        let ctx = ParamContext::new(g.clone(), NormSpec::default()).unwrap();
        let lsw = Profile::from_fn(g, NormSpec::default(), phi_lsw).unwrap();
        let h = convolve(&lsw, &lsw).unwrap();
        let s = ctx.g_hat(&h).unwrap();
        let r = r_delta(&h, d).unwrap();
        let ratio = s[0].inner / (ctx.ln_k(GammaIndex::One).exp() * r);
        errs.push((ratio - 1.0).abs());
    }
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn convolution_matches_brute_force() {
    let grid = grid64();
    let z = grid.nodes().to_vec();
    let p: Vec<f64> = z.iter().map(|&x| (-x).exp() * (1.0 + x.sin().abs())).collect();
    let q: Vec<f64> = z.iter().map(|&x| 1.0 / (1.0 + x * x)).collect();
    let lib = convolve(&profile(&grid, p.clone()), &profile(&grid, q.clone())).unwrap();
    let reference = brute_convolve(&z, &p, &q);
    for (a, b) in lib.values().iter().zip(&reference) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{a} vs {b}");
    }
}

#[test]
fn z_norm_reference_values() {
    let grid = Arc::new(Grid::build(0.04, 10.0, 400).unwrap());
    let norm = NormSpec::default();
    let v: Vec<f64> = grid.nodes().iter().map(|&z| (-2.0 * z).exp()).collect();
    let n = z_norm_of(&grid, &norm, &v);
    // max of e^{-z} z² on [1, 10] sits at z = 2
    let fine = (0..=90_000).map(|i| 1.0 + i as f64 * 1e-4).map(|z| (-z).exp() * z * z).fold(0.0, f64::max);
    assert!((n.tail_part - fine).abs() < 1e-4, "{} vs {fine}", n.tail_part);
    assert!((fine - 4.0 * (-2.0f64).exp()).abs() < 1e-8);
    assert_eq!(n.sup_part, 1.0);

    let lsw: Vec<f64> = grid.nodes().iter().map(|&z| phi_lsw(z)).collect();
    let n = z_norm_of(&grid, &norm, &lsw);
    assert_eq!(n.tail_part, 0.0);
    assert_eq!(n.sup_part, lsw.iter().cloned().fold(0.0, f64::max));
}
