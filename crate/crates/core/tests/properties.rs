//! Algebraic invariants over randomized inputs.

mod common;

use std::sync::{Arc, OnceLock};

use common::*;
use lsw_core::homogeneous::log_normalizer;
use lsw_core::{compute_gamma, convolve, eval_a, GammaIndex, Grid, ParamContext, Profile};
use proptest::prelude::*;

fn grid() -> Arc<Grid> {
    static G: OnceLock<Arc<Grid>> = OnceLock::new();
    G.get_or_init(|| Arc::new(Grid::build(0.04, 10.0, 100).unwrap())).clone()
}

fn ctx() -> &'static ParamContext {
    static C: OnceLock<ParamContext> = OnceLock::new();
    C.get_or_init(|| ParamContext::new(grid(), Default::default()).unwrap())
}

/// `c·e^{-rz}(1 + s·sin(wz))`, nonnegative for `|s| ≤ 1`.
fn sampled(c: f64, r: f64, s: f64, w: f64) -> Profile {
    Profile::from_fn(grid(), Default::default(), |z| c * (-r * z).exp() * (1.0 + s * (w * z).sin())).unwrap()
}

fn profile_params() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.1f64..5.0, 1.0f64..4.0, -1.0f64..1.0, 0.5f64..6.0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn integrate_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, p in profile_params(), q in profile_params()) {
        let (f, g) = (sampled(p.0, p.1, p.2, p.3), sampled(q.0, q.1, q.2, q.3));
        let comb = f.linear_combination(a, &g, b).unwrap();
        let lhs = comb.integrate(0.0, 10.0).unwrap();
        let rhs = a * f.integrate(0.0, 10.0).unwrap() + b * g.integrate(0.0, 10.0).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs() + rhs.abs()));
    }

    #[test]
    fn integrate_is_additive(a in 0.0f64..3.0, w1 in 0.0f64..3.0, w2 in 0.0f64..4.0, p in profile_params()) {
        let f = sampled(p.0, p.1, p.2, p.3);
        let (b, c) = (a + w1, a + w1 + w2);
        let whole = f.integrate(a, c).unwrap();
        let parts = f.integrate(a, b).unwrap() + f.integrate(b, c).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-13 * (1.0 + whole.abs()));
    }

    #[test]
    fn a_inverts_its_denominator(z in 0.0f64..50.0, delta in 1e-3f64..1.0) {
        let a = eval_a(z, delta).unwrap();
        let den = 1.0 + z - lambda() * z.cbrt() + delta * z.cbrt();
        prop_assert!((a * den - 1.0).abs() < 1e-9 * (1.0 + a), "{}", a * den);
    }

    #[test]
    fn convolution_is_symmetric_and_nonnegative(p in profile_params(), q in profile_params()) {
        let (f, g) = (sampled(p.0, p.1, p.2, p.3), sampled(q.0, q.1, q.2, q.3));
        let fg = convolve(&f, &g).unwrap();
        let gf = convolve(&g, &f).unwrap();
        prop_assert_eq!(fg.values(), gf.values());
        prop_assert!(fg.values().iter().all(|&v| v >= 0.0));
        prop_assert_eq!(fg.values()[0], 0.0);
    }

    #[test]
    fn convolution_is_bounded_bilinear(p in profile_params(), q in profile_params()) {
        let (f, g) = (sampled(p.0, p.1, p.2, p.3), sampled(q.0, q.1, q.2, q.3));
        let fg = convolve(&f, &g).unwrap();
        let c = fg.z_norm().total() / (f.z_norm().total() * g.z_norm().total());
        prop_assert!(c <= CONV_CONSTANT, "{c}");
    }

    #[test]
    fn convolution_difference_bound(p in profile_params(), t in -0.2f64..0.2) {
        let f1 = sampled(p.0, p.1, p.2, p.3);
        let f2 = sampled(p.0 * (1.0 + t), p.1, p.2, p.3);
        let d = convolve(&f2, &f2).unwrap().distance(&convolve(&f1, &f1).unwrap()).unwrap();
        let bound = CONV_CONSTANT * (f1.z_norm().total() + f2.z_norm().total()) * f2.distance(&f1).unwrap();
        prop_assert!(d <= bound * (1.0 + 1e-12), "{d} > {bound}");
    }

    #[test]
    fn normalizer_gauge(c in -50.0f64..50.0) {
        let s = ctx().psi_hat().s().to_vec();
        let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
        let (l0, l1) = (log_normalizer(&grid(), &s), log_normalizer(&grid(), &shifted));
        prop_assert!((l1 - c - l0).abs() < 1e-10 * (1.0 + l0.abs()));
    }

    #[test]
    fn gamma_dominated_by_hat(eps in 0.0f64..0.05, teps in 0.0f64..0.05) {
        let eps = if teps > 0.0 { eps.max(1e-6) } else { eps };
        let psi = ctx().psi(eps, teps).unwrap();
        for i in [GammaIndex::One, GammaIndex::Two] {
            let t = compute_gamma(i, &psi).unwrap();
            let hat = ctx().gamma_hat(i);
            for (a, b) in t.ln_values().iter().zip(hat.ln_values()) {
                prop_assert!(a == b || *a <= *b + 1e-12 * b.abs().max(1.0), "{a} > {b}");
            }
        }
    }

    #[test]
    fn tail_moments_decay_like_the_norm(r in 1.2f64..4.0, n in prop_oneof![Just(0i32), Just(3i32)]) {
        // z^{-n}∫_z^∞ ξⁿ e^{-rξ} dξ against e^{-z}z^{-2}·sup(e^{ξ}ξ² e^{-rξ})
        let g = grid();
        let tail = |z: f64| adaptive(|x| x.powi(n) * (-r * x).exp(), z, z + 60.0, 1e-14) / z.powi(n);
        let sup = g.nodes().iter().filter(|&&z| z >= 1.0).map(|&z| (-r * z).exp() * z.exp() * z * z).fold(0.0, f64::max);
        let ratio = (1..=9).map(|k| k as f64).map(|z| tail(z) / ((-z).exp() / (z * z) * sup)).fold(0.0, f64::max);
        prop_assert!(ratio.is_finite() && ratio < TAIL_CONSTANT, "{ratio}");
    }
}

/// Calibrated on the default norm over the sampled family; observed up to about 0.5.
const CONV_CONSTANT: f64 = 1.0;
/// Calibrated over rates in `[1.2, 4]` for `n = 0, 3`; observed up to about 1.65.
const TAIL_CONSTANT: f64 = 4.0;

#[test]
fn constants_convolve_to_half_z() {
    let g = grid64();
    let ones = profile(&g, vec![1.0; g.len()]);
    let c = convolve(&ones, &ones).unwrap();
    for (&z, &v) in g.nodes().iter().zip(c.values()) {
        assert!((v - 0.5 * z).abs() < 1e-12 * (1.0 + z));
    }
}
