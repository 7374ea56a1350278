//! Reference computations that share no code with the library.

#![allow(dead_code)]

use lsw_core::{Grid, NormSpec, Profile};
use std::sync::Arc;

pub fn lambda() -> f64 {
    3.0 / 4f64.cbrt()
}

/// `1/(1 + z - (λ_LSW - δ) z^{1/3})` written out directly.
pub fn a_naive(z: f64, delta: f64) -> f64 {
    1.0 / (1.0 + z - (lambda() - delta) * z.cbrt())
}

pub fn b_naive(z: f64, delta: f64) -> f64 {
    2.0 - (lambda() - delta) / (3.0 * z.cbrt().powi(2))
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive bisection Simpson with the Richardson correction `(S₂ - S₁)/15`.
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let f = &f as &dyn Fn(f64) -> f64;
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    adapt(f, a, b, fa, fm, fb, simpson(fa, fm, fb, b - a), tol, 50)
}

/// Adaptive integral in `x = z^{1/3}`, so `z^{-2/3}` endpoints become smooth.
pub fn adaptive_cube(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adaptive(|x| f(x * x * x) * 3.0 * x * x, a.cbrt(), b.cbrt(), tol)
}

/// `S(z) = ∫₀^z a(b - ε - ε̃y) dy` in `x = y^{1/3}`, where `3x²·b = 6x² - λ`,
/// split around `1/2` where the integrand peaks.
pub fn s_oracle(z: f64, delta: f64, eps: f64, teps: f64) -> f64 {
    let lam = lambda() - delta;
    let g = |x: f64| {
        let y = x * x * x;
        a_naive(y, delta) * (6.0 * x * x - lam - 3.0 * x * x * (eps + teps * y))
    };
    let mut acc = 0.0;
    let mut lo = 0.0;
    for cut in [0.4, 0.5, 0.6] {
        if z > cut {
            acc += adaptive(g, lo, cut.cbrt(), 1e-13);
            lo = cut.cbrt();
        }
    }
    acc + adaptive(g, lo, z.cbrt(), 1e-13)
}

fn interp(z: &[f64], v: &[f64], x: f64) -> f64 {
    let i = match z.binary_search_by(|p| p.total_cmp(&x)) {
        Ok(i) => return v[i],
        Err(i) => i - 1,
    };
    let t = (x - z[i]) / (z[i + 1] - z[i]);
    v[i] + t * (v[i + 1] - v[i])
}

/// `½∫₀^z Φ₁(z-y)Φ₂(y)dy` folded at `z/2`, trapezoid over every node below
/// `z/2` plus `z/2` itself, each point interpolated by binary search.
pub fn brute_convolve(z: &[f64], p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    for k in 1..z.len() {
        let half = 0.5 * z[k];
        let mut ys: Vec<f64> = z.iter().copied().filter(|&y| y <= half).collect();
        if *ys.last().unwrap() < half {
            ys.push(half);
        }
        let g: Vec<f64> = ys
            .iter()
            .map(|&y| interp(z, p, z[k] - y) * interp(z, q, y) + interp(z, q, z[k] - y) * interp(z, p, y))
            .collect();
        let mut sum = 0.0;
        for i in 1..ys.len() {
            sum += 0.5 * (ys[i] - ys[i - 1]) * (g[i] + g[i - 1]);
        }
        out[k] = 0.5 * sum;
    }
    out
}

/// A 64-node grid on `[0, 10]` that is uniform in `z^{1/3}` and contains 1.
pub fn grid64() -> Arc<Grid> {
    let top = 10f64.cbrt();
    let mut nodes: Vec<f64> = (0..63).map(|i| (top * i as f64 / 62.0).powi(3)).collect();
    nodes.push(1.0);
    nodes.sort_by(f64::total_cmp);
    Arc::new(Grid::from_nodes(nodes, 0.04).unwrap())
}

pub fn profile(grid: &Arc<Grid>, values: Vec<f64>) -> Profile {
    Profile::new(grid.clone(), values, NormSpec::default()).unwrap()
}
