//! Closed-form coefficients `a_δ`, `b_δ`, the LSW profile, the exponent `S`
//! and the limit functionals `ρ_δ`, `R_δ`, `R_0`.
//!
//! Everything is evaluated in `x = z^{1/3}`, where
//! `1 + z - λ z^{1/3} = (x - x₀)²(x + 2x₀) + δx` with `x₀ = 2^{-1/3}`.
//! The factored form keeps the near double root at `z = 1/2` accurate.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::Profile;
use crate::quadrature::{gauss_x, Grid};

pub fn lambda_lsw() -> f64 {
    3.0 * 2f64.powf(-2.0 / 3.0)
}

/// Cube root of the layer position, `(1/2)^{1/3}`.
pub fn x_layer() -> f64 {
    2f64.powf(-1.0 / 3.0)
}

/// `√3·π·2^{-1/3}`, the layer constant of `∫₀¹ a_δ ~ κ/√δ`.
pub fn kappa() -> f64 {
    3f64.sqrt() * PI * 2f64.powf(-1.0 / 3.0)
}

/// `3π²·2^{-2/3} = κ²`, the limit of `δ·(log ε)²`.
pub fn law_constant() -> f64 {
    3.0 * PI * PI * 2f64.powf(-2.0 / 3.0)
}

/// `1 + x³ - (λ_LSW - δ)x`, factored near the layer.
pub(crate) fn cubic(x: f64, delta: f64) -> f64 {
    let x0 = x_layer();
    if (x - x0).abs() < 0.25 {
        (x - x0) * (x - x0) * (x + 2.0 * x0) + delta * x
    } else {
        1.0 + x * x * x - (lambda_lsw() - delta) * x
    }
}

/// `a_δ(z)` without argument checks; requires `δ > 0` or `z` away from 1/2.
pub(crate) fn a_raw(z: f64, delta: f64) -> f64 {
    1.0 / cubic(z.cbrt(), delta)
}

/// `a_δ·b_δ·dz/dx`.
pub(crate) fn ab_x(x: f64, delta: f64) -> f64 {
    let lam = lambda_lsw() - delta;
    (6.0 * x * x - lam) / cubic(x, delta)
}

/// `a_δ·dz/dx`.
pub(crate) fn a_x(x: f64, delta: f64) -> f64 {
    3.0 * x * x / cubic(x, delta)
}

/// `a_δ·z·dz/dx`.
pub(crate) fn az_x(x: f64, delta: f64) -> f64 {
    3.0 * x.powi(5) / cubic(x, delta)
}

pub fn eval_a(z: f64, delta: f64) -> Result<f64> {
    if !(z >= 0.0) || !(delta >= 0.0) {
        return Err(Error::invalid(format!("eval_a needs z >= 0 and delta >= 0, got z = {z}, delta = {delta}")));
    }
    if delta == 0.0 && (z.cbrt() - x_layer()).abs() < 1e-6 {
        return Err(Error::invalid(format!("a_0 is singular near z = 1/2, got z = {z}")));
    }
    Ok(a_raw(z, delta))
}

pub fn eval_b(z: f64, delta: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::invalid(format!("eval_b needs z > 0, got {z}")));
    }
    let c = z.cbrt();
    Ok(2.0 - (lambda_lsw() - delta) / (3.0 * c * c))
}

#[derive(Debug, Clone, Copy)]
enum Form {
    /// `δ = 0`: double root at `x₀`.
    Critical,
    /// `p(x) = (x - r)(x² + r x + q)` with one real root `r < 0`.
    Split { r: f64, q: f64, amp: f64, omega: f64 },
}

/// Closed-form antiderivative `F_δ(z)` of `a_δ b_δ`.
///
/// In `x`, `a b dz = (6x² - λ)/p dx = 2p'/p + λ/p`, so `F = 2 ln p + λ∫dx/p`
/// and the last integral follows from partial fractions.
#[derive(Debug, Clone, Copy)]
pub struct AbPrimitive {
    delta: f64,
    lam: f64,
    form: Form,
    at_one: f64,
}

impl AbPrimitive {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta >= 0.0) || delta >= lambda_lsw() {
            return Err(Error::invalid(format!("delta out of range: {delta}")));
        }
        let lam = lambda_lsw() - delta;
        let form = if delta == 0.0 {
            Form::Critical
        } else {
            let r = real_root(lam);
            let q = -1.0 / r;
            let amp = 1.0 / (q + 2.0 * r * r);
            let omega = (q - 0.25 * r * r).sqrt();
            Form::Split { r, q, amp, omega }
        };
        let mut out = Self { delta, lam, form, at_one: 0.0 };
        out.at_one = out.eval_x(1.0);
        Ok(out)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `F(z)`; for `δ = 0` only defined away from `z = 1/2`.
    pub fn eval(&self, z: f64) -> f64 {
        self.eval_x(z.cbrt())
    }

    fn eval_x(&self, x: f64) -> f64 {
        let x0 = x_layer();
        let lq = match self.form {
            Form::Critical => {
                let d = x - x0;
                -d.abs().ln() / 3.0 - x0 / d + (x + 2.0 * x0).ln() / 3.0
            }
            Form::Split { r, q, amp, omega } => {
                let quad = x * x + r * x + q;
                self.lam
                    * (amp * (x - r).ln()
                        - 0.5 * amp * quad.ln()
                        - 1.5 * amp * r / omega * ((x + 0.5 * r) / omega).atan())
            }
        };
        2.0 * cubic(x, self.delta).ln() + lq
    }

    /// `ρ_δ(ξ) = ξ a_δ(ξ) exp(-∫_ξ^1 a_δ b_δ)`.
    pub fn rho(&self, xi: f64) -> f64 {
        if xi <= 0.0 {
            return 0.0;
        }
        if self.delta == 0.0 && xi <= 0.5 {
            return 0.0;
        }
        let x = xi.cbrt();
        (xi.ln() - cubic(x, self.delta).ln() + self.eval_x(x) - self.at_one).exp()
    }
}

fn real_root(lam: f64) -> f64 {
    // x³ - λx + 1 changes sign on [-2, -1] for 0 < λ < 3.5
    let p = |x: f64| x * x * x - lam * x + 1.0;
    let (mut lo, mut hi) = (-2.0, -1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..3 {
        r -= p(r) / (3.0 * r * r - lam);
    }
    r
}

pub fn rho_delta(xi: f64, delta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&xi) || xi == 0.0 {
        return Err(Error::invalid(format!("rho_delta needs xi in (0, 1], got {xi}")));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("rho_delta needs delta > 0"));
    }
    Ok(AbPrimitive::new(delta)?.rho(xi))
}

/// `ρ_0(ξ)` for `ξ ∈ (1/2, 1]`.
pub fn rho_zero(xi: f64) -> Result<f64> {
    if !(xi > 0.5 && xi <= 1.0) {
        return Err(Error::invalid(format!("rho_0 is only evaluated on (1/2, 1], got {xi}")));
    }
    Ok(AbPrimitive::new(0.0)?.rho(xi))
}

fn r_functional(h: &Profile, prim: &AbPrimitive) -> Result<f64> {
    let grid = h.grid();
    let one = grid.one_index();
    let vals: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(h.values())
        .enumerate()
        .map(|(k, (&z, &v))| if k <= one { prim.rho(z) * v } else { 0.0 })
        .collect();
    grid.integrate(&vals, 0.0, 1.0)
}

/// `R_δ[h] = ∫₀¹ ρ_δ h`.
pub fn r_delta(h: &Profile, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::invalid("r_delta needs delta > 0"));
    }
    r_functional(h, &AbPrimitive::new(delta)?)
}

/// `R_0[h] = ∫_{1/2}^1 ρ_0 h`; nodes at or below 1/2 carry the limit value 0.
pub fn r_zero(h: &Profile) -> Result<f64> {
    r_functional(h, &AbPrimitive::new(0.0)?)
}

/// Exponent of the unnormalized LSW profile, `∫₀^z a_0 b_0`, for `x = z^{1/3} < x₀`.
fn lsw_exponent_x(x: f64) -> f64 {
    let x0 = x_layer();
    2.0 * cubic(x, 0.0).ln() + ((x + 2.0 * x0) / (x0 - x)).ln() / 3.0 + x0 / (x0 - x) - 2f64.ln() / 3.0 - 1.0
}

/// The constant `C` with `∫ z Φ_LSW = 1`, computed once.
pub fn phi_lsw_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let x0 = x_layer();
        let panels = 400;
        let h = x0 / panels as f64;
        let mass: f64 = (0..panels)
            .map(|i| {
                let lo = i as f64 * h;
                gauss_x(|x| 3.0 * x.powi(5) * (-lsw_exponent_x(x)).exp(), lo, lo + h)
            })
            .sum();
        1.0 / mass
    })
}

/// `ln Φ_LSW(z)`; `-∞` for `z ≥ 1/2`.
pub fn ln_phi_lsw(z: f64) -> f64 {
    let x = z.cbrt();
    if !(z >= 0.0) || x >= x_layer() || z >= 0.5 {
        return f64::NEG_INFINITY;
    }
    phi_lsw_constant().ln() - lsw_exponent_x(x)
}

pub fn phi_lsw(z: f64) -> f64 {
    ln_phi_lsw(z).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub delta: f64,
    pub lambda: f64,
    pub eps: f64,
    pub teps: f64,
    pub m0: f64,
}

impl ParamState {
    pub fn new(delta: f64, eps: f64, teps: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < lambda_lsw()) {
            return Err(Error::invalid(format!("delta must lie in (0, lambda_lsw), got {delta}")));
        }
        if !(eps >= 0.0 && teps >= 0.0) || !eps.is_finite() || !teps.is_finite() {
            return Err(Error::invalid(format!("eps, teps must be finite and >= 0, got {eps}, {teps}")));
        }
        if eps == 0.0 && teps > 0.0 {
            return Err(Error::invalid("teps > 0 requires eps > 0"));
        }
        let m0 = if eps > 0.0 { teps / eps } else { 0.0 };
        Ok(Self { delta, lambda: lambda_lsw() - delta, eps, teps, m0 })
    }

    /// `ε = ε̃ = 0`: the parameters of `ψ̂_δ`.
    pub fn hat(delta: f64) -> Result<Self> {
        Self::new(delta, 0.0, 0.0)
    }
}

/// The three cumulative integrals `∫₀^z a b`, `∫₀^z a` and `∫₀^z a y`.
/// `S(ε, ε̃)` is linear in them, so one table serves every parameter pair.
#[derive(Debug, Clone)]
pub struct ExponentParts {
    grid: Arc<Grid>,
    delta: f64,
    pub ab: Vec<f64>,
    pub a: Vec<f64>,
    pub az: Vec<f64>,
}

impl ExponentParts {
    pub fn new(grid: Arc<Grid>, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::invalid("exponent needs delta > 0"));
        }
        let ab = grid.cumulative_x(|x| ab_x(x, delta));
        let a = grid.cumulative_x(|x| a_x(x, delta));
        let az = grid.cumulative_x(|x| az_x(x, delta));
        Ok(Self { grid, delta, ab, a, az })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn combine(&self, eps: f64, teps: f64) -> Vec<f64> {
        (0..self.ab.len()).map(|k| self.ab[k] - eps * self.a[k] - teps * self.az[k]).collect()
    }
}

/// `S(z; ε, ε̃, δ) = ∫₀^z a_δ (b_δ - ε̃y - ε) dy` at every node.
#[derive(Debug, Clone)]
pub struct LogWeight {
    grid: Arc<Grid>,
    s: Vec<f64>,
    params: ParamState,
}

pub fn build_log_weight(params: ParamState, grid: &Arc<Grid>) -> Result<LogWeight> {
    let parts = ExponentParts::new(grid.clone(), params.delta)?;
    LogWeight::from_parts(&parts, params)
}

impl LogWeight {
    pub fn from_parts(parts: &ExponentParts, params: ParamState) -> Result<Self> {
        if parts.delta() != params.delta {
            return Err(Error::invalid("exponent table and parameters disagree on delta"));
        }
        Ok(Self { grid: parts.grid().clone(), s: parts.combine(params.eps, params.teps), params })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn params(&self) -> ParamState {
        self.params
    }

    /// `S(z)` off the nodes: node value plus the partial cell by Gauss–Legendre.
    pub fn s_at(&self, z: f64) -> f64 {
        let k = self.grid.locate(z);
        let zk = self.grid.nodes()[k];
        let p = self.params;
        let g = |x: f64| ab_x(x, p.delta) - p.eps * a_x(x, p.delta) - p.teps * az_x(x, p.delta);
        self.s[k] + gauss_x(g, zk.cbrt(), z.cbrt())
    }

    /// Pointwise `S'(z) = a (b - ε - ε̃z)`.
    pub fn slope(&self, z: f64) -> f64 {
        let p = self.params;
        let c = z.cbrt();
        a_raw(z, p.delta) * (2.0 - p.lambda / (3.0 * c * c) - p.eps - p.teps * z)
    }
}
