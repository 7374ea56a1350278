//! The functionals `Γ_i`, `G_i`, `g_i = ε²G_i` and the compatibility fixed
//! point for `(ε, ε̃)`.
//!
//! `G_i` is evaluated in two ways. The `Γ` route integrates `ξ a h Γ_i` and
//! gives the hatted quantities, the split at `z = 1` and the tail error bar.
//! The solve itself uses `G₁ = ∫ z J`, `G₂ = ∫ J` (Fubini applied to the
//! definition of `Γ_i`), so the profile `ε J` built from the solved
//! parameters meets both moment conditions in the discrete sense.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homogeneous::{PsiProfile, MAX_EXPONENT};
use crate::kernels::{a_raw, ExponentParts, ParamState};
use crate::profiles::{NormSpec, Profile};
use crate::quadrature::{exp_linear_cell, ln_weighted_head, upper_tail_moment, weighted_tail, Grid};

/// Bracket factor: `ε` is searched in `[ε_app/α, α·ε_app]`.
pub const BAND_ALPHA: f64 = 2.0;
const INNER_RTOL: f64 = 1e-12;
const MAX_OUTER: usize = 200;

/// Selects `γ₁(z) = z` or `γ₂(z) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaIndex {
    One,
    Two,
}

impl GammaIndex {
    pub fn gamma(self, z: f64) -> f64 {
        match self {
            GammaIndex::One => z,
            GammaIndex::Two => 1.0,
        }
    }
}

/// `ln Γ_i` at every node (`-∞` at the origin).
#[derive(Debug, Clone)]
pub struct GammaTable {
    index: GammaIndex,
    ln_values: Vec<f64>,
    hat: bool,
    one: usize,
}

/// `Γ_i(ξ) = ∫₀^ξ γ_i(z) exp(S(ξ) - S(z)) dz`, accumulated in log space.
pub fn compute_gamma(index: GammaIndex, psi: &PsiProfile) -> Result<GammaTable> {
    let grid = psi.grid();
    let s = psi.s();
    let mut low = f64::INFINITY;
    for &v in s {
        low = low.min(v);
        if v - low > MAX_EXPONENT {
            return Err(Error::Overflow { exponent: v - low });
        }
    }
    let gamma: Vec<f64> = grid.nodes().iter().map(|&z| index.gamma(z)).collect();
    let neg: Vec<f64> = s.iter().map(|v| -v).collect();
    let ln_values = ln_weighted_head(grid, &gamma, &neg);
    let p = psi.params();
    Ok(GammaTable { index, ln_values, hat: p.eps == 0.0 && p.teps == 0.0, one: grid.one_index() })
}

impl GammaTable {
    pub fn index(&self) -> GammaIndex {
        self.index
    }

    pub fn is_hat(&self) -> bool {
        self.hat
    }

    pub fn ln_values(&self) -> &[f64] {
        &self.ln_values
    }

    pub fn value(&self, k: usize) -> f64 {
        self.ln_values[k].exp()
    }

    /// `ln Γ_i(1)`; for the hatted table this is `ln K_i`.
    pub fn ln_at_one(&self) -> f64 {
        self.ln_values[self.one]
    }

    /// `max_{ξ ∈ [1, z_max]} Γ_i(ξ) / (Γ_i(1) ξ⁴)`: the measured constant of
    /// the quartic growth bound, extended beyond `z_max` for the tail bar.
    pub fn growth_constant(&self, grid: &Grid) -> f64 {
        let l1 = self.ln_at_one();
        grid.nodes()[self.one..]
            .iter()
            .zip(&self.ln_values[self.one..])
            .map(|(&z, &l)| (l - l1 - 4.0 * z.ln()).exp())
            .fold(0.0, f64::max)
    }
}

/// `G_i` split at `z = 1`, with the bound on the part beyond `z_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GSplit {
    /// `∫₀¹ ξ a h Γ_i`.
    pub inner: f64,
    /// `∫₁^{z_max} ξ a h Γ_i`.
    pub outer: f64,
    /// Upper bound of `∫_{z_max}^∞ ξ a h Γ_i`; reported, never added.
    pub tail_bar: f64,
}

impl GSplit {
    pub fn total(&self) -> f64 {
        self.inner + self.outer
    }
}

/// `sup_{[z_max - 1, z_max]} |h| e^{β₁z} z^{β₂}`: envelope constant for `h` beyond `z_max`.
pub fn tail_envelope(h: &Profile) -> f64 {
    let grid = h.grid();
    let zm = grid.z_max();
    let norm = h.norm_spec();
    grid.nodes()
        .iter()
        .zip(h.values())
        .filter(|(&z, _)| z >= zm - 1.0 && z >= 1.0)
        .map(|(&z, v)| v.abs() * norm.weight(z))
        .fold(0.0, f64::max)
}

/// `ξ a_δ(ξ) h(ξ)` at the nodes.
pub fn flux(h: &Profile, delta: f64) -> Vec<f64> {
    h.grid().nodes().iter().zip(h.values()).map(|(&z, &v)| z * a_raw(z, delta) * v).collect()
}

pub fn compute_g(h: &Profile, gamma: &GammaTable) -> Result<GSplit> {
    let grid = h.grid();
    if gamma.ln_values.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    let delta = grid.delta();
    let f = flux(h, delta);
    let z = grid.nodes();
    let lg = &gamma.ln_values;
    let one = grid.one_index();
    let shift = gamma.ln_at_one();
    let cells = |from: usize, to: usize| -> f64 {
        (from..to).map(|k| exp_linear_cell(f[k], f[k + 1], lg[k] - shift, lg[k + 1] - shift, z[k + 1] - z[k])).sum()
    };
    let scale = shift.exp();
    let inner = scale * cells(0, one);
    let outer = scale * cells(one, z.len() - 1);
    if !inner.is_finite() || !outer.is_finite() {
        return Err(Error::Overflow { exponent: shift });
    }

    let zm = grid.z_max();
    let norm = h.norm_spec();
    let envelope = tail_envelope(h);
    let tail_bar = if envelope == 0.0 {
        0.0
    } else {
        let za = zm * a_raw(zm, delta);
        gamma.growth_constant(grid) * scale * za * envelope * upper_tail_moment(zm, 4.0 - norm.beta2(), norm.beta1())
    };
    Ok(GSplit { inner, outer, tail_bar })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSolveResult {
    pub eps: f64,
    pub teps: f64,
    pub eps_app: f64,
    pub teps_app: f64,
    pub band_alpha: f64,
    pub iterations: usize,
    /// `|g₁ - ε|/ε` and `|g₂ - ε̃|/ε̃`.
    pub residuals: (f64, f64),
    /// Whether the outer iteration switched to damping.
    pub damped: bool,
    /// `Ĝ₁`, `Ĝ₂` over `[0, 1]`.
    pub g_hat: [f64; 2],
    /// Tail error bars of `Ĝ₁`, `Ĝ₂`.
    pub tail_bar: [f64; 2],
}

/// `ε ∂g_i/∂ε` (first column) and `ε̃ ∂g_i/∂ε̃` (second column) for `i = 1, 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub matrix: [[f64; 2]; 2],
    pub g: [f64; 2],
}

/// Everything about one `δ` that does not depend on `h`: grid, exponent
/// tables, `ψ̂_δ` and `Γ̂_i`.
#[derive(Debug, Clone)]
pub struct ParamContext {
    grid: Arc<Grid>,
    norm: NormSpec,
    parts: ExponentParts,
    psi_hat: PsiProfile,
    gamma_hat: [GammaTable; 2],
}

impl ParamContext {
    pub fn new(grid: Arc<Grid>, norm: NormSpec) -> Result<Self> {
        let delta = grid.delta();
        let parts = ExponentParts::new(grid.clone(), delta)?;
        let psi_hat = PsiProfile::from_parts(&parts, ParamState::hat(delta)?)?;
        let gamma_hat = [compute_gamma(GammaIndex::One, &psi_hat)?, compute_gamma(GammaIndex::Two, &psi_hat)?];
        Ok(Self { grid, norm, parts, psi_hat, gamma_hat })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn delta(&self) -> f64 {
        self.grid.delta()
    }

    pub fn norm(&self) -> NormSpec {
        self.norm
    }

    pub fn parts(&self) -> &ExponentParts {
        &self.parts
    }

    pub fn psi_hat(&self) -> &PsiProfile {
        &self.psi_hat
    }

    pub fn gamma_hat(&self, index: GammaIndex) -> &GammaTable {
        match index {
            GammaIndex::One => &self.gamma_hat[0],
            GammaIndex::Two => &self.gamma_hat[1],
        }
    }

    /// `ln K_i = ln Γ̂_i(1)`.
    pub fn ln_k(&self, index: GammaIndex) -> f64 {
        self.gamma_hat(index).ln_at_one()
    }

    pub fn psi(&self, eps: f64, teps: f64) -> Result<PsiProfile> {
        PsiProfile::from_parts(&self.parts, ParamState::new(self.delta(), eps, teps)?)
    }

    fn check(&self, h: &Profile) -> Result<()> {
        if !(Arc::ptr_eq(h.grid(), &self.grid) || h.grid().nodes() == self.grid.nodes()) {
            return Err(Error::GridMismatch);
        }
        if h.min_value() < 0.0 {
            return Err(Error::invalid("h must be nonnegative"));
        }
        Ok(())
    }

    /// `(G₁, G₂)` at `(ε, ε̃)` as moments of `J = ∫_z ξ a h e^{S(ξ)-S(z)}`.
    pub fn g_moments(&self, flux: &[f64], eps: f64, teps: f64) -> Result<(f64, f64)> {
        let s = self.parts.combine(eps, teps);
        let j = weighted_tail(&self.grid, flux, &s);
        let w = self.grid.weights();
        let z = self.grid.nodes();
        let (mut g1, mut g2) = (0.0, 0.0);
        for k in 0..j.len() {
            g1 += w[k] * z[k] * j[k];
            g2 += w[k] * j[k];
        }
        if !g1.is_finite() || !g2.is_finite() {
            let span =
                s.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - s.iter().cloned().fold(f64::INFINITY, f64::min);
            return Err(Error::Overflow { exponent: span });
        }
        Ok((g1, g2))
    }

    /// `g_i = ε² G_i`.
    pub fn g_values(&self, h: &Profile, eps: f64, teps: f64) -> Result<[f64; 2]> {
        self.check(h)?;
        let f = flux(h, self.delta());
        let (g1, g2) = self.g_moments(&f, eps, teps)?;
        Ok([eps * eps * g1, eps * eps * g2])
    }

    /// `Ĝ_i` by the `Γ̂` route.
    pub fn g_hat(&self, h: &Profile) -> Result<[GSplit; 2]> {
        self.check(h)?;
        Ok([compute_g(h, &self.gamma_hat[0])?, compute_g(h, &self.gamma_hat[1])?])
    }

    pub fn solve_params(&self, h: &Profile, tol: f64) -> Result<ParamSolveResult> {
        self.solve_params_from(h, tol, None)
    }

    /// As [`ParamContext::solve_params`], with an optional starting value for `ε̃`.
    pub fn solve_params_from(&self, h: &Profile, tol: f64, teps_start: Option<f64>) -> Result<ParamSolveResult> {
        if !(tol > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        let hat = self.g_hat(h)?;
        let (gh1, gh2) = (hat[0].inner, hat[1].inner);
        if !(gh1 > 0.0) {
            return Err(Error::invalid("h vanishes on [0, 1]; no compatible parameters"));
        }
        for s in &hat {
            let limit = tol * s.total();
            if s.tail_bar > limit {
                return Err(Error::TailDominance { bar: s.tail_bar, limit });
            }
        }
        let eps_app = 1.0 / gh1;
        let teps_app = eps_app * gh2 / gh1;
        let f = flux(h, self.delta());

        let mut teps = teps_start.unwrap_or(teps_app);
        let mut damping = 1.0;
        let mut prev_step: Option<f64> = None;
        let mut growth = 0;
        let mut steps = Vec::new();
        for it in 1..=MAX_OUTER {
            let eps = self.solve_eps(&f, teps, eps_app)?;
            let (_, g2) = self.g_moments(&f, eps, teps)?;
            let target = eps * eps * g2;
            let step = target - teps;
            steps.push(step);
            if step.abs() <= tol * target {
                let eps = self.solve_eps(&f, target, eps_app)?;
                let (g1, g2) = self.g_moments(&f, eps, target)?;
                let residuals = ((eps * g1 - 1.0).abs(), (eps * eps * g2 - target).abs() / target);
                return Ok(ParamSolveResult {
                    eps,
                    teps: target,
                    eps_app,
                    teps_app,
                    band_alpha: BAND_ALPHA,
                    iterations: it,
                    residuals,
                    damped: damping < 1.0,
                    g_hat: [gh1, gh2],
                    tail_bar: [hat[0].tail_bar, hat[1].tail_bar],
                });
            }
            if let Some(p) = prev_step {
                if step.signum() != p.signum() && step.abs() > 0.5 * p.abs() {
                    damping = 0.5;
                }
                growth = if step.abs() > p.abs() { growth + 1 } else { 0 };
                if growth >= 3 {
                    return Err(Error::NonContraction {
                        context: "outer iteration on teps diverges".into(),
                        ratios: steps,
                    });
                }
            }
            prev_step = Some(step);
            teps += damping * step;
            if !(teps >= 0.0) {
                return Err(Error::NonContraction { context: "teps left the nonnegative cone".into(), ratios: steps });
            }
        }
        Err(Error::NonContraction { context: format!("no teps convergence in {MAX_OUTER} steps"), ratios: steps })
    }

    /// Root of `ε G₁(ε, ε̃) = 1` on the bracket: bisection, then one secant step.
    fn solve_eps(&self, flux: &[f64], teps: f64, eps_app: f64) -> Result<f64> {
        let phi = |e: f64| -> Result<f64> { Ok(e * self.g_moments(flux, e, teps)?.0 - 1.0) };
        let (mut lo, mut hi) = (eps_app / BAND_ALPHA, eps_app * BAND_ALPHA);
        let (mut f_lo, mut f_hi) = (phi(lo)?, phi(hi)?);
        if !(f_lo <= 0.0 && f_hi >= 0.0) {
            return Err(Error::BracketFailure { lo, hi, f_lo, f_hi });
        }
        while hi - lo > INNER_RTOL * hi {
            let mid = 0.5 * (lo + hi);
            let f_mid = phi(mid)?;
            if f_mid <= 0.0 {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
                f_hi = f_mid;
            }
        }
        if f_hi == f_lo {
            return Ok(0.5 * (lo + hi));
        }
        Ok((lo - f_lo * (hi - lo) / (f_hi - f_lo)).clamp(lo, hi))
    }

    /// Central differences in `ln ε`, `ln ε̃` with step `η` and `η/2`;
    /// disagreement beyond `1e-3` relative signals step-size breakdown.
    pub fn param_sensitivity(&self, h: &Profile, params: ParamState) -> Result<Sensitivity> {
        self.check(h)?;
        let f = flux(h, self.delta());
        let (e, t) = (params.eps, params.teps);
        if !(e > 0.0 && t > 0.0) {
            return Err(Error::invalid("sensitivity needs eps, teps > 0"));
        }
        let g = |e: f64, t: f64| -> Result<[f64; 2]> {
            let (g1, g2) = self.g_moments(&f, e, t)?;
            Ok([e * e * g1, e * e * g2])
        };
        let base = g(e, t)?;
        let diff = |eta: f64, along_eps: bool| -> Result<[f64; 2]> {
            let (p, m) = if along_eps {
                (g(e * (1.0 + eta), t)?, g(e * (1.0 - eta), t)?)
            } else {
                (g(e, t * (1.0 + eta))?, g(e, t * (1.0 - eta))?)
            };
            Ok([(p[0] - m[0]) / (2.0 * eta), (p[1] - m[1]) / (2.0 * eta)])
        };
        let eta = 1e-3;
        let mut matrix = [[0.0; 2]; 2];
        for (col, along_eps) in [(0, true), (1, false)] {
            let coarse = diff(eta, along_eps)?;
            let fine = diff(0.5 * eta, along_eps)?;
            for i in 0..2 {
                let rich = (4.0 * fine[i] - coarse[i]) / 3.0;
                if (fine[i] - coarse[i]).abs() > 1e-3 * (rich.abs() + base[i].abs()) {
                    return Err(Error::StepBreakdown(format!(
                        "g{} along {}: {:e} vs {:e}",
                        i + 1,
                        if along_eps { "eps" } else { "teps" },
                        coarse[i],
                        fine[i]
                    )));
                }
                matrix[i][col] = rich;
            }
        }
        Ok(Sensitivity { matrix, g: base })
    }
}
