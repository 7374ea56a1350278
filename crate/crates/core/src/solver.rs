//! The profile fixed point `Φ = Ī_δ[Φ] = ε·J[Φ*Φ; ε, ε̃, δ]`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homogeneous::{PsiProfile, MAX_EXPONENT};
use crate::kernels::{a_raw, phi_lsw, r_zero, ParamState};
use crate::params::{flux, tail_envelope, GammaIndex, ParamContext, ParamSolveResult};
use crate::profiles::{convolve, NormSpec, Profile};
use crate::quadrature::{exp_linear_cell, upper_tail_moment, weighted_head, weighted_tail, Grid, GridMeta};

/// Profile the iteration starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartProfile {
    /// `Φ̂_δ = ψ̂_δ` on `[0, 1]`, zero beyond.
    BallCenter,
    /// `Φ_LSW`.
    Lsw,
}

/// How the ball radius `μ_δ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MuPolicy {
    /// `μ = max(δ^{1/4}, 2(δK₁)^{-1/2}, 2‖Φ̂_δ - Φ_LSW‖^{1/2})`.
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub delta: f64,
    pub norm: NormSpec,
    pub z_max: f64,
    pub n_base: usize,
    pub tol_profile: f64,
    pub tol_params: f64,
    pub max_iter: usize,
    pub mu_policy: MuPolicy,
    pub start: StartProfile,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta: 0.04,
            norm: NormSpec::default(),
            z_max: 10.0,
            n_base: 400,
            tol_profile: 1e-8,
            tol_params: 1e-10,
            max_iter: 100,
            mu_policy: MuPolicy::Standard,
            start: StartProfile::BallCenter,
        }
    }
}

impl SolverConfig {
    pub fn with_delta(delta: f64) -> Self {
        Self { delta, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_profile > 0.0 && self.tol_params > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.max_iter < 1 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        NormSpec::new(self.norm.beta1(), self.norm.beta2())?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct JOutput {
    pub profile: Profile,
    /// Z-norm bound of the part of `J` coming from `ξ > z_max`.
    pub tail_bar: f64,
}

/// `J(z) = ∫_z^{z_max} ξ a(ξ) h(ξ) exp(S(ξ) - S(z)) dξ` by backward recursion.
pub fn apply_j(h: &Profile, psi: &PsiProfile) -> Result<JOutput> {
    let grid = psi.grid();
    if !(Arc::ptr_eq(h.grid(), grid) || h.grid().nodes() == grid.nodes()) {
        return Err(Error::GridMismatch);
    }
    let delta = grid.delta();
    let s = psi.s();
    let j = weighted_tail(grid, &flux(h, delta), s);
    if let Some(k) = j.iter().position(|v| !v.is_finite()) {
        return Err(Error::Overflow { exponent: s[s.len() - 1] - s[k] });
    }
    let tail_bar = j_tail_bar(h, psi);
    Ok(JOutput { profile: h.with_values(j)?, tail_bar })
}

/// For `ξ ≥ z_max`: `ξ a(ξ) ≤ z_max a(z_max)`, `S' ≤ 2a ≤ m/ξ` with
/// `m = 2 z_max a(z_max)`, and `|h| ≤ T e^{-β₁ξ} ξ^{-β₂}` with `T` measured
/// on the last unit interval. The bound at node `k` is `e^{S_N - S_k}·τ`.
fn j_tail_bar(h: &Profile, psi: &PsiProfile) -> f64 {
    let envelope = tail_envelope(h);
    if envelope == 0.0 {
        return 0.0;
    }
    let grid = psi.grid();
    let norm = h.norm_spec();
    let zm = grid.z_max();
    let za = zm * a_raw(zm, grid.delta());
    let m = 2.0 * za;
    let tau = za * envelope * zm.powf(-m) * upper_tail_moment(zm, m - norm.beta2(), norm.beta1());
    let s = psi.s();
    let sn = s[s.len() - 1];
    let one = grid.one_index();
    let (mut sup, mut tail) = (0.0f64, 0.0f64);
    for (k, &z) in grid.nodes().iter().enumerate() {
        let ln_bar = sn - s[k] + tau.ln();
        if k <= one {
            sup = sup.max(ln_bar.exp());
        }
        if k >= one {
            tail = tail.max((ln_bar + norm.ln_weight(z)).exp());
        }
    }
    sup + tail
}

/// `J = J₁ + J₂` on `[0, 1]`, `J = J₃` on `[1, z_max]`, and
/// `J_app = χ_{[0,1]} ψ ∫ ξ J`, `J_res = J - J_app`.
#[derive(Debug, Clone)]
pub struct JSplit {
    pub j: Profile,
    pub j_app: Profile,
    pub j_res: Profile,
    pub j1: Profile,
    pub j2: Profile,
    pub j3: Profile,
}

pub fn split_j(h: &Profile, psi: &PsiProfile) -> Result<JSplit> {
    let j = apply_j(h, psi)?.profile;
    let grid = psi.grid();
    let one = grid.one_index();
    let z = grid.nodes();
    let zj: Vec<f64> = z.iter().zip(j.values()).map(|(a, b)| a * b).collect();
    let mass = grid.integrate(&zj, 0.0, grid.z_max())?;
    // ψ(z)∫₀^z ξ a h / ψ = ∫₀^z ξ a h e^{S(ξ)-S(z)}
    let head = weighted_head(grid, &flux(h, grid.delta()), psi.s());
    let n = z.len();
    let (mut app, mut j1, mut j2, mut j3) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        if k <= one {
            app[k] = psi.ln_value(k).exp() * mass;
            j1[k] = j.values()[k] + head[k];
            j2[k] = -head[k];
        }
        if k >= one {
            j3[k] = j.values()[k];
        }
    }
    let res: Vec<f64> = j.values().iter().zip(&app).map(|(a, b)| a - b).collect();
    Ok(JSplit {
        j_app: j.with_values(app)?,
        j_res: j.with_values(res)?,
        j1: j.with_values(j1)?,
        j2: j.with_values(j2)?,
        j3: j.with_values(j3)?,
        j,
    })
}

#[derive(Debug, Clone)]
pub struct IbarOutput {
    pub profile: Profile,
    pub params: ParamState,
    pub report: ParamSolveResult,
    /// Z-norm bound of the truncated tail of `ε J`.
    pub tail_bar: f64,
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub profile: Profile,
    pub params: ParamState,
    pub iterations: usize,
    /// `‖Φ_{n+1} - Φ_n‖_Z` per iteration.
    pub changes: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    /// `‖Φ - Ī_δ[Φ]‖_Z` at the returned profile.
    pub final_residual: f64,
    pub mu: f64,
    /// `‖Φ - Φ̂_δ‖_Z`.
    pub ball_distance: f64,
    pub in_ball: bool,
    pub param_report: ParamSolveResult,
    pub tail_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultGridMeta {
    pub delta: f64,
    pub z_max: f64,
    pub n_base: usize,
    pub node_count: usize,
    pub beta1: f64,
    pub beta2: f64,
}

/// Serialized form of a [`FixedPointResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub delta: f64,
    pub eps: f64,
    pub teps: f64,
    pub m0: f64,
    pub iterations: usize,
    pub ratios: Vec<f64>,
    pub residual: f64,
    pub grid_meta: ResultGridMeta,
}

impl FixedPointResult {
    pub fn summary(&self) -> ResultSummary {
        let GridMeta { delta, z_max, n_base, node_count } = self.profile.grid().meta();
        let norm = self.profile.norm_spec();
        ResultSummary {
            delta: self.params.delta,
            eps: self.params.eps,
            teps: self.params.teps,
            m0: self.params.m0,
            iterations: self.iterations,
            ratios: self.contraction_ratios.clone(),
            residual: self.final_residual,
            grid_meta: ResultGridMeta { delta, z_max, n_base, node_count, beta1: norm.beta1(), beta2: norm.beta2() },
        }
    }
}

/// One `δ`: grid, parameter context, `Φ̂_δ`, `Φ_LSW` and `μ_δ`.
#[derive(Debug, Clone)]
pub struct Solver {
    config: SolverConfig,
    ctx: ParamContext,
    phi_hat: Profile,
    lsw: Profile,
    mu: f64,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let grid = Arc::new(Grid::build(config.delta, config.z_max, config.n_base)?);
        let ctx = ParamContext::new(grid.clone(), config.norm)?;
        let psi = Profile::new(grid.clone(), ctx.psi_hat().values(), config.norm)?;
        let phi_hat = psi.restrict_unit();
        let lsw = Profile::from_fn(grid, config.norm, phi_lsw)?;
        let mu = match config.mu_policy {
            MuPolicy::Standard => {
                let d = config.delta;
                let ln_k1 = ctx.ln_k(GammaIndex::One);
                let gap = phi_hat.distance(&lsw)?;
                let from_k = 2.0 * (-0.5 * (d.ln() + ln_k1)).exp();
                d.powf(0.25).max(from_k).max(2.0 * gap.sqrt())
            }
        };
        Ok(Self { config, ctx, phi_hat, lsw, mu })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.ctx.grid()
    }

    pub fn context(&self) -> &ParamContext {
        &self.ctx
    }

    pub fn phi_hat(&self) -> &Profile {
        &self.phi_hat
    }

    pub fn lsw_profile(&self) -> &Profile {
        &self.lsw
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn start_profile(&self) -> &Profile {
        match self.config.start {
            StartProfile::BallCenter => &self.phi_hat,
            StartProfile::Lsw => &self.lsw,
        }
    }

    /// `ε_lead = 1/(K₁ R₀[Φ_LSW*Φ_LSW])`.
    pub fn lead_eps(&self) -> Result<f64> {
        let h = convolve(&self.lsw, &self.lsw)?;
        let r0 = r_zero(&h)?;
        Ok((-(self.ctx.ln_k(GammaIndex::One) + r0.ln())).exp())
    }

    pub fn apply_ibar(&self, phi: &Profile) -> Result<IbarOutput> {
        if phi.min_value() < 0.0 {
            return Err(Error::invalid("the fixed-point map acts on nonnegative profiles"));
        }
        let h = convolve(phi, phi)?;
        let report = self.ctx.solve_params(&h, self.config.tol_params)?;
        let psi = self.ctx.psi(report.eps, report.teps)?;
        let j = apply_j(&h, &psi)?;
        Ok(IbarOutput {
            profile: j.profile.scale(report.eps),
            params: psi.params(),
            report,
            tail_bar: report.eps * j.tail_bar,
        })
    }

    pub fn solve(&self) -> Result<FixedPointResult> {
        self.solve_from(self.start_profile().clone())
    }

    pub fn solve_from(&self, initial: Profile) -> Result<FixedPointResult> {
        let tol = self.config.tol_profile;
        let mut phi = initial;
        let mut changes: Vec<f64> = Vec::new();
        let mut ratios: Vec<f64> = Vec::new();
        for n in 1..=self.config.max_iter {
            let out = self.apply_ibar(&phi)?;
            let change = out.profile.distance(&phi)?;
            if let Some(&prev) = changes.last() {
                ratios.push(change / prev);
                let k = ratios.len();
                if k >= 2 && ratios[k - 1] > 1.0 && ratios[k - 2] > 1.0 {
                    return Err(Error::NonContraction { context: format!("profile iteration {n}"), ratios });
                }
            }
            changes.push(change);
            if change <= tol {
                // report ε[h[Φ]] for the returned Φ, not the pair that produced it
                let check = self.apply_ibar(&out.profile)?;
                let final_residual = check.profile.distance(&out.profile)?;
                let ball_distance = out.profile.distance(&self.phi_hat)?;
                return Ok(FixedPointResult {
                    in_ball: ball_distance <= self.mu * self.mu,
                    profile: out.profile,
                    params: check.params,
                    iterations: n,
                    changes,
                    contraction_ratios: ratios,
                    final_residual,
                    mu: self.mu,
                    ball_distance,
                    param_report: check.report,
                    tail_bar: check.tail_bar,
                });
            }
            phi = out.profile;
        }
        Err(Error::MaxIterExceeded {
            iterations: self.config.max_iter,
            last_change: *changes.last().unwrap_or(&f64::NAN),
        })
    }

    /// Z-norm of `Φ(z) - ε∫_z ξ a (ψ(z)/ψ(ξ)) (Φ*Φ)(ξ) dξ`, with every
    /// `(z, ξ)` cell evaluated directly rather than by the recursion.
    pub fn integral_residual(&self, phi: &Profile, params: ParamState) -> Result<f64> {
        let grid = self.grid();
        let h = convolve(phi, phi)?;
        let f = flux(&h, params.delta);
        let s = self.ctx.parts().combine(params.eps, params.teps);
        let z = grid.nodes();
        let n = z.len();
        let mut res = vec![0.0; n];
        for k in 0..n {
            let mut acc = 0.0;
            for c in k..n - 1 {
                let (e0, e1) = (s[c] - s[k], s[c + 1] - s[k]);
                if e0.max(e1) > MAX_EXPONENT {
                    return Err(Error::Overflow { exponent: e0.max(e1) });
                }
                acc += exp_linear_cell(f[c], f[c + 1], e0, e1, z[c + 1] - z[c]);
            }
            res[k] = phi.values()[k] - params.eps * acc;
        }
        Ok(phi.with_values(res)?.z_norm().total())
    }

    /// Largest relative residual of the stationary equation in differential form,
    /// `-zΦ' - 2Φ + ((-1 + λz^{1/3})Φ)' - ε(z(Φ*Φ) - Φ - m₀zΦ)`, over the nodes
    /// in `[lo, hi]`. Derivatives are three-point differences on the grid; the
    /// residual is scaled by the sum of the magnitudes of its terms.
    pub fn differential_residual(&self, phi: &Profile, params: ParamState, lo: f64, hi: f64) -> Result<f64> {
        let h = convolve(phi, phi)?;
        let z = self.grid().nodes();
        let p = phi.values();
        let lam = params.lambda;
        let fl: Vec<f64> = z.iter().zip(p).map(|(&x, &v)| (-1.0 + lam * x.cbrt()) * v).collect();
        let mut worst = 0.0f64;
        for k in 1..z.len() - 1 {
            if z[k] < lo || z[k] > hi {
                continue;
            }
            let d = |v: &[f64]| -> f64 {
                let (hm, hp) = (z[k] - z[k - 1], z[k + 1] - z[k]);
                -hp / (hm * (hm + hp)) * v[k - 1] + (hp - hm) / (hm * hp) * v[k] + hm / (hp * (hm + hp)) * v[k + 1]
            };
            let (dp, dfl) = (d(p), d(&fl));
            let coag = params.eps * (z[k] * h.values()[k] - p[k] - params.m0 * z[k] * p[k]);
            let res = -z[k] * dp - 2.0 * p[k] + dfl - coag;
            let scale = (z[k] * dp).abs()
                + 2.0 * p[k].abs()
                + dfl.abs()
                + params.eps * ((z[k] * h.values()[k]).abs() + p[k].abs() + params.m0 * z[k] * p[k].abs());
            if scale > 0.0 {
                worst = worst.max(res.abs() / scale);
            }
        }
        Ok(worst)
    }
}

pub fn solve_profile(config: SolverConfig) -> Result<FixedPointResult> {
    Solver::new(config)?.solve()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(delta: f64) -> Solver {
        Solver::new(SolverConfig { n_base: 200, ..SolverConfig::with_delta(delta) }).unwrap()
    }

    #[test]
    fn j_of_zero_is_zero() {
        let s = small(0.1);
        let zero = Profile::zeros(s.grid().clone(), NormSpec::default());
        let j = apply_j(&zero, s.context().psi_hat()).unwrap();
        assert!(j.profile.values().iter().all(|&v| v == 0.0));
        assert_eq!(j.tail_bar, 0.0);
    }

    #[test]
    fn split_reconstructs() {
        let s = small(0.1);
        let h = Profile::from_fn(s.grid().clone(), NormSpec::default(), |z| (-3.0 * z).exp() * z).unwrap();
        let psi = s.context().psi(1e-3, 2e-3).unwrap();
        let sp = split_j(&h, &psi).unwrap();
        let one = s.grid().one_index();
        for k in 0..s.grid().len() {
            let j = sp.j.values()[k];
            assert!((sp.j_app.values()[k] + sp.j_res.values()[k] - j).abs() <= 1e-14 * j.abs().max(1e-300));
            if k <= one {
                assert!((sp.j1.values()[k] + sp.j2.values()[k] - j).abs() <= 1e-12 * j.abs().max(1e-12));
            }
            if k > one {
                assert_eq!(sp.j_res.values()[k], sp.j3.values()[k]);
            }
        }
    }

    #[test]
    fn config_validation() {
        let c = SolverConfig { tol_profile: 0.0, ..SolverConfig::default() };
        assert!(c.validate().is_err());
        let c = SolverConfig { max_iter: 0, ..SolverConfig::default() };
        assert!(c.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn converges_at_moderate_delta() {
        let s = small(0.1);
        let r = s.solve().unwrap();
        assert!(r.final_residual <= 1e-8);
        assert!(r.contraction_ratios.iter().all(|&q| q < 1.0));
        assert!(r.profile.min_value() >= 0.0);
        assert!((r.profile.moment(1.0) - 1.0).abs() < 1e-9);
        assert!((r.profile.moment(0.0) - r.params.m0).abs() < 1e-9 * r.params.m0);
    }
}
