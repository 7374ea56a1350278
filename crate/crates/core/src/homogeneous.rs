//! The normalized homogeneous solution `ψ = N·exp(-S)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernels::{build_log_weight, ExponentParts, LogWeight, ParamState};
use crate::quadrature::Grid;

/// Largest exponent that still exponentiates to a finite `f64`.
pub const MAX_EXPONENT: f64 = 709.78;

/// `ψ` carried as `(S, log N)`; `ψ(z) = exp(log N - S(z))`.
#[derive(Debug, Clone)]
pub struct PsiProfile {
    log_weight: LogWeight,
    log_norm: f64,
}

/// `log N` such that `∫₀¹ z·N·e^{-s} dz = 1` under the trapezoid rule,
/// summed after shifting by the largest exponent.
pub fn log_normalizer(grid: &Grid, s: &[f64]) -> f64 {
    let one = grid.one_index();
    let z = grid.nodes();
    let mut w = grid.weights()[..=one].to_vec();
    // the weight of the node z = 1 only counts the cell to its left
    w[one] = 0.5 * (z[one] - z[one - 1]);
    let shift = s[..=one].iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = (0..=one).map(|k| w[k] * z[k] * (-s[k] - shift).exp()).sum();
    -(shift + sum.ln())
}

pub fn compute_psi(params: ParamState, grid: &Arc<Grid>) -> Result<PsiProfile> {
    Ok(PsiProfile::new(build_log_weight(params, grid)?))
}

impl PsiProfile {
    pub fn new(log_weight: LogWeight) -> Self {
        let log_norm = log_normalizer(log_weight.grid(), log_weight.s());
        Self { log_weight, log_norm }
    }

    pub fn from_parts(parts: &ExponentParts, params: ParamState) -> Result<Self> {
        Ok(Self::new(LogWeight::from_parts(parts, params)?))
    }

    pub fn log_weight(&self) -> &LogWeight {
        &self.log_weight
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.log_weight.grid()
    }

    pub fn params(&self) -> ParamState {
        self.log_weight.params()
    }

    pub fn s(&self) -> &[f64] {
        self.log_weight.s()
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn ln_value(&self, k: usize) -> f64 {
        self.log_norm - self.s()[k]
    }

    /// Node values of `ψ`; entries underflow to 0 deep behind the layer.
    pub fn values(&self) -> Vec<f64> {
        self.s().iter().map(|s| (self.log_norm - s).exp()).collect()
    }

    pub fn ln_at(&self, z: f64) -> f64 {
        self.log_norm - self.log_weight.s_at(z)
    }

    /// `ψ(z)/ψ(ξ) = exp(S(ξ) - S(z))`.
    pub fn psi_ratio(&self, z: f64, xi: f64) -> Result<f64> {
        let zm = self.grid().z_max();
        if !(0.0..=zm).contains(&z) || !(0.0..=zm).contains(&xi) {
            return Err(Error::invalid(format!("psi_ratio arguments outside [0, {zm}]")));
        }
        if z == xi {
            return Ok(1.0);
        }
        let e = self.log_weight.s_at(xi) - self.log_weight.s_at(z);
        if e > MAX_EXPONENT {
            return Err(Error::Overflow { exponent: e });
        }
        Ok(e.exp())
    }
}
