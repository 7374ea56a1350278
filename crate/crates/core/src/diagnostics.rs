//! Moments, tail fits, closed-form residuals and the `δ`-sweep.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{lambda_lsw, law_constant, phi_lsw};
use crate::profiles::Profile;
use crate::solver::{Solver, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentOrder {
    Zero,
    Third,
    One,
}

impl MomentOrder {
    pub fn exponent(self) -> f64 {
        match self {
            MomentOrder::Zero => 0.0,
            MomentOrder::Third => 1.0 / 3.0,
            MomentOrder::One => 1.0,
        }
    }
}

/// `∫ z^k Φ` over the truncated domain.
pub fn moment(phi: &Profile, k: MomentOrder) -> f64 {
    phi.moment(k.exponent())
}

/// `m₀ / m_{1/3}`; for a stationary profile this equals `λ_LSW - δ`.
pub fn mean_field(phi: &Profile) -> f64 {
    moment(phi, MomentOrder::Zero) / moment(phi, MomentOrder::Third)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub window: (f64, f64),
    pub rate: f64,
    pub power: f64,
    pub offset: f64,
    pub r_squared: f64,
    pub nodes: usize,
}

/// Least-squares fit of `ln Φ(z) ≈ c₀ - rate·z - power·ln z` on the window.
pub fn tail_fit(phi: &Profile, window: (f64, f64)) -> Result<TailFit> {
    let (lo, hi) = window;
    if !(lo >= 1.5 && hi > lo) {
        return Err(Error::invalid(format!("tail window must satisfy 1.5 <= lo < hi, got {window:?}")));
    }
    let pts: Vec<(f64, f64)> = phi
        .grid()
        .nodes()
        .iter()
        .zip(phi.values())
        .filter(|(&z, _)| z >= lo && z <= hi)
        .map(|(&z, &v)| (z, v))
        .collect();
    if pts.len() < 10 {
        return Err(Error::invalid(format!("tail window holds {} nodes, need at least 10", pts.len())));
    }
    if let Some(&(z, _)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NonPositiveTail { z });
    }
    let a = DMatrix::from_fn(pts.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => -pts[i].0,
        _ => -pts[i].0.ln(),
    });
    let y = DVector::from_iterator(pts.len(), pts.iter().map(|(_, v)| v.ln()));
    let coef = a.clone().svd(true, true).solve(&y, 1e-14).map_err(|e| Error::invalid(e.to_string()))?;
    let fitted = &a * &coef;
    let mean = y.mean();
    let ss_res: f64 = (&y - &fitted).iter().map(|r| r * r).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(TailFit { window, offset: coef[0], rate: coef[1], power: coef[2], r_squared, nodes: pts.len() })
}

/// Largest relative residual of `-zΦ' - 2Φ + ((-1 + λ_LSW z^{1/3})Φ)' = 0` for
/// the closed-form `Φ_LSW` at the given points. Derivatives use a five-point
/// central stencil with a step that shrinks towards both `0` and `1/2`.
pub fn lsw_stationary_residual(points: &[f64]) -> f64 {
    let lam = lambda_lsw();
    let flux = |z: f64| (-1.0 + lam * z.cbrt()) * phi_lsw(z);
    let deriv = |f: &dyn Fn(f64) -> f64, z: f64, h: f64| {
        (f(z - 2.0 * h) - 8.0 * f(z - h) + 8.0 * f(z + h) - f(z + 2.0 * h)) / (12.0 * h)
    };
    points
        .iter()
        .map(|&z| {
            let gap = 0.5 - z;
            let h = 2e-3 * z.min(gap * gap);
            let dp = deriv(&phi_lsw, z, h);
            let df = deriv(&flux, z, h);
            let p = phi_lsw(z);
            let res = -z * dp - 2.0 * p + df;
            res.abs() / ((z * dp).abs() + 2.0 * p.abs() + df.abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub eps: f64,
    pub teps: f64,
    pub log_eps: f64,
    /// `δ (ln ε)²`.
    pub law_value: f64,
    /// `1/(K₁ R₀[Φ_LSW*Φ_LSW])`.
    pub lead_eps: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub delta: f64,
    pub row: Option<SweepRow>,
    pub error: Option<String>,
}

pub fn sweep_row(config: SolverConfig) -> Result<SweepRow> {
    let solver = Solver::new(config)?;
    let r = solver.solve()?;
    let log_eps = r.params.eps.ln();
    Ok(SweepRow {
        delta: config.delta,
        eps: r.params.eps,
        teps: r.params.teps,
        log_eps,
        law_value: config.delta * log_eps * log_eps,
        lead_eps: solver.lead_eps()?,
        iterations: r.iterations,
        residual: r.final_residual,
    })
}

/// One full solve per `δ`; rows run in parallel, output keeps input order
/// and a failed row is recorded without stopping the others.
pub fn sweep_scaling(deltas: &[f64], base: SolverConfig) -> Vec<SweepRecord> {
    deltas
        .par_iter()
        .map(|&delta| match sweep_row(SolverConfig { delta, ..base }) {
            Ok(row) => SweepRecord { delta, row: Some(row), error: None },
            Err(e) => SweepRecord { delta, row: None, error: Some(e.to_string()) },
        })
        .collect()
}

/// Extrapolates `law_value` to `δ = 0` assuming a linear correction in `√δ`,
/// from the two smallest `δ` among the rows.
pub fn richardson_sqrt(rows: &[SweepRow]) -> Option<f64> {
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    let (a, b) = (sorted.first()?, sorted.get(1)?);
    let (sa, sb) = (a.delta.sqrt(), b.delta.sqrt());
    Some((sb * a.law_value - sa * b.law_value) / (sb - sa))
}

/// `|law_value - 3π²2^{-2/3}|` per row.
pub fn law_distance(row: &SweepRow) -> f64 {
    (row.law_value - law_constant()).abs()
}

pub const SWEEP_HEADER: [&str; 8] =
    ["delta", "eps", "teps", "log_eps", "law_value", "lead_eps", "iterations", "residual"];

/// Failed rows keep their `δ` and leave the other columns empty.
pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for rec in records {
        let fields: Vec<String> = match &rec.row {
            Some(r) => vec![
                format!("{:e}", r.delta),
                format!("{:e}", r.eps),
                format!("{:e}", r.teps),
                format!("{:e}", r.log_eps),
                format!("{:e}", r.law_value),
                format!("{:e}", r.lead_eps),
                r.iterations.to_string(),
                format!("{:e}", r.residual),
            ],
            None => std::iter::once(format!("{:e}", rec.delta)).chain(std::iter::repeat_n(String::new(), 7)).collect(),
        };
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_json<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, records)?;
    Ok(())
}
