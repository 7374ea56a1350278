//! Grid-sampled profiles, the weighted norm and the symmetric convolution.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{lerp, Grid};

/// Exponents of the tail weight `e^{β₁z} z^{β₂}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    beta1: f64,
    beta2: f64,
}

impl NormSpec {
    pub fn new(beta1: f64, beta2: f64) -> Result<Self> {
        if !(beta1 > 0.0 && beta1.is_finite()) {
            return Err(Error::invalid(format!("beta1 must be positive, got {beta1}")));
        }
        if !(beta2 > 1.0 && beta2.is_finite()) {
            return Err(Error::invalid(format!("beta2 must exceed 1, got {beta2}")));
        }
        Ok(Self { beta1, beta2 })
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn beta2(&self) -> f64 {
        self.beta2
    }

    pub fn ln_weight(&self, z: f64) -> f64 {
        self.beta1 * z + self.beta2 * z.ln()
    }

    pub fn weight(&self, z: f64) -> f64 {
        self.ln_weight(z).exp()
    }
}

impl Default for NormSpec {
    fn default() -> Self {
        Self { beta1: 1.0, beta2: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZNorm {
    pub sup_part: f64,
    pub tail_part: f64,
}

impl ZNorm {
    pub fn total(&self) -> f64 {
        self.sup_part + self.tail_part
    }
}

/// Z-norm of node values: sup over `[0, 1]` plus weighted sup over `[1, z_max]`.
pub fn z_norm_of(grid: &Grid, norm: &NormSpec, values: &[f64]) -> ZNorm {
    let one = grid.one_index();
    let sup_part = values[..=one].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tail_part =
        grid.nodes()[one..].iter().zip(&values[one..]).fold(0.0f64, |m, (&z, v)| m.max(v.abs() * norm.weight(z)));
    ZNorm { sup_part, tail_part }
}

#[derive(Debug, Clone)]
pub struct Profile {
    grid: Arc<Grid>,
    values: Vec<f64>,
    norm: NormSpec,
}

#[derive(Serialize, Deserialize)]
struct ProfileJson {
    z: Vec<f64>,
    value: Vec<f64>,
}

impl Profile {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>, norm: NormSpec) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("profile value {v} is not finite")));
        }
        Ok(Self { grid, values, norm })
    }

    pub fn from_fn(grid: Arc<Grid>, norm: NormSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&z| f(z)).collect();
        Self::new(grid, values, norm)
    }

    pub fn zeros(grid: Arc<Grid>, norm: NormSpec) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values, norm }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm_spec(&self) -> NormSpec {
        self.norm
    }

    pub fn same_grid(&self, other: &Profile) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.nodes() == other.grid.nodes()
    }

    fn check_grid(&self, other: &Profile) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), values, self.norm)
    }

    pub fn z_norm(&self) -> ZNorm {
        z_norm_of(&self.grid, &self.norm, &self.values)
    }

    /// Z-norm of `self - other`.
    pub fn distance(&self, other: &Profile) -> Result<f64> {
        self.check_grid(other)?;
        let diff: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(z_norm_of(&self.grid, &self.norm, &diff).total())
    }

    pub fn linear_combination(&self, a: f64, other: &Profile, b: f64) -> Result<Self> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        self.with_values(values)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| a * v).collect(), norm: self.norm }
    }

    /// Zero beyond `z = 1`.
    pub fn restrict_unit(&self) -> Self {
        let one = self.grid.one_index();
        let values = self.values.iter().enumerate().map(|(k, &v)| if k <= one { v } else { 0.0 }).collect();
        Self { grid: self.grid.clone(), values, norm: self.norm }
    }

    pub fn interp(&self, z: f64) -> f64 {
        self.grid.interp(&self.values, z)
    }

    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        self.grid.integrate(&self.values, a, b)
    }

    /// `∫ z^k Φ` over the grid.
    pub fn moment(&self, k: f64) -> f64 {
        let v: Vec<f64> = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&z, &p)| if k == 0.0 { p } else { z.powf(k) * p })
            .collect();
        self.grid.integrate(&v, 0.0, self.grid.z_max()).expect("full-range integral")
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `z,value` rows; `{:e}` prints the shortest round-tripping form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["z", "value"])?;
        for (z, v) in self.grid.nodes().iter().zip(&self.values) {
            w.write_record([format!("{z:e}"), format!("{v:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let doc = ProfileJson { z: self.grid.nodes().to_vec(), value: self.values.clone() };
        serde_json::to_writer_pretty(out, &doc)?;
        Ok(())
    }

    /// Reads `z,value` rows; the nodes must coincide with `grid`.
    pub fn read_csv<R: Read>(input: R, grid: Arc<Grid>, norm: NormSpec) -> Result<Self> {
        let (nodes, values) = read_csv_columns(input)?;
        if nodes.len() != grid.len() || nodes.iter().zip(grid.nodes()).any(|(a, b)| a != b) {
            return Err(Error::GridMismatch);
        }
        Self::new(grid, values, norm)
    }
}

/// The two columns of a `z,value` CSV file.
pub fn read_csv_columns<R: Read>(input: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "z" || &headers[1] != "value" {
        return Err(Error::invalid("profile CSV header must be `z,value`"));
    }
    let (mut nodes, mut values) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::invalid(format!("bad number {s:?}: {e}")));
        nodes.push(parse(&rec[0])?);
        values.push(parse(&rec[1])?);
    }
    Ok((nodes, values))
}

/// `(Φ₁*Φ₂)(z) = ½∫₀^z Φ₁(z-y)Φ₂(y) dy`, evaluated as
/// `½∫₀^{z/2} [Φ₁(z-y)Φ₂(y) + Φ₂(z-y)Φ₁(y)] dy` by the trapezoid rule on the
/// nodes below `z/2` plus the partial cell ending at `z/2`. The integrand is
/// symmetric, so the result is symmetric in its arguments exactly.
pub fn convolve(phi1: &Profile, phi2: &Profile) -> Result<Profile> {
    phi1.check_grid(phi2)?;
    let grid = phi1.grid.clone();
    let z = grid.nodes();
    let (p, q) = (&phi1.values, &phi2.values);
    let n = z.len();
    let mut out = vec![0.0; n];
    for k in 1..n {
        let zk = z[k];
        let half = 0.5 * zk;
        // `j` walks y up the nodes, `c` tracks the cell of zk - y walking down
        let mut c = k - 1;
        let mut sum = 0.0;
        let mut prev_y = 0.0;
        let mut prev_g = p[k] * q[0] + q[k] * p[0];
        let mut j = 1;
        while j < n && z[j] <= half {
            let y = z[j];
            let r = zk - y;
            while c > 0 && z[c] > r {
                c -= 1;
            }
            let p_r = lerp(z[c], z[c + 1], p[c], p[c + 1], r);
            let q_r = lerp(z[c], z[c + 1], q[c], q[c + 1], r);
            let g = p_r * q[j] + q_r * p[j];
            sum += 0.5 * (y - prev_y) * (prev_g + g);
            prev_y = y;
            prev_g = g;
            j += 1;
        }
        if half > prev_y {
            let m = j - 1;
            let p_h = lerp(z[m], z[m + 1], p[m], p[m + 1], half);
            let q_h = lerp(z[m], z[m + 1], q[m], q[m + 1], half);
            let g = 2.0 * p_h * q_h;
            sum += 0.5 * (half - prev_y) * (prev_g + g);
        }
        out[k] = 0.5 * sum;
    }
    Profile::new(grid, out, phi1.norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<Grid> {
        Arc::new(Grid::build(0.04, 10.0, 100).unwrap())
    }

    #[test]
    fn norm_spec_validation() {
        assert!(NormSpec::new(0.0, 2.0).is_err());
        assert!(NormSpec::new(1.0, 1.0).is_err());
        assert!(NormSpec::new(1.0, 1.5).is_ok());
    }

    #[test]
    fn zero_profile_norm() {
        let p = Profile::zeros(grid(), NormSpec::default());
        assert_eq!(p.z_norm(), ZNorm { sup_part: 0.0, tail_part: 0.0 });
    }

    #[test]
    fn convolution_vanishes_at_origin_and_is_symmetric() {
        let g = grid();
        let a = Profile::from_fn(g.clone(), NormSpec::default(), |z| (-2.0 * z).exp()).unwrap();
        let b = Profile::from_fn(g.clone(), NormSpec::default(), |z| z * (-z).exp() + 0.1).unwrap();
        let ab = convolve(&a, &b).unwrap();
        let ba = convolve(&b, &a).unwrap();
        assert_eq!(ab.values()[0], 0.0);
        assert_eq!(ab.values(), ba.values());
        assert!(ab.min_value() >= 0.0);
    }

    #[test]
    fn convolution_of_constants() {
        // 1 * 1 = z/2 exactly under linear interpolation
        let g = grid();
        let one = Profile::from_fn(g.clone(), NormSpec::default(), |_| 1.0).unwrap();
        let c = convolve(&one, &one).unwrap();
        for (z, v) in g.nodes().iter().zip(c.values()) {
            assert!((v - 0.5 * z).abs() < 1e-13 * z.max(1.0));
        }
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = Profile::zeros(grid(), NormSpec::default());
        let b = Profile::zeros(Arc::new(Grid::build(0.1, 10.0, 100).unwrap()), NormSpec::default());
        assert!(matches!(convolve(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn csv_round_trip() {
        let g = grid();
        let p = Profile::from_fn(g.clone(), NormSpec::default(), |z| (-z).exp() / 3.0).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = Profile::read_csv(buf.as_slice(), g, NormSpec::default()).unwrap();
        assert_eq!(p.values(), q.values());
    }
}
