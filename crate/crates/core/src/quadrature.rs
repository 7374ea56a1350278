//! Graded mesh on `[0, z_max]` and the integration rules built on it.
//!
//! The node density is the derivative of
//! `u(z) = n·z^{1/3} + (n/2)·(atan((z - 1/2)/w) + atan(1/(2w))) + (n/4)·z`
//! with `w = sqrt(delta)`: the cube root grades the origin, the arctangent
//! concentrates nodes in the layer at `z = 1/2` and the linear term covers the tail.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LAYER_CENTER: f64 = 0.5;

/// 8-point Gauss–Legendre abscissae (positive half) and weights on `[-1, 1]`.
const GL_X: [f64; 4] =
    [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL_W: [f64; 4] =
    [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub delta: f64,
    pub z_max: f64,
    pub n_base: usize,
    pub node_count: usize,
}

#[derive(Debug, Clone, Copy)]
struct GradingMap {
    c1: f64,
    c2: f64,
    c3: f64,
    w: f64,
}

impl GradingMap {
    fn new(delta: f64, n_base: usize) -> Self {
        let n = n_base as f64;
        Self { c1: n, c2: n / 2.0, c3: n / 4.0, w: delta.sqrt() }
    }

    fn eval(&self, z: f64) -> f64 {
        let layer = ((z - LAYER_CENTER) / self.w).atan() + (LAYER_CENTER / self.w).atan();
        self.c1 * z.cbrt() + self.c2 * layer + self.c3 * z
    }

    fn invert(&self, target: f64, z_max: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, z_max);
        for _ in 0..90 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Immutable quadrature mesh. Always contains the node `z = 1` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    delta: f64,
    n_base: usize,
    one: usize,
}

impl Grid {
    pub fn build(delta: f64, z_max: f64, n_base: usize) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("delta must be positive, got {delta}")));
        }
        if !(z_max >= 1.0 && z_max.is_finite()) {
            return Err(Error::invalid(format!("z_max must be at least 1, got {z_max}")));
        }
        if n_base < 64 {
            return Err(Error::invalid(format!("n_base must be at least 64, got {n_base}")));
        }
        let map = GradingMap::new(delta, n_base);
        let total = map.eval(z_max);
        let cells = (total.ceil() as usize).max(2);
        let step = total / cells as f64;
        let mut nodes = Vec::with_capacity(cells + 1);
        nodes.push(0.0);
        for j in 1..cells {
            nodes.push(map.invert(j as f64 * step, z_max));
        }
        nodes.push(z_max);

        let one = if z_max == 1.0 {
            cells
        } else {
            (1..cells)
                .min_by(|&i, &j| (nodes[i] - 1.0).abs().total_cmp(&(nodes[j] - 1.0).abs()))
                .expect("grid has interior nodes")
        };
        nodes[one] = 1.0;
        Self::assemble(nodes, delta, n_base)
    }

    /// Grid on caller-supplied nodes; they must start at 0, increase strictly and contain 1.
    pub fn from_nodes(nodes: Vec<f64>, delta: f64) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::invalid("nodes must start at 0 and have at least two entries"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::invalid("nodes must be finite and strictly increasing"));
        }
        if !(delta > 0.0) {
            return Err(Error::invalid("delta must be positive"));
        }
        Self::assemble(nodes, delta, 0)
    }

    fn assemble(nodes: Vec<f64>, delta: f64, n_base: usize) -> Result<Self> {
        let one =
            nodes.iter().position(|&z| z == 1.0).ok_or_else(|| Error::invalid("grid must contain the node z = 1"))?;
        let n = nodes.len();
        let mut weights = vec![0.0; n];
        for k in 0..n - 1 {
            let h = nodes[k + 1] - nodes[k];
            weights[k] += 0.5 * h;
            weights[k + 1] += 0.5 * h;
        }
        Ok(Self { nodes, weights, delta, n_base, one })
    }

    /// Upper bound on the node count produced by [`Grid::build`].
    pub fn max_nodes(n_base: usize, z_max: f64) -> usize {
        let n = n_base as f64;
        (n * (z_max.cbrt() + std::f64::consts::PI / 2.0 + z_max / 4.0)).ceil() as usize + 2
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn z_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn n_base(&self) -> usize {
        self.n_base
    }

    /// Index of the node `z = 1`.
    pub fn one_index(&self) -> usize {
        self.one
    }

    pub fn layer_center(&self) -> f64 {
        LAYER_CENTER
    }

    pub fn layer_width(&self) -> f64 {
        self.delta.sqrt()
    }

    pub fn meta(&self) -> GridMeta {
        GridMeta { delta: self.delta, z_max: self.z_max(), n_base: self.n_base, node_count: self.len() }
    }

    /// Index `k` of the cell `[z_k, z_{k+1}]` containing `z`, clamped to the mesh.
    pub fn locate(&self, z: f64) -> usize {
        let k = self.nodes.partition_point(|&x| x <= z);
        k.saturating_sub(1).min(self.nodes.len() - 2)
    }

    /// Piecewise-linear interpolation of node values; zero outside `[0, z_max]`.
    pub fn interp(&self, values: &[f64], z: f64) -> f64 {
        if z < 0.0 || z > self.z_max() {
            return 0.0;
        }
        let k = self.locate(z);
        lerp(self.nodes[k], self.nodes[k + 1], values[k], values[k + 1], z)
    }

    /// Trapezoid integral of the piecewise-linear interpolant over `[a, b]`.
    pub fn integrate(&self, values: &[f64], a: f64, b: f64) -> Result<f64> {
        self.check_interval(a, b)?;
        if values.len() != self.len() {
            return Err(Error::GridMismatch);
        }
        if a == b {
            return Ok(0.0);
        }
        let z = &self.nodes;
        let (i, j) = (self.locate(a), self.locate(b));
        let va = lerp(z[i], z[i + 1], values[i], values[i + 1], a);
        let vb = lerp(z[j], z[j + 1], values[j], values[j + 1], b);
        if i == j {
            return Ok(0.5 * (b - a) * (va + vb));
        }
        let mut sum = 0.5 * (z[i + 1] - a) * (va + values[i + 1]);
        for k in i + 1..j {
            sum += 0.5 * (z[k + 1] - z[k]) * (values[k] + values[k + 1]);
        }
        sum += 0.5 * (b - z[j]) * (values[j] + vb);
        Ok(sum)
    }

    /// Integral of a closed-form integrand: 8-point Gauss–Legendre per cell
    /// in `x = z^{1/3}`, which absorbs `z^{-2/3}` at the origin.
    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
        self.check_interval(a, b)?;
        if a == b {
            return Ok(0.0);
        }
        let (i, j) = (self.locate(a), self.locate(b));
        let mut sum = 0.0;
        for k in i..=j {
            let lo = self.nodes[k].max(a);
            let hi = self.nodes[k + 1].min(b);
            if hi > lo {
                sum += gauss_cube(&f, lo, hi);
            }
        }
        Ok(sum)
    }

    /// Per-cell integrals `∫_{z_k}^{z_{k+1}} g(x) dx` of an integrand given in
    /// the cube-root variable (`g` already carries the Jacobian `3x²`).
    pub fn cell_integrals_x(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.windows(2).map(|w| gauss_x(&g, w[0].cbrt(), w[1].cbrt())).collect()
    }

    /// Cumulative version of [`Grid::cell_integrals_x`], starting at 0.
    pub fn cumulative_x(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.push(0.0);
        let mut acc = 0.0;
        for c in self.cell_integrals_x(g) {
            acc += c;
            out.push(acc);
        }
        out
    }

    fn check_interval(&self, a: f64, b: f64) -> Result<()> {
        if !(a <= b) {
            return Err(Error::invalid(format!("integration bounds out of order: {a} > {b}")));
        }
        if a < 0.0 || b > self.z_max() {
            return Err(Error::invalid(format!("[{a}, {b}] leaves the grid")));
        }
        Ok(())
    }
}

pub(crate) fn lerp(x0: f64, x1: f64, y0: f64, y1: f64, x: f64) -> f64 {
    let t = (x - x0) / (x1 - x0);
    y0 + (y1 - y0) * t
}

/// Gauss–Legendre on `[xl, xr]` for an integrand in `x`.
pub fn gauss_x(g: impl Fn(f64) -> f64, xl: f64, xr: f64) -> f64 {
    let half = 0.5 * (xr - xl);
    let mid = 0.5 * (xr + xl);
    let mut sum = 0.0;
    for (&x, &w) in GL_X.iter().zip(GL_W.iter()) {
        sum += w * (g(mid - half * x) + g(mid + half * x));
    }
    half * sum
}

/// `∫_a^b f(z) dz` computed as `∫ f(x³)·3x² dx` over `[a^{1/3}, b^{1/3}]`.
pub fn gauss_cube(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    gauss_x(|x| f(x * x * x) * 3.0 * x * x, a.cbrt(), b.cbrt())
}

/// `∫_0^1 e^{-x s} ds` for `x ≥ 0`.
fn expint_0(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else if x < 0.5 {
        let (mut term, mut sum, mut n) = (1.0f64, 1.0, 1.0);
        while term.abs() > 1e-18 {
            term *= -x / (n + 1.0);
            sum += term;
            n += 1.0;
        }
        sum
    } else {
        -(-x).exp_m1() / x
    }
}

/// `∫_0^1 s·e^{-x s} ds` for `x ≥ 0`.
fn expint_1(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else if x < 0.5 {
        // sum_n (-x)^n / (n! (n + 2))
        let (mut fact, mut sum, mut n) = (1.0f64, 0.5, 1.0);
        loop {
            fact *= -x / n;
            let term = fact / (n + 2.0);
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
            n += 1.0;
        }
        sum
    } else {
        (-(-x).exp_m1() - x * (-x).exp()) / (x * x)
    }
}

/// `h·∫_0^1 (f0 + (f1-f0)t)·exp(e0 + (e1-e0)t) dt`: exact for a linear factor
/// times the exponential of a linear exponent. Always factors out the larger
/// endpoint exponent, so only non-positive arguments reach `exp`.
pub fn exp_linear_cell(f0: f64, f1: f64, e0: f64, e1: f64, h: f64) -> f64 {
    if e0 == f64::NEG_INFINITY || e1 == f64::NEG_INFINITY {
        return 0.5 * h * (f0 * e0.exp() + f1 * e1.exp());
    }
    let d = e1 - e0;
    if d <= 0.0 {
        h * e0.exp() * (f0 * expint_0(-d) + (f1 - f0) * expint_1(-d))
    } else {
        h * e1.exp() * (f1 * expint_0(d) - (f1 - f0) * expint_1(d))
    }
}

/// `T_k = ∫_{z_k}^{z_max} f(ξ)·exp(s(ξ) - s(z_k)) dξ` by backward recursion.
pub fn weighted_tail(grid: &Grid, f: &[f64], s: &[f64]) -> Vec<f64> {
    let z = grid.nodes();
    let n = z.len();
    let mut out = vec![0.0; n];
    for k in (0..n - 1).rev() {
        let d = s[k + 1] - s[k];
        let cell = exp_linear_cell(f[k], f[k + 1], 0.0, d, z[k + 1] - z[k]);
        out[k] = d.exp() * out[k + 1] + cell;
    }
    out
}

/// `H_k = ∫_0^{z_k} f(ξ)·exp(s(ξ) - s(z_k)) dξ` by forward recursion.
pub fn weighted_head(grid: &Grid, f: &[f64], s: &[f64]) -> Vec<f64> {
    let z = grid.nodes();
    let n = z.len();
    let mut out = vec![0.0; n];
    for k in 0..n - 1 {
        let d = s[k + 1] - s[k];
        let cell = exp_linear_cell(f[k], f[k + 1], -d, 0.0, z[k + 1] - z[k]);
        out[k + 1] = (-d).exp() * out[k] + cell;
    }
    out
}

/// Logarithm of [`weighted_head`] for `f ≥ 0`, accumulated with log-sum-exp.
pub fn ln_weighted_head(grid: &Grid, f: &[f64], s: &[f64]) -> Vec<f64> {
    let z = grid.nodes();
    let n = z.len();
    let mut out = vec![f64::NEG_INFINITY; n];
    for k in 0..n - 1 {
        let d = s[k + 1] - s[k];
        let cell = exp_linear_cell(f[k], f[k + 1], -d, 0.0, z[k + 1] - z[k]);
        out[k + 1] = log_add_exp(out[k] - d, cell.ln());
    }
    out
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `∫_l^∞ ξ^m e^{-βξ} dξ` for `l > 0`, `β > 0`.
pub fn upper_tail_moment(l: f64, m: f64, beta: f64) -> f64 {
    let g = |x: f64| m * x.ln() - beta * x;
    let peak = if m > 0.0 { (m / beta).max(l) } else { l };
    let top = g(peak);
    let mut upper = peak + 1.0 / beta;
    while g(upper) > top - 60.0 {
        upper += (upper - l).max(1.0 / beta);
    }
    let panels = 400;
    let h = (upper - l) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = l + i as f64 * h;
            gauss_x(|x| g(x).exp(), lo, lo + h)
        })
        .sum()
}
