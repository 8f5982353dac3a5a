//! Distribution function of the difference of two scaled centred gammas,
//! approximated by a Riemann sum over the positive shock, and the
//! transitional log likelihood built from it.

use crate::blocked::BlockWidth;
use crate::error::{Error, Result};

use super::incgamma::inc_gamma_block_pair;
use super::BegeParams;

pub const DEFAULT_NODES: usize = 100;
pub const SHAPE_FLOOR: f64 = 1e-6;
pub const DENSITY_FLOOR: f64 = 1e-300;
pub const FD_STEP: f64 = 1e-4;

/// Nodes `omega_j = omega0 + j * delta`, `j = 0..=nodes`, for the positive
/// shock scaled by `sigma_p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: usize,
    pub omega0: f64,
    pub delta: f64,
}

impl QuadratureGrid {
    /// Grid from just above the lower support bound `-p sigma_p` up to ten
    /// standard deviations.
    pub fn new(shape: f64, sigma: f64, nodes: usize) -> Result<Self> {
        if nodes < 2 {
            return Err(Error::InvalidGrid(format!("{nodes} nodes, need at least 2")));
        }
        let omega0 = 1e-4 - shape * sigma;
        let delta = (10.0 * sigma * shape.sqrt() - omega0) / (nodes as f64 - 1.0);
        Self::explicit(nodes, omega0, delta)
    }

    pub fn explicit(nodes: usize, omega0: f64, delta: f64) -> Result<Self> {
        if nodes < 2 || !(delta > 0.0) || !delta.is_finite() || !omega0.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "nodes {nodes}, start {omega0}, spacing {delta}"
            )));
        }
        Ok(QuadratureGrid { nodes, omega0, delta })
    }

    pub fn node(&self, j: usize) -> f64 {
        self.omega0 + j as f64 * self.delta
    }
}

/// Reusable buffers for repeated CDF evaluations with one block width.
#[derive(Clone, Debug)]
pub struct CdfWorkspace {
    width: BlockWidth,
    /// Increments of the positive-shock CDF between consecutive nodes.
    mass: Vec<f64>,
    args: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl CdfWorkspace {
    pub fn new(width: BlockWidth) -> Self {
        CdfWorkspace { width, mass: Vec::new(), args: Vec::new(), lower: Vec::new(), upper: Vec::new() }
    }

    /// `P` at `args`, evaluated in blocks of the workspace width.
    fn eval(&mut self, shape: f64) -> Result<()> {
        let n = self.args.len();
        self.lower.resize(n, 0.0);
        self.upper.resize(n, 0.0);
        let v = self.width.get();
        let mut s = 0;
        while s < n {
            let e = (s + v).min(n);
            inc_gamma_block_pair(shape, &self.args[s..e], &mut self.lower[s..e], &mut self.upper[s..e])?;
            s = e;
        }
        Ok(())
    }

    /// Positive-shock masses per grid cell for shape `p`, scale `sigma_p`.
    pub fn prepare(&mut self, sigma_p: f64, p: f64, grid: &QuadratureGrid) -> Result<()> {
        self.args.clear();
        self.args.extend((0..=grid.nodes).map(|j| ((grid.node(j) + p * sigma_p) / sigma_p).max(0.0)));
        self.eval(p)?;
        self.mass.clear();
        self.mass.extend(self.lower.windows(2).map(|w| (w[1] - w[0]).max(0.0)));
        Ok(())
    }

    /// CDF at `u` using the masses from the last [`prepare`](Self::prepare).
    pub fn cdf(&mut self, u: f64, sigma_n: f64, n: f64, grid: &QuadratureGrid) -> Result<f64> {
        self.args.clear();
        self.args.extend((0..grid.nodes).map(|j| ((grid.node(j) - u + n * sigma_n) / sigma_n).max(0.0)));
        self.eval(n)?;
        let f: f64 = self.upper.iter().zip(&self.mass).map(|(s, m)| s * m).sum();
        Ok(f.clamp(0.0, 1.0))
    }
}

/// CDF of `sigma_p g_p - sigma_n g_n` at `u`, with `g_p`, `g_n` centred
/// gammas of shapes `p_prev`, `n_prev`.
pub fn bege_cdf(
    u: f64,
    sigma_p: f64,
    sigma_n: f64,
    p_prev: f64,
    n_prev: f64,
    grid: &QuadratureGrid,
    width: BlockWidth,
) -> Result<f64> {
    if !(p_prev > 0.0 && n_prev > 0.0 && sigma_p > 0.0 && sigma_n > 0.0) {
        return Err(Error::InvalidArgument("shapes and scales must be positive".into()));
    }
    let mut ws = CdfWorkspace::new(width);
    ws.prepare(sigma_p, p_prev, grid)?;
    ws.cdf(u, sigma_n, n_prev, grid)
}

/// Stationary starting shape `base / (1 - rho)`, or `base` when `rho >= 1`.
pub fn stationary_shape(base: f64, rho: f64) -> f64 {
    if rho < 1.0 { base / (1.0 - rho) } else { base }
}

/// Next shape given the previous one and the innovation.
#[inline]
pub fn next_shape(base: f64, rho: f64, up: f64, down: f64, sigma: f64, prev: f64, u: f64) -> f64 {
    let phi = if u >= 0.0 { up } else { down };
    base + rho * prev + phi / (2.0 * sigma * sigma) * u * u
}

/// Sum of log transitional densities, each from a central difference of the
/// CDF. Returns `-inf` for non-finite results.
pub fn bege_log_likelihood(theta: &BegeParams, returns: &[f64], nodes: usize, ws: &mut CdfWorkspace) -> f64 {
    let th = theta;
    if !(th.sigma_p > 0.0 && th.sigma_n > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut p = stationary_shape(th.p0, th.rho_p);
    let mut n = stationary_shape(th.n0, th.rho_n);
    let mut total = 0.0;
    for &r in returns {
        let u = r - th.mu;
        p = p.max(SHAPE_FLOOR);
        n = n.max(SHAPE_FLOOR);
        let step = (|| -> Result<f64> {
            let grid = QuadratureGrid::new(p, th.sigma_p, nodes)?;
            ws.prepare(th.sigma_p, p, &grid)?;
            let hi = ws.cdf(u + FD_STEP, th.sigma_n, n, &grid)?;
            let lo = ws.cdf(u - FD_STEP, th.sigma_n, n, &grid)?;
            Ok(((hi - lo) / (2.0 * FD_STEP)).max(DENSITY_FLOOR).ln())
        })();
        match step {
            Ok(v) => total += v,
            Err(_) => return f64::NEG_INFINITY,
        }
        p = next_shape(th.p0, th.rho_p, th.phi_p_plus, th.phi_p_minus, th.sigma_p, p, u);
        n = next_shape(th.n0, th.rho_n, th.phi_n_plus, th.phi_n_minus, th.sigma_n, n, u);
    }
    if total.is_finite() { total } else { f64::NEG_INFINITY }
}
