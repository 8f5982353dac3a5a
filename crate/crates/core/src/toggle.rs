//! Genetic toggle-switch SDE model.
//!
//! Two genes repress each other; expression levels `u`, `v` follow an
//! Euler–Maruyama discretisation with unit step and a reflecting floor at 1.
//! Each cell ends with one noisy measurement of `u`.
//!
//! Random variates follow a fixed layout so that any block width gives the
//! same numbers: cells are grouped in chunks of [`LAYOUT_WIDTH`]; each chunk
//! draws `2 * L * (T - 1) + L` standard normals in a single call, ordered per
//! step as `L` u-increments then `L` v-increments, with the `L` observation
//! normals last. A kernel running `V` lanes reads a `V`-wide window of that
//! chunk, so per-lane arithmetic never changes with `V`.

use crate::abc::AbcModel;
use crate::blocked::{BlockWidth, BlockedBuffer, LAYOUT_WIDTH};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stats::quantile_sorted;

pub const INITIAL_EXPRESSION: f64 = 10.0;
pub const DECAY: f64 = 0.97;
pub const DIFFUSION: f64 = 0.5;
pub const FLOOR: f64 = 1.0;
pub const SUMMARY_LEVELS: usize = 19;

/// Prior bounds in draw order: mu, sigma, gamma, alpha_u, alpha_v, beta_u, beta_v.
pub const PRIOR_BOUNDS: [(f64, f64); 7] = [
    (250.0, 400.0),
    (0.05, 0.5),
    (0.05, 0.35),
    (0.0, 50.0),
    (0.0, 50.0),
    (0.0, 7.0),
    (0.0, 7.0),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToggleParams {
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub alpha_u: f64,
    pub alpha_v: f64,
    pub beta_u: f64,
    pub beta_v: f64,
}

impl ToggleParams {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.mu,
            self.sigma,
            self.gamma,
            self.alpha_u,
            self.alpha_v,
            self.beta_u,
            self.beta_v,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        ToggleParams {
            mu: x[0],
            sigma: x[1],
            gamma: x[2],
            alpha_u: x[3],
            alpha_v: x[4],
            beta_u: x[5],
            beta_v: x[6],
        }
    }

    /// Maps seven unit-interval values onto the prior box.
    pub fn from_unit(u: [f64; 7]) -> Self {
        let mut x = [0.0; 7];
        for ((xi, ui), (a, b)) in x.iter_mut().zip(u).zip(PRIOR_BOUNDS) {
            *xi = a + ui * (b - a);
        }
        Self::from_slice(&x)
    }

    /// Centre of the prior box; the default "true" parameter for demos.
    pub fn prior_midpoint() -> Self {
        Self::from_unit([0.5; 7])
    }
}

/// Seven uniforms, one per component, in declaration order.
pub fn sample_prior(stream: &mut RngStream) -> ToggleParams {
    let mut x = [0.0; 7];
    for (xi, (a, b)) in x.iter_mut().zip(PRIOR_BOUNDS) {
        *xi = stream.uniform(a, b);
    }
    ToggleParams::from_slice(&x)
}

/// Expression state of `V` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct CellStateBlock {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl CellStateBlock {
    pub fn new(lanes: usize) -> Self {
        CellStateBlock {
            u: vec![INITIAL_EXPRESSION; lanes],
            v: vec![INITIAL_EXPRESSION; lanes],
        }
    }

    pub fn lanes(&self) -> usize {
        self.u.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    pub y: Vec<f64>,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Evolves `W` lanes for `steps - 1` updates and writes their observations.
///
/// `xi` holds, for step `j`, u-noise at `j * 2 * stride + l` and v-noise at
/// `j * 2 * stride + stride + l`.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn evolve_lanes<const W: usize>(
    theta: &ToggleParams,
    steps: usize,
    u: &mut [f64],
    v: &mut [f64],
    xi: &[f64],
    stride: usize,
    eta: &[f64],
    y: &mut [f64],
) {
    let mut ut = [0.0; W];
    let mut vt = [0.0; W];
    ut.copy_from_slice(&u[..W]);
    vt.copy_from_slice(&v[..W]);
    let (alpha_u, alpha_v) = (theta.alpha_u, theta.alpha_v);
    let (beta_u, beta_v) = (theta.beta_u, theta.beta_v);
    for j in 0..steps - 1 {
        let xu = &xi[j * 2 * stride..j * 2 * stride + W];
        let xv = &xi[j * 2 * stride + stride..j * 2 * stride + stride + W];
        for l in 0..W {
            let p_u = vt[l].powf(beta_u);
            let p_v = ut[l].powf(beta_v);
            let mut un = ut[l] * DECAY;
            un += alpha_u / (1.0 + p_u) - 1.0;
            let mut vn = vt[l] * DECAY;
            vn += alpha_v / (1.0 + p_v) - 1.0;
            un += DIFFUSION * xu[l];
            vn += DIFFUSION * xv[l];
            ut[l] = if un >= FLOOR { un } else { FLOOR };
            vt[l] = if vn >= FLOOR { vn } else { FLOOR };
        }
    }
    let (mu, sm) = (theta.mu, theta.sigma * theta.mu);
    for l in 0..W {
        let obs = ut[l] + mu + sm * eta[l] / ut[l].powf(theta.gamma);
        y[l] = if obs >= FLOOR { obs } else { FLOOR };
    }
    u[..W].copy_from_slice(&ut);
    v[..W].copy_from_slice(&vt);
}

#[allow(clippy::too_many_arguments)]
fn evolve_dispatch(
    width: usize,
    theta: &ToggleParams,
    steps: usize,
    u: &mut [f64],
    v: &mut [f64],
    xi: &[f64],
    stride: usize,
    eta: &[f64],
    y: &mut [f64],
) {
    match width {
        1 => evolve_lanes::<1>(theta, steps, u, v, xi, stride, eta, y),
        2 => evolve_lanes::<2>(theta, steps, u, v, xi, stride, eta, y),
        4 => evolve_lanes::<4>(theta, steps, u, v, xi, stride, eta, y),
        8 => evolve_lanes::<8>(theta, steps, u, v, xi, stride, eta, y),
        16 => evolve_lanes::<16>(theta, steps, u, v, xi, stride, eta, y),
        _ => unreachable!("block width validated by BlockWidth"),
    }
}

/// Simulates one block of `V` cells from pre-drawn normals.
///
/// `xi` is laid out per step as `V` u-increments then `V` v-increments and
/// must hold `2 * V * (steps - 1)` values; `eta` holds the `V` observation
/// normals. The block state is advanced in place.
pub fn simulate_block(
    theta: &ToggleParams,
    steps: usize,
    block: &mut CellStateBlock,
    xi: &[f64],
    eta: &[f64],
) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::InvalidHorizon(steps));
    }
    let width = BlockWidth::new(block.lanes())?.get();
    if xi.len() < 2 * width * (steps - 1) || eta.len() < width {
        return Err(Error::InvalidShape(format!(
            "need {} increments and {} observation normals",
            2 * width * (steps - 1),
            width
        )));
    }
    let mut y = vec![0.0; width];
    evolve_dispatch(
        width,
        theta,
        steps,
        &mut block.u,
        &mut block.v,
        xi,
        width,
        eta,
        &mut y,
    );
    Ok(y)
}

/// Simulates `cells` independent cells for `steps` time points.
pub fn simulate(
    theta: &ToggleParams,
    steps: usize,
    cells: usize,
    stream: &mut RngStream,
    width: BlockWidth,
) -> Result<ObservationSet> {
    if steps < 2 {
        return Err(Error::InvalidHorizon(steps));
    }
    let layout = BlockWidth::new(LAYOUT_WIDTH)?;
    let mut y = BlockedBuffer::new(cells, layout)?;
    let rows = 2 * (steps - 1) + 1;
    let mut zeta = BlockedBuffer::with_rows(LAYOUT_WIDTH, rows, layout)?;
    let v = width.get();
    let mut u = [0.0; LAYOUT_WIDTH];
    let mut w = [0.0; LAYOUT_WIDTH];
    for chunk in 0..y.blocks() {
        stream.fill_gaussian_into(zeta.as_mut_slice(), 0.0, 1.0)?;
        let noise = zeta.as_slice();
        let (xi, eta) = noise.split_at((rows - 1) * LAYOUT_WIDTH);
        u.fill(INITIAL_EXPRESSION);
        w.fill(INITIAL_EXPRESSION);
        let out = y.block_mut(chunk);
        for off in (0..LAYOUT_WIDTH).step_by(v) {
            evolve_dispatch(
                v,
                theta,
                steps,
                &mut u[off..],
                &mut w[off..],
                &xi[off..],
                LAYOUT_WIDTH,
                &eta[off..],
                &mut out[off..],
            );
        }
    }
    Ok(ObservationSet {
        y: y.as_slice()[..cells].to_vec(),
    })
}

/// Levels 0.05, 0.10, ..., 0.95.
pub fn summary_levels() -> [f64; SUMMARY_LEVELS] {
    let mut levels = [0.0; SUMMARY_LEVELS];
    for (i, p) in levels.iter_mut().enumerate() {
        *p = (i + 1) as f64 * 0.05;
    }
    levels
}

pub fn summary_quantiles(obs: &ObservationSet) -> Result<Vec<f64>> {
    if obs.len() < SUMMARY_LEVELS {
        return Err(Error::InsufficientData {
            need: SUMMARY_LEVELS,
            got: obs.len(),
        });
    }
    let mut sorted = obs.y.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(summary_levels()
        .iter()
        .map(|&p| quantile_sorted(&sorted, p))
        .collect())
}

/// Prior predictive simulator for ABC.
#[derive(Clone, Debug)]
pub struct ToggleModel {
    pub steps: usize,
    pub cells: usize,
    pub width: BlockWidth,
}

impl ToggleModel {
    pub fn new(steps: usize, cells: usize, width: BlockWidth) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidHorizon(steps));
        }
        if cells < SUMMARY_LEVELS {
            return Err(Error::InsufficientData {
                need: SUMMARY_LEVELS,
                got: cells,
            });
        }
        Ok(ToggleModel {
            steps,
            cells,
            width,
        })
    }

    /// Summaries of data simulated at `theta` from `stream`.
    pub fn observe(&self, theta: &ToggleParams, stream: &mut RngStream) -> Result<Vec<f64>> {
        let obs = simulate(theta, self.steps, self.cells, stream, self.width)?;
        summary_quantiles(&obs)
    }
}

impl AbcModel for ToggleModel {
    fn param_dim(&self) -> usize {
        7
    }

    fn summary_dim(&self) -> usize {
        SUMMARY_LEVELS
    }

    fn sample_prior(&self, stream: &mut RngStream, theta: &mut [f64]) {
        theta.copy_from_slice(&sample_prior(stream).to_array());
    }

    fn simulate_summaries(&self, theta: &[f64], stream: &mut RngStream) -> Result<Vec<f64>> {
        self.observe(&ToggleParams::from_slice(theta), stream)
    }
}
