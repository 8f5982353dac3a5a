//! BEGE ("bad environment, good environment") return innovations: returns are
//! `mu` plus the difference of a positive and a negative scaled centred gamma
//! shock whose shapes follow asymmetric autoregressions.

pub mod cdf;
pub mod incgamma;

use std::fmt::Write as _;
use std::sync::Mutex;

use rand_distr::{Distribution, Gamma};

use crate::blocked::BlockWidth;
use crate::error::{Error, Result};
use crate::exec::Workers;
use crate::rng::RngStream;
use crate::smc::{run_smc, ModelHooks, ScaleRule, SmcConfig, SmcOutput};

pub use crate::smc::esjd_select_scale;
pub use cdf::{bege_cdf, bege_log_likelihood, CdfWorkspace, QuadratureGrid};
pub use incgamma::{inc_gamma, inc_gamma_block};

pub const PARAM_NAMES: [&str; 11] = [
    "p0", "sigma_p", "rho_p", "phi_p_plus", "phi_p_minus", "n0", "sigma_n", "rho_n", "phi_n_plus",
    "phi_n_minus", "mu",
];

/// Independent uniform priors, in parameter order.
pub const PRIOR_BOUNDS: [(f64, f64); 11] = [
    (1e-4, 0.5),
    (1e-4, 0.3),
    (1e-4, 0.99),
    (1e-4, 0.5),
    (1e-4, 0.5),
    (1e-4, 1.0),
    (1e-4, 0.3),
    (1e-4, 0.99),
    (-0.2, 0.1),
    (1e-4, 0.75),
    (-0.9, 0.9),
];

/// Restarts allowed before a simulated path is declared degenerate.
pub const MAX_RESTARTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BegeParams {
    pub p0: f64,
    pub sigma_p: f64,
    pub rho_p: f64,
    pub phi_p_plus: f64,
    pub phi_p_minus: f64,
    pub n0: f64,
    pub sigma_n: f64,
    pub rho_n: f64,
    pub phi_n_plus: f64,
    pub phi_n_minus: f64,
    pub mu: f64,
}

impl BegeParams {
    pub fn from_slice(x: &[f64]) -> Self {
        BegeParams {
            p0: x[0],
            sigma_p: x[1],
            rho_p: x[2],
            phi_p_plus: x[3],
            phi_p_minus: x[4],
            n0: x[5],
            sigma_n: x[6],
            rho_n: x[7],
            phi_n_plus: x[8],
            phi_n_minus: x[9],
            mu: x[10],
        }
    }

    pub fn to_array(&self) -> [f64; 11] {
        [
            self.p0,
            self.sigma_p,
            self.rho_p,
            self.phi_p_plus,
            self.phi_p_minus,
            self.n0,
            self.sigma_n,
            self.rho_n,
            self.phi_n_plus,
            self.phi_n_minus,
            self.mu,
        ]
    }

    /// Parameters behind the bundled synthetic series.
    pub fn reference() -> Self {
        BegeParams::from_slice(&[0.25, 0.04, 0.5, 0.1, 0.2, 0.5, 0.03, 0.6, 0.05, 0.3, 0.005])
    }

    pub fn in_prior_support(&self) -> bool {
        self.to_array()
            .iter()
            .zip(PRIOR_BOUNDS)
            .all(|(&x, (lo, hi))| x >= lo && x <= hi)
    }
}

/// Latent shapes and the last innovation along a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BegeLatentState {
    pub p: f64,
    pub n: f64,
    pub u: f64,
}

impl BegeLatentState {
    pub fn stationary(theta: &BegeParams) -> Self {
        BegeLatentState {
            p: cdf::stationary_shape(theta.p0, theta.rho_p),
            n: cdf::stationary_shape(theta.n0, theta.rho_n),
            u: 0.0,
        }
    }

    /// Shapes for the next period after innovation `u`.
    pub fn advance(&mut self, theta: &BegeParams, u: f64) {
        let t = theta;
        self.p = cdf::next_shape(t.p0, t.rho_p, t.phi_p_plus, t.phi_p_minus, t.sigma_p, self.p, u);
        self.n = cdf::next_shape(t.n0, t.rho_n, t.phi_n_plus, t.phi_n_minus, t.sigma_n, self.n, u);
        self.u = u;
    }
}

/// Centred gamma draw with unit scale.
pub fn centred_gamma(shape: f64, stream: &mut RngStream) -> Result<f64> {
    let g = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidArgument(format!("gamma shape {shape}: {e}")))?;
    Ok(g.sample(stream) - shape)
}

/// Simulates `months` returns. A path whose shape drops below the floor is
/// discarded and redrawn; after [`MAX_RESTARTS`] such restarts the call
/// fails.
pub fn simulate_bege(theta: &BegeParams, months: usize, stream: &mut RngStream) -> Result<Vec<f64>> {
    if !(theta.p0 > 0.0 && theta.n0 > 0.0 && theta.sigma_p > 0.0 && theta.sigma_n > 0.0) {
        return Err(Error::InvalidArgument("base shapes and scales must be positive".into()));
    }
    'path: for _ in 0..=MAX_RESTARTS {
        let mut state = BegeLatentState::stationary(theta);
        let mut out = Vec::with_capacity(months);
        for _ in 0..months {
            if state.p < cdf::SHAPE_FLOOR || state.n < cdf::SHAPE_FLOOR {
                continue 'path;
            }
            let wp = centred_gamma(state.p, stream)?;
            let wn = centred_gamma(state.n, stream)?;
            let u = theta.sigma_p * wp - theta.sigma_n * wn;
            out.push(u + theta.mu);
            state.advance(theta, u);
        }
        return Ok(out);
    }
    Err(Error::DegeneratePath { restarts: MAX_RESTARTS })
}

/// Posterior target for the 11 BEGE parameters given a return series.
pub struct BegeModel {
    pub returns: Vec<f64>,
    pub nodes: usize,
    pub width: BlockWidth,
    workspaces: Mutex<Vec<CdfWorkspace>>,
}

impl BegeModel {
    pub fn new(returns: Vec<f64>, width: BlockWidth) -> Result<Self> {
        if returns.len() < 2 {
            return Err(Error::InsufficientData { need: 2, got: returns.len() });
        }
        Ok(BegeModel { returns, nodes: cdf::DEFAULT_NODES, width, workspaces: Mutex::new(Vec::new()) })
    }

    fn with_workspace<T>(&self, f: impl FnOnce(&mut CdfWorkspace) -> T) -> T {
        let taken = self.workspaces.lock().map(|mut w| w.pop()).unwrap_or(None);
        let mut ws = taken.unwrap_or_else(|| CdfWorkspace::new(self.width));
        let out = f(&mut ws);
        if let Ok(mut pool) = self.workspaces.lock() {
            pool.push(ws);
        }
        out
    }
}

impl ModelHooks for BegeModel {
    fn dim(&self) -> usize {
        11
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        if BegeParams::from_slice(theta).in_prior_support() {
            -PRIOR_BOUNDS.iter().map(|(lo, hi)| (hi - lo).ln()).sum::<f64>()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let th = BegeParams::from_slice(theta);
        self.with_workspace(|ws| bege_log_likelihood(&th, &self.returns, self.nodes, ws))
    }

    fn block_log_likelihood(&self, thetas: &[f64], width: usize, out: &mut [f64]) {
        self.with_workspace(|ws| {
            let mut row = [0.0; 11];
            for (l, o) in out.iter_mut().enumerate().take(width) {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = thetas[j * width + l];
                }
                *o = bege_log_likelihood(&BegeParams::from_slice(&row), &self.returns, self.nodes, ws);
            }
        });
    }

    fn sample_prior(&self, stream: &mut RngStream, theta: &mut [f64]) {
        for (x, (lo, hi)) in theta.iter_mut().zip(PRIOR_BOUNDS) {
            *x = stream.uniform(lo, hi);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BegeConfig {
    pub particles: usize,
    pub width: BlockWidth,
    pub scales: Vec<f64>,
    pub seed: u64,
}

impl Default for BegeConfig {
    fn default() -> Self {
        BegeConfig {
            particles: 1024,
            width: BlockWidth::new(4).expect("4 is supported"),
            scales: crate::smc::default_scales(),
            seed: 0,
        }
    }
}

/// SMC from the uniform prior box to the posterior, choosing the proposal
/// scale each iteration by expected squared jump distance.
pub fn run_bege_inference(returns: &[f64], config: &BegeConfig, workers: &Workers) -> Result<SmcOutput> {
    let model = BegeModel::new(returns.to_vec(), config.width)?;
    let smc = SmcConfig::new(config.particles, config.width, ScaleRule::Esjd(config.scales.clone()), config.seed);
    run_smc(&model, &smc, workers)
}

/// One row per particle: the 11 parameters and the normalised weight.
pub fn posterior_csv(output: &SmcOutput) -> Result<String> {
    let ens = &output.ensemble;
    let weights = ens.weights()?;
    let mut out = PARAM_NAMES.join(",");
    out.push_str(",weight\n");
    for i in 0..ens.len() {
        for x in ens.particle(i) {
            let _ = write!(out, "{x:.16e},");
        }
        let _ = writeln!(out, "{:.16e}", weights[i]);
    }
    Ok(out)
}

pub fn returns_csv(returns: &[f64]) -> String {
    let mut out = String::from("log_return\n");
    for r in returns {
        let _ = writeln!(out, "{r:.16e}");
    }
    out
}

/// Parses a single-column CSV with header `log_return`.
pub fn parse_returns(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "log_return" => {}
        Some((i, h)) => {
            return Err(Error::Parse { line: i + 1, message: format!("expected header log_return, found {h:?}") })
        }
        None => return Err(Error::Parse { line: 1, message: "empty input".into() }),
    }
    lines
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse { line: i + 1, message: format!("not a finite number: {l:?}") })
        })
        .collect()
}

/// Bundled series of 200 months simulated from [`BegeParams::reference`].
pub const SYNTHETIC_SERIES: &str = include_str!("../../data/bege_synthetic.csv");
pub const SYNTHETIC_SEED: u64 = 20180131;
pub const SYNTHETIC_MONTHS: usize = 200;

pub fn synthetic_series() -> Vec<f64> {
    parse_returns(SYNTHETIC_SERIES).expect("bundled series parses")
}

/// Regenerates the bundled series.
pub fn generate_synthetic() -> Result<Vec<f64>> {
    simulate_bege(&BegeParams::reference(), SYNTHETIC_MONTHS, &mut RngStream::new(SYNTHETIC_SEED, 0))
}
