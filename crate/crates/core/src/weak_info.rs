//! Weak-informativity test for the logistic bioassay model.
//!
//! For each candidate hyperparameter `lambda_k` the evidence of datasets
//! drawn under the base prior is compared with the evidence of datasets drawn
//! under `lambda_k` itself, giving prior predictive p-values. A prior is
//! weakly informative when the `alpha` quantile of its p-values exceeds the
//! base prior's.

use std::fmt::Write as _;

use crate::blocked::BlockWidth;
use crate::error::{Error, Result};
use crate::exec::Workers;
use crate::rng::{derive_seed, RngStream};
use crate::smc::{run_smc, ModelHooks, ScaleRule, SmcConfig};
use crate::stats::quantile;

pub const BASE_LAMBDA: [f64; 2] = [10.0, 2.5];
pub const LAMBDA_BOX: [(f64, f64); 2] = [(0.1, 10.0), (0.1, 20.0)];
pub const DOSES: [f64; 4] = [-0.86, -0.3, -0.05, -0.75];
pub const GROUP_SIZE: u32 = 5;

/// Values of `log p` below this count as `p = 0`.
const LOG_PROB_FLOOR: f64 = -690.7755278982137; // ln(1e-300)

/// Prior standard deviations of intercept and slope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyperparam {
    pub lambda: [f64; 2],
}

impl Hyperparam {
    pub fn new(l1: f64, l2: f64) -> Result<Self> {
        if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
            return Err(Error::InvalidArgument(format!("prior scales ({l1}, {l2}) must be positive")));
        }
        Ok(Hyperparam { lambda: [l1, l2] })
    }

    pub fn base() -> Self {
        Hyperparam { lambda: BASE_LAMBDA }
    }
}

/// Dose levels and group sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub doses: Vec<f64>,
    pub sizes: Vec<u32>,
}

impl Default for Design {
    fn default() -> Self {
        Design { doses: DOSES.to_vec(), sizes: vec![GROUP_SIZE; DOSES.len()] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BioassayData {
    pub deaths: Vec<u32>,
    pub sizes: Vec<u32>,
    pub doses: Vec<f64>,
    log_binom: f64,
}

fn ln_choose(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0f64;
    for i in 0..k {
        c = c * f64::from(n - i) / f64::from(i + 1);
    }
    c.ln()
}

impl BioassayData {
    pub fn new(deaths: Vec<u32>, design: &Design) -> Result<Self> {
        if deaths.len() != design.doses.len() || design.sizes.len() != design.doses.len() {
            return Err(Error::InvalidShape("deaths, sizes and doses differ in length".into()));
        }
        if deaths.iter().zip(&design.sizes).any(|(y, n)| y > n) {
            return Err(Error::InvalidInput("more deaths than animals in a group".into()));
        }
        let log_binom = deaths.iter().zip(&design.sizes).map(|(&y, &n)| ln_choose(n, y)).sum();
        Ok(BioassayData { deaths, sizes: design.sizes.clone(), doses: design.doses.clone(), log_binom })
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Log of `p^y (1 - p)^(n - y)` for `p = 1 / (1 + e^eta)`.
#[inline]
fn group_term(eta: f64, y: f64, n_minus_y: f64) -> f64 {
    let log_p = -softplus(eta);
    let log_q = -softplus(-eta);
    let mut s = 0.0;
    if y > 0.0 {
        if log_p < LOG_PROB_FLOOR {
            return f64::NEG_INFINITY;
        }
        s += y * log_p;
    }
    if n_minus_y > 0.0 {
        if log_q < LOG_PROB_FLOOR {
            return f64::NEG_INFINITY;
        }
        s += n_minus_y * log_q;
    }
    s
}

/// Product-binomial log likelihood with death probability
/// `1 / (1 + exp(b0 + b1 x))`.
pub fn bioassay_log_likelihood(theta: &[f64], data: &BioassayData) -> f64 {
    let mut total = data.log_binom;
    for i in 0..data.doses.len() {
        let eta = theta[0] + theta[1] * data.doses[i];
        let y = f64::from(data.deaths[i]);
        total += group_term(eta, y, f64::from(data.sizes[i]) - y);
    }
    total
}

/// Lane-wise form of [`bioassay_log_likelihood`]; `thetas` holds the
/// intercepts of all lanes followed by the slopes.
pub fn bioassay_block_log_likelihood(thetas: &[f64], width: usize, data: &BioassayData, out: &mut [f64]) {
    let (b0, b1) = thetas.split_at(width);
    let out = &mut out[..width];
    out.fill(data.log_binom);
    for i in 0..data.doses.len() {
        let x = data.doses[i];
        let y = f64::from(data.deaths[i]);
        let ny = f64::from(data.sizes[i]) - y;
        for l in 0..width {
            out[l] += group_term(b0[l] + b1[l] * x, y, ny);
        }
    }
}

/// Bioassay likelihood with a `N(0, diag(lambda)^2)` prior.
#[derive(Clone, Debug)]
pub struct BioassayModel {
    pub data: BioassayData,
    pub prior: Hyperparam,
}

impl ModelHooks for BioassayModel {
    fn dim(&self) -> usize {
        2
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let [l1, l2] = self.prior.lambda;
        let (z1, z2) = (theta[0] / l1, theta[1] / l2);
        -0.5 * (z1 * z1 + z2 * z2) - (l1 * l2 * 2.0 * std::f64::consts::PI).ln()
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        bioassay_log_likelihood(theta, &self.data)
    }

    fn block_log_likelihood(&self, thetas: &[f64], width: usize, out: &mut [f64]) {
        bioassay_block_log_likelihood(thetas, width, &self.data, out);
    }

    fn sample_prior(&self, stream: &mut RngStream, theta: &mut [f64]) {
        draw_prior(self.prior.lambda, stream, theta);
    }
}

fn draw_prior(lambda: [f64; 2], stream: &mut RngStream, theta: &mut [f64]) {
    let mut z = [0.0; 2];
    stream.fill_gaussian_into(&mut z, 0.0, 1.0).expect("unit normal parameters are valid");
    theta[0] = lambda[0] * z[0];
    theta[1] = lambda[1] * z[1];
}

/// Draws `theta ~ N(0, diag(lambda)^2)` and then binomial deaths for every
/// group, each death count as a sum of Bernoulli trials.
pub fn sample_prior_predictive(lambda: [f64; 2], design: &Design, stream: &mut RngStream) -> Result<([f64; 2], BioassayData)> {
    let mut theta = [0.0; 2];
    draw_prior(lambda, stream, &mut theta);
    let mut deaths = Vec::with_capacity(design.doses.len());
    for (&x, &n) in design.doses.iter().zip(&design.sizes) {
        let p = 1.0 / (1.0 + (theta[0] + theta[1] * x).exp());
        deaths.push((0..n).filter(|_| stream.next_unit() < p).count() as u32);
    }
    Ok((theta, BioassayData::new(deaths, design)?))
}

/// `p_i = #{ j : other_j <= base_i } / len(other)`, skipping NaN entries
/// (failed evidence estimates) on both sides.
pub fn estimate_pvalues(base: &[f64], other: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = other.iter().copied().filter(|x| !x.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    base.iter()
        .filter(|x| !x.is_nan())
        .map(|&b| sorted.partition_point(|&x| x <= b) as f64 / n)
        .collect()
}

/// `alpha` quantile of the p-values.
pub fn compute_cutoff(pvalues: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    if pvalues.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(quantile(pvalues, alpha))
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakInfoConfig {
    pub hypers: usize,
    pub datasets: usize,
    pub particles: usize,
    pub alpha: f64,
    pub tuning: f64,
    pub scale: f64,
    pub width: BlockWidth,
    pub seed: u64,
    /// Draw fresh base datasets for every hyperparameter instead of sharing
    /// one set.
    pub redraw_base: bool,
    pub design: Design,
}

impl Default for WeakInfoConfig {
    fn default() -> Self {
        WeakInfoConfig {
            hypers: 400,
            datasets: 400,
            particles: 500,
            alpha: 0.05,
            tuning: 0.01,
            scale: 2.38 / 2f64.sqrt(),
            width: BlockWidth::new(4).expect("4 is supported"),
            seed: 0,
            redraw_base: false,
            design: Design::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutoffRow {
    pub k: usize,
    pub lambda: [f64; 2],
    pub pvalues: Vec<f64>,
    pub cutoff: f64,
    pub weakly_informative: bool,
    /// Datasets whose evidence could not be estimated.
    pub missing: usize,
}

/// Row 0 is the base prior.
#[derive(Clone, Debug, PartialEq)]
pub struct CutoffTable {
    pub alpha: f64,
    pub rows: Vec<CutoffRow>,
}

impl CutoffTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,lambda1,lambda2,gamma_alpha,weakly_informative\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{}",
                r.k,
                r.lambda[0],
                r.lambda[1],
                r.cutoff,
                u8::from(r.weakly_informative)
            );
        }
        out
    }
}

const ROLE_HYPER: u64 = 11;
const ROLE_BASE: u64 = 12;
const ROLE_BASE_PAIR: u64 = 13;
const ROLE_OWN: u64 = 14;
const ROLE_SMC: u64 = 15;

/// Hyperparameters `lambda_1..lambda_K` drawn uniformly over the search box.
pub fn draw_hyperparams(count: usize, seed: u64) -> Vec<Hyperparam> {
    let mut s = RngStream::new(derive_seed(seed, &[ROLE_HYPER]), 0);
    (0..count)
        .map(|_| {
            let l1 = s.uniform(LAMBDA_BOX[0].0, LAMBDA_BOX[0].1);
            let l2 = s.uniform(LAMBDA_BOX[1].0, LAMBDA_BOX[1].1);
            Hyperparam { lambda: [l1, l2] }
        })
        .collect()
}

fn draw_datasets(lambda: [f64; 2], design: &Design, n: usize, seed: u64, tags: &[u64]) -> Result<Vec<BioassayData>> {
    (0..n)
        .map(|i| {
            let mut t = tags.to_vec();
            t.push(i as u64);
            let mut s = RngStream::new(derive_seed(seed, &t), 0);
            sample_prior_predictive(lambda, design, &mut s).map(|(_, d)| d)
        })
        .collect()
}

fn evidences(datasets: &[BioassayData], prior: Hyperparam, config: &WeakInfoConfig, tags: [u64; 3]) -> Vec<f64> {
    let single = Workers::sequential(1);
    datasets
        .iter()
        .enumerate()
        .map(|(i, data)| {
            let model = BioassayModel { data: data.clone(), prior };
            let mut smc = SmcConfig::new(
                config.particles,
                config.width,
                ScaleRule::Fixed(config.scale),
                derive_seed(config.seed, &[tags[0], tags[1], tags[2], i as u64]),
            );
            smc.tuning = config.tuning;
            run_smc(&model, &smc, &single).map_or(f64::NAN, |o| o.log_evidence())
        })
        .collect()
}

/// Runs the full test. Hyperparameters are spread over the workers; each
/// SMC run is single-threaded and blocked with the configured width.
pub fn run_weak_info_test(config: &WeakInfoConfig, workers: &Workers) -> Result<CutoffTable> {
    if config.datasets == 0 {
        return Err(Error::InvalidArgument("need at least one dataset".into()));
    }
    let base = Hyperparam::base();
    let mut hypers = vec![base];
    hypers.extend(draw_hyperparams(config.hypers, config.seed));
    let shared = draw_datasets(base.lambda, &config.design, config.datasets, config.seed, &[ROLE_BASE])?;

    let jobs: Vec<(usize, Hyperparam)> = hypers.into_iter().enumerate().collect();
    let rows = workers.map(jobs, |(k, prior)| -> Result<CutoffRow> {
        let kk = k as u64;
        let base_sets = if config.redraw_base && k > 0 {
            draw_datasets(base.lambda, &config.design, config.datasets, config.seed, &[ROLE_BASE, kk])?
        } else {
            shared.clone()
        };
        let own_sets = if k == 0 {
            draw_datasets(base.lambda, &config.design, config.datasets, config.seed, &[ROLE_BASE_PAIR])?
        } else {
            draw_datasets(prior.lambda, &config.design, config.datasets, config.seed, &[ROLE_OWN, kk])?
        };
        let base_ev = evidences(&base_sets, prior, config, [ROLE_SMC, kk, 0]);
        let own_ev = evidences(&own_sets, prior, config, [ROLE_SMC, kk, 1]);
        let missing = base_ev.iter().chain(&own_ev).filter(|x| x.is_nan()).count();
        let pvalues = estimate_pvalues(&base_ev, &own_ev);
        let cutoff = compute_cutoff(&pvalues, config.alpha)?;
        Ok(CutoffRow { k, lambda: prior.lambda, pvalues, cutoff, weakly_informative: false, missing })
    });
    let mut rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let base_cutoff = rows[0].cutoff;
    for r in rows.iter_mut().skip(1) {
        r.weakly_informative = r.cutoff > base_cutoff;
    }
    Ok(CutoffTable { alpha: config.alpha, rows })
}
