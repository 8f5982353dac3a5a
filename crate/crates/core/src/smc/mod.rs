//! Adaptive likelihood-annealed SMC.
//!
//! Each iteration picks the next temperature by bisection on the ESS,
//! reweights, resamples on the coordinator thread, then moves particles with
//! a tuned Gaussian random walk. Likelihood evaluations run in blocks of `V`
//! lanes over chunk-aligned particle ranges spread across the workers.
//! Random streams are keyed by iteration, role and particle chunk, so a run
//! depends only on the seed.

pub mod ensemble;
pub mod esjd;
pub mod kernel;

use std::fmt::Write as _;

use crate::blocked::{partition, BlockWidth, LAYOUT_WIDTH};
use crate::error::{Error, Result};
use crate::exec::{split_ranges_mut, Workers};
use crate::rng::{derive_seed, RngStream};

pub use ensemble::{ess, find_temperature, reweight_and_update_evidence, resample_multinomial, ParticleEnsemble};
pub use esjd::{default_scales, esjd_select_scale, EsjdOutcome};
pub use kernel::{mcmc_block_move, steps_for, MoveReport, MoveSpec, ProposalKernel};

/// Model and data for likelihood-based samplers.
pub trait ModelHooks: Sync {
    fn dim(&self) -> usize;
    fn log_prior(&self, theta: &[f64]) -> f64;
    fn log_likelihood(&self, theta: &[f64]) -> f64;

    /// Log likelihood of `width` parameter vectors at once. `thetas` is
    /// component-major: component `j` of lane `l` is `thetas[j * width + l]`.
    fn block_log_likelihood(&self, thetas: &[f64], width: usize, out: &mut [f64]) {
        let d = self.dim();
        let mut row = vec![0.0; d];
        for (l, o) in out.iter_mut().enumerate().take(width) {
            for (j, r) in row.iter_mut().enumerate() {
                *r = thetas[j * width + l];
            }
            *o = self.log_likelihood(&row);
        }
    }

    fn sample_prior(&self, stream: &mut RngStream, theta: &mut [f64]);
}

/// How the random-walk scale is chosen each iteration.
#[derive(Clone, Debug, PartialEq)]
pub enum ScaleRule {
    /// Fixed scale with the step count tuned from a one-step pilot sweep.
    Fixed(f64),
    /// Per-iteration selection from a grid by expected squared jump distance.
    Esjd(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmcConfig {
    pub particles: usize,
    pub width: BlockWidth,
    /// Target probability of a particle never moving during one iteration.
    pub tuning: f64,
    pub scale: ScaleRule,
    pub seed: u64,
    pub max_iterations: usize,
}

impl SmcConfig {
    pub fn new(particles: usize, width: BlockWidth, scale: ScaleRule, seed: u64) -> Self {
        SmcConfig {
            particles,
            width,
            tuning: 0.01,
            scale,
            seed,
            max_iterations: 1000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.particles < 2 * self.width.get().max(1) || self.particles < 2 {
            return Err(Error::InvalidArgument(format!(
                "{} particles is fewer than two blocks of width {}",
                self.particles, self.width
            )));
        }
        if !(self.tuning > 0.0 && self.tuning < 1.0) {
            return Err(Error::InvalidArgument(format!("tuning constant {} outside (0, 1)", self.tuning)));
        }
        let scales: &[f64] = match &self.scale {
            ScaleRule::Fixed(h) => std::slice::from_ref(h),
            ScaleRule::Esjd(grid) => grid,
        };
        if scales.is_empty() || scales.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(Error::InvalidArgument("scales must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// One row of the per-iteration trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub temperature: f64,
    pub ess: f64,
    pub log_evidence: f64,
    pub steps: usize,
    pub accept_rate: f64,
    pub scale: f64,
}

#[derive(Clone, Debug)]
pub struct SmcOutput {
    pub ensemble: ParticleEnsemble,
    pub trace: Vec<TraceRow>,
}

impl SmcOutput {
    pub fn log_evidence(&self) -> f64 {
        self.ensemble.log_evidence
    }
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("n,t_n,ess,log_evidence,R_n,p_acc,h\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
            r.iteration, r.temperature, r.ess, r.log_evidence, r.steps, r.accept_rate, r.scale
        );
    }
    out
}

const ROLE_INIT: u64 = 1;
const ROLE_RESAMPLE: u64 = 2;
const ROLE_PILOT: u64 = 3;
const ROLE_MOVE: u64 = 4;
const ROLE_ESJD: u64 = 5;

/// Evaluates log likelihoods of row-major `particles` in blocks of `width`.
/// A short final block is padded with copies of its first lane.
pub fn evaluate_block<M: ModelHooks + ?Sized>(model: &M, particles: &[f64], width: BlockWidth, out: &mut [f64]) {
    let d = model.dim();
    let v = width.get();
    let n = out.len();
    let mut block = vec![0.0; v * d];
    let mut ll = vec![0.0; v];
    let mut b0 = 0;
    while b0 < n {
        let lanes = v.min(n - b0);
        for l in 0..v {
            let i = b0 + if l < lanes { l } else { 0 };
            for a in 0..d {
                block[a * v + l] = particles[i * d + a];
            }
        }
        model.block_log_likelihood(&block, v, &mut ll);
        out[b0..b0 + lanes].copy_from_slice(&ll[..lanes]);
        b0 += v;
    }
}

/// Draws `n` particles from the prior and evaluates them.
pub fn initialize<M: ModelHooks + ?Sized>(
    model: &M,
    n: usize,
    width: BlockWidth,
    seed: u64,
    workers: &Workers,
) -> Result<ParticleEnsemble> {
    let d = model.dim();
    let mut particles = vec![0.0; n * d];
    let mut log_liks = vec![0.0; n];
    let mut log_priors = vec![0.0; n];
    let ranges = partition(n, workers.count(), LAYOUT_WIDTH).ranges;
    let init_seed = derive_seed(seed, &[0, ROLE_INIT]);
    let jobs: Vec<_> = ranges
        .iter()
        .cloned()
        .zip(split_ranges_mut(&mut particles, &ranges, d))
        .zip(split_ranges_mut(&mut log_liks, &ranges, 1))
        .zip(split_ranges_mut(&mut log_priors, &ranges, 1))
        .map(|(((r, x), ll), lp)| (r, x, ll, lp))
        .collect();
    workers.map(jobs, |(range, x, ll, lp)| {
        let mut start = 0;
        while start < range.len() {
            let m = LAYOUT_WIDTH.min(range.len() - start);
            let mut stream = RngStream::new(init_seed, ((range.start + start) / LAYOUT_WIDTH) as u32);
            for i in start..start + m {
                let theta = &mut x[i * d..(i + 1) * d];
                model.sample_prior(&mut stream, theta);
                lp[i] = model.log_prior(theta);
            }
            start += m;
        }
        evaluate_block(model, x, width, ll);
    });
    if log_liks.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(Error::InvalidModel("non-finite log likelihood at a prior draw".into()));
    }
    if log_liks.iter().all(|&l| l == f64::NEG_INFINITY) {
        return Err(Error::InvalidModel("every prior draw has zero likelihood".into()));
    }
    Ok(ParticleEnsemble::new(d, particles, log_liks, log_priors))
}

/// Runs the sampler from the prior to the posterior.
pub fn run_smc<M: ModelHooks + ?Sized>(model: &M, config: &SmcConfig, workers: &Workers) -> Result<SmcOutput> {
    config.validate()?;
    let mut ens = initialize(model, config.particles, config.width, config.seed, workers)?;
    let mut trace = Vec::new();
    while ens.temperature < 1.0 {
        let n = ens.iteration + 1;
        if n > config.max_iterations {
            return Err(Error::NonConvergence(config.max_iterations));
        }
        let t_next = find_temperature(&ens.log_weights, &ens.log_liks, ens.temperature)?;
        reweight_and_update_evidence(&mut ens, t_next)?;
        let ess_now = ess(&ens.log_weights)?;
        let mut coordinator = RngStream::new(derive_seed(config.seed, &[n as u64, ROLE_RESAMPLE]), 0);
        resample_multinomial(&mut ens, &mut coordinator)?;

        let (steps, accept_rate, scale) = match &config.scale {
            ScaleRule::Fixed(h) => {
                let kernel = ProposalKernel::from_ensemble(&ens, *h)?;
                let scales = [*h];
                let mut spec = MoveSpec {
                    temperature: ens.temperature,
                    steps: 1,
                    scales: &scales,
                    width: config.width,
                    seed: derive_seed(config.seed, &[n as u64, ROLE_PILOT]),
                };
                let pilot = mcmc_block_move(&mut ens, &kernel, model, &spec, workers);
                let p_acc = pilot.accept_rate();
                spec.steps = steps_for(p_acc, config.tuning);
                spec.seed = derive_seed(config.seed, &[n as u64, ROLE_MOVE]);
                mcmc_block_move(&mut ens, &kernel, model, &spec, workers);
                (spec.steps, p_acc, *h)
            }
            ScaleRule::Esjd(grid) => {
                let kernel = ProposalKernel::from_ensemble(&ens, 1.0)?;
                let out = esjd_select_scale(
                    &mut ens,
                    &kernel,
                    model,
                    t_next,
                    grid,
                    config.width,
                    derive_seed(config.seed, &[n as u64, ROLE_ESJD]),
                    workers,
                )?;
                (out.sweeps, out.accept_rate, out.scale)
            }
        };
        ens.iteration = n;
        trace.push(TraceRow {
            iteration: n,
            temperature: ens.temperature,
            ess: ess_now,
            log_evidence: ens.log_evidence,
            steps,
            accept_rate,
            scale,
        });
    }
    Ok(SmcOutput { ensemble: ens, trace })
}
