//! Proposal scale selection by expected squared jump distance.

use crate::error::Result;
use crate::exec::Workers;
use crate::rng::derive_seed;
use crate::stats::quantile;

use super::ensemble::ParticleEnsemble;
use super::kernel::{mcmc_block_move, MoveSpec, ProposalKernel};
use super::ModelHooks;
use crate::blocked::BlockWidth;

pub const MAX_SWEEPS: usize = 100;

/// Default scale grid `0.1, 0.2, ..., 1.0`.
pub fn default_scales() -> Vec<f64> {
    (1..=10).map(|k| f64::from(k) / 10.0).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EsjdOutcome {
    pub scale: f64,
    /// Per-scale median of accepted squared jumps in the trial sweep.
    pub medians: Vec<f64>,
    /// Sweeps with the chosen scale after the trial.
    pub sweeps: usize,
    pub accept_rate: f64,
}

/// Assigns grid scales to particles cyclically and runs one trial step, then
/// keeps moving with the scale whose median accepted jump is largest until
/// half the particles have travelled further than the trial median.
///
/// Falls back to `2.38 / sqrt(d)` when no trial move is accepted.
pub fn esjd_select_scale<M: ModelHooks + ?Sized>(
    ens: &mut ParticleEnsemble,
    kernel: &ProposalKernel,
    model: &M,
    temperature: f64,
    scales: &[f64],
    width: BlockWidth,
    seed: u64,
    workers: &Workers,
) -> Result<EsjdOutcome> {
    let n = ens.len();
    let trial = mcmc_block_move(
        ens,
        kernel,
        model,
        &MoveSpec { temperature, steps: 1, scales, width, seed: derive_seed(seed, &[0]) },
        workers,
    );
    let medians: Vec<f64> = (0..scales.len())
        .map(|k| {
            let jumps: Vec<f64> = (k..n).step_by(scales.len()).map(|i| trial.jumps[i]).collect();
            if jumps.is_empty() { 0.0 } else { quantile(&jumps, 0.5) }
        })
        .collect();
    let scale = if trial.jumps.iter().all(|&j| j == 0.0) {
        2.38 / (ens.dim as f64).sqrt()
    } else if medians.iter().all(|&m| m == 0.0) {
        // Fewer than half accepted at every scale: rank by mean instead.
        let means: Vec<f64> = (0..scales.len())
            .map(|k| (k..n).step_by(scales.len()).map(|i| trial.jumps[i]).sum::<f64>())
            .collect();
        scales[argmax(&means)]
    } else {
        scales[argmax(&medians)]
    };

    let threshold = quantile(&trial.jumps, 0.5);
    let mut travelled = vec![0.0; n];
    let (mut accepted, mut proposed) = (trial.accepted(), n);
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let rep = mcmc_block_move(
            ens,
            kernel,
            model,
            &MoveSpec {
                temperature,
                steps: 1,
                scales: &[scale],
                width,
                seed: derive_seed(seed, &[sweeps as u64]),
            },
            workers,
        );
        accepted += rep.accepted();
        proposed += n;
        for (t, j) in travelled.iter_mut().zip(&rep.jumps) {
            *t += j;
        }
        let moved = travelled.iter().filter(|&&t| t > threshold).count();
        if 2 * moved >= n {
            break;
        }
    }
    Ok(EsjdOutcome {
        scale,
        medians,
        sweeps,
        accept_rate: accepted as f64 / proposed as f64,
    })
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}
