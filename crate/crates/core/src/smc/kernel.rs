//! Gaussian random-walk proposals with blocked likelihood evaluation.
//!
//! Particles are grouped into chunks of [`LAYOUT_WIDTH`]. Each chunk owns a
//! random stream and, per MCMC step, draws `LAYOUT_WIDTH * d` standard
//! normals (component-major) followed by `LAYOUT_WIDTH` uniforms, whatever
//! the block width. The block width only decides how many proposals are
//! handed to the likelihood at once, so every `V` gives the same chain.

use nalgebra::DMatrix;

use crate::blocked::{partition, BlockWidth, LAYOUT_WIDTH};
use crate::error::{Error, Result};
use crate::exec::{split_ranges_mut, Workers};
use crate::rng::RngStream;

use super::ensemble::ParticleEnsemble;
use super::ModelHooks;

pub const COVARIANCE_JITTER: f64 = 1e-10;
pub const MAX_STEPS: usize = 100;
pub const PILOT_ACCEPT_BOUNDS: (f64, f64) = (0.01, 0.99);

/// Random-walk kernel `N(theta, h^2 * cov)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalKernel {
    pub dim: usize,
    /// Particle covariance, row-major, after any jitter.
    pub covariance: Vec<f64>,
    /// Lower Cholesky factor of `covariance`, row-major.
    pub cholesky: Vec<f64>,
    pub scale: f64,
    pub steps: usize,
    pub accept_rate: f64,
}

impl ProposalKernel {
    /// Covariance and Cholesky factor of the (equally weighted) particles.
    /// Adds `1e-10 I` when the factorisation fails.
    pub fn from_ensemble(ens: &ParticleEnsemble, scale: f64) -> Result<Self> {
        let (n, d) = (ens.len(), ens.dim);
        if n < 2 {
            return Err(Error::DegenerateEnsemble("need two particles for a covariance".into()));
        }
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, x) in mean.iter_mut().zip(ens.particle(i)) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut cov = vec![0.0; d * d];
        for i in 0..n {
            let p = ens.particle(i);
            for a in 0..d {
                let da = p[a] - mean[a];
                for b in 0..=a {
                    cov[a * d + b] += da * (p[b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..=a {
                let v = cov[a * d + b] / (n as f64 - 1.0);
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
        }
        let (covariance, cholesky) = factor(&cov, d)?;
        Ok(ProposalKernel { dim: d, covariance, cholesky, scale, steps: 1, accept_rate: f64::NAN })
    }

    /// Squared Mahalanobis length of `delta` under the unscaled covariance.
    pub fn mahalanobis_sq(&self, delta: &[f64]) -> f64 {
        let d = self.dim;
        let mut y = vec![0.0; d];
        for i in 0..d {
            let mut s = delta[i];
            for k in 0..i {
                s -= self.cholesky[i * d + k] * y[k];
            }
            y[i] = s / self.cholesky[i * d + i];
        }
        y.iter().map(|v| v * v).sum()
    }
}

fn factor(cov: &[f64], d: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let try_factor = |m: &[f64]| -> Option<Vec<f64>> {
        if m.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let chol = DMatrix::from_row_slice(d, d, m).cholesky()?;
        let l = chol.l();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                out[i * d + j] = l[(i, j)];
            }
        }
        Some(out)
    };
    if let Some(l) = try_factor(cov) {
        return Ok((cov.to_vec(), l));
    }
    let mut jittered = cov.to_vec();
    for i in 0..d {
        jittered[i * d + i] += COVARIANCE_JITTER;
    }
    match try_factor(&jittered) {
        Some(l) => Ok((jittered, l)),
        None => Err(Error::DegenerateEnsemble(
            "particle covariance is not positive definite".into(),
        )),
    }
}

/// Number of MCMC steps so that a particle stays put for all of them with
/// probability at most `c`.
pub fn steps_for(accept_rate: f64, c: f64) -> usize {
    let p = accept_rate.clamp(PILOT_ACCEPT_BOUNDS.0, PILOT_ACCEPT_BOUNDS.1);
    let r = (c.ln() / (1.0 - p).ln()).ceil();
    (r.max(1.0) as usize).min(MAX_STEPS)
}

/// Outcome of a block move for every particle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MoveReport {
    /// Accept flags, particle-major: `decisions[i * steps + r]`.
    pub decisions: Vec<bool>,
    /// Accepted squared Mahalanobis jump per particle, summed over steps.
    pub jumps: Vec<f64>,
    pub steps: usize,
}

impl MoveReport {
    pub fn accepted(&self) -> usize {
        self.decisions.iter().filter(|&&a| a).count()
    }

    pub fn accept_rate(&self) -> f64 {
        self.accepted() as f64 / self.decisions.len().max(1) as f64
    }
}

/// Settings shared by all chunks of one move sweep.
#[derive(Clone, Copy, Debug)]
pub struct MoveSpec<'a> {
    pub temperature: f64,
    pub steps: usize,
    /// Particle `i` uses `scales[i % scales.len()]`.
    pub scales: &'a [f64],
    pub width: BlockWidth,
    pub seed: u64,
}

struct ChunkScratch {
    normals: Vec<f64>,
    uniforms: Vec<f64>,
    block: Vec<f64>,
    proposals: Vec<f64>,
    block_ll: Vec<f64>,
    prop_lp: Vec<f64>,
}

/// Runs `spec.steps` Metropolis-Hastings steps on every particle,
/// distributing chunk-aligned particle ranges over the workers.
pub fn mcmc_block_move<M: ModelHooks + ?Sized>(
    ens: &mut ParticleEnsemble,
    kernel: &ProposalKernel,
    model: &M,
    spec: &MoveSpec<'_>,
    workers: &Workers,
) -> MoveReport {
    let (n, d) = (ens.len(), ens.dim);
    let part = partition(n, workers.count(), LAYOUT_WIDTH);
    let ranges = part.ranges.clone();
    let xs = split_ranges_mut(&mut ens.particles, &ranges, d);
    let lls = split_ranges_mut(&mut ens.log_liks, &ranges, 1);
    let lps = split_ranges_mut(&mut ens.log_priors, &ranges, 1);
    let jobs: Vec<_> = ranges
        .iter()
        .cloned()
        .zip(xs)
        .zip(lls)
        .zip(lps)
        .map(|(((r, x), ll), lp)| (r, x, ll, lp))
        .collect();
    let parts = workers.map(jobs, |(range, x, ll, lp)| {
        move_range(model, kernel, spec, range.start, x, ll, lp)
    });
    let mut report = MoveReport { steps: spec.steps, ..Default::default() };
    for p in parts {
        report.decisions.extend(p.decisions);
        report.jumps.extend(p.jumps);
    }
    report
}

fn move_range<M: ModelHooks + ?Sized>(
    model: &M,
    kernel: &ProposalKernel,
    spec: &MoveSpec<'_>,
    offset: usize,
    x: &mut [f64],
    ll: &mut [f64],
    lp: &mut [f64],
) -> MoveReport {
    let d = kernel.dim;
    let v = spec.width.get();
    let n = ll.len();
    let steps = spec.steps;
    let mut report = MoveReport {
        decisions: vec![false; n * steps],
        jumps: vec![0.0; n],
        steps,
    };
    let mut s = ChunkScratch {
        normals: vec![0.0; LAYOUT_WIDTH * d],
        uniforms: vec![0.0; LAYOUT_WIDTH],
        block: vec![0.0; v * d],
        proposals: vec![0.0; LAYOUT_WIDTH * d],
        block_ll: vec![0.0; v],
        prop_lp: vec![0.0; LAYOUT_WIDTH],
    };
    let mut start = 0;
    while start < n {
        let m = LAYOUT_WIDTH.min(n - start);
        let chunk = (offset + start) / LAYOUT_WIDTH;
        let mut stream = RngStream::new(spec.seed, chunk as u32);
        for r in 0..steps {
            stream
                .fill_gaussian_into(&mut s.normals, 0.0, 1.0)
                .expect("unit normal parameters are valid");
            stream
                .fill_uniform_into(&mut s.uniforms, 0.0, 1.0)
                .expect("unit interval is valid");
            for lane in 0..m {
                let i = start + lane;
                let h = spec.scales[(offset + i) % spec.scales.len()];
                let theta = &x[i * d..(i + 1) * d];
                let prop = &mut s.proposals[lane * d..(lane + 1) * d];
                for a in 0..d {
                    let mut step = 0.0;
                    for b in 0..=a {
                        step += kernel.cholesky[a * d + b] * s.normals[b * LAYOUT_WIDTH + lane];
                    }
                    prop[a] = theta[a] + h * step;
                }
                s.prop_lp[lane] = model.log_prior(prop);
            }
            let mut b0 = 0;
            while b0 < m {
                let lanes = v.min(m - b0);
                for l in 0..v {
                    let lane = if l < lanes { b0 + l } else { b0 };
                    let src = if s.prop_lp[lane] == f64::NEG_INFINITY {
                        &x[(start + lane) * d..(start + lane + 1) * d]
                    } else {
                        &s.proposals[lane * d..(lane + 1) * d]
                    };
                    for a in 0..d {
                        s.block[a * v + l] = src[a];
                    }
                }
                model.block_log_likelihood(&s.block, v, &mut s.block_ll);
                for l in 0..lanes {
                    let lane = b0 + l;
                    let i = start + lane;
                    let lp_star = s.prop_lp[lane];
                    let ll_star = s.block_ll[l];
                    let log_ratio = if lp_star == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        spec.temperature * (ll_star - ll[i]) + lp_star - lp[i]
                    };
                    let accept = s.uniforms[lane].ln() <= log_ratio;
                    if accept {
                        // The jump h L z has squared Mahalanobis length h^2 |z|^2.
                        let h = spec.scales[(offset + i) % spec.scales.len()];
                        let mut zz = 0.0;
                        for a in 0..d {
                            let z = s.normals[a * LAYOUT_WIDTH + lane];
                            zz += z * z;
                        }
                        report.jumps[i] += h * h * zz;
                        x[i * d..(i + 1) * d].copy_from_slice(&s.proposals[lane * d..(lane + 1) * d]);
                        ll[i] = ll_star;
                        lp[i] = lp_star;
                    }
                    report.decisions[i * steps + r] = accept;
                }
                b0 += v;
            }
        }
        start += m;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_count_examples() {
        assert_eq!(steps_for(0.5, 0.01), 7);
        assert_eq!(steps_for(0.999, 0.01), 1);
        assert_eq!(steps_for(0.0, 0.01), MAX_STEPS);
        assert!(steps_for(0.0, 1e-9) <= MAX_STEPS);
    }

    #[test]
    fn identical_particles_get_jittered_identity() {
        let e = ParticleEnsemble::new(3, vec![1.5; 30], vec![0.0; 10], vec![0.0; 10]);
        let k = ProposalKernel::from_ensemble(&e, 1.0).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { COVARIANCE_JITTER } else { 0.0 };
                assert_eq!(k.covariance[a * 3 + b], want);
            }
        }
        assert!((k.cholesky[0] - COVARIANCE_JITTER.sqrt()).abs() < 1e-20);
    }

    #[test]
    fn covariance_matches_direct_formula() {
        let mut s = RngStream::new(2, 0);
        let x = s.fill_gaussian(2 * 50, 0.0, 2.0).unwrap();
        let e = ParticleEnsemble::new(2, x.clone(), vec![0.0; 50], vec![0.0; 50]);
        let k = ProposalKernel::from_ensemble(&e, 1.0).unwrap();
        let col = |j: usize| -> Vec<f64> { (0..50).map(|i| x[2 * i + j]).collect() };
        let (a, b) = (col(0), col(1));
        let (ma, mb) = (crate::stats::mean(&a), crate::stats::mean(&b));
        let cab: f64 = a.iter().zip(&b).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / 49.0;
        assert!((k.covariance[1] - cab).abs() < 1e-12);
        assert!((k.covariance[0] - crate::stats::variance(&a)).abs() < 1e-12);
        let delta = [0.3, -1.2];
        let l = &k.cholesky;
        let y0 = delta[0] / l[0];
        let y1 = (delta[1] - l[2] * y0) / l[3];
        assert!((k.mahalanobis_sq(&delta) - (y0 * y0 + y1 * y1)).abs() < 1e-12);
    }
}
