//! Weighted particle ensemble and the coordinator-side operations: ESS,
//! temperature search, reweighting and multinomial resampling.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stats::log_sum_exp;

/// Absolute tolerance on the temperature increment.
pub const TEMPERATURE_TOLERANCE: f64 = 1e-10;

/// `n` particles of dimension `dim`, stored row-major, with cached log
/// likelihoods and log priors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub dim: usize,
    pub particles: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub log_liks: Vec<f64>,
    pub log_priors: Vec<f64>,
    pub temperature: f64,
    pub log_evidence: f64,
    pub iteration: usize,
}

impl ParticleEnsemble {
    /// Equal-weight ensemble at temperature zero.
    pub fn new(dim: usize, particles: Vec<f64>, log_liks: Vec<f64>, log_priors: Vec<f64>) -> Self {
        let n = log_liks.len();
        debug_assert_eq!(particles.len(), n * dim);
        ParticleEnsemble {
            dim,
            particles,
            log_weights: vec![0.0; n],
            log_liks,
            log_priors,
            temperature: 0.0,
            log_evidence: 0.0,
            iteration: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.log_liks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_liks.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i * self.dim..(i + 1) * self.dim]
    }

    /// Normalised weights.
    pub fn weights(&self) -> Result<Vec<f64>> {
        let lse = log_sum_exp(&self.log_weights);
        if !lse.is_finite() {
            return Err(Error::DegenerateEnsemble("weights do not normalise".into()));
        }
        Ok(self.log_weights.iter().map(|&w| (w - lse).exp()).collect())
    }

    /// Column `j` of the particle matrix.
    pub fn component(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.particles[i * self.dim + j]).collect()
    }
}

/// `(sum w)^2 / sum w^2` on max-shifted weights.
pub fn ess(log_weights: &[f64]) -> Result<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateEnsemble("no particle has finite weight".into()));
    }
    let (mut s, mut s2) = (0.0, 0.0);
    for &lw in log_weights {
        let w = (lw - max).exp();
        s += w;
        s2 += w * w;
    }
    Ok(s * s / s2)
}

fn shifted(log_weights: &[f64], log_liks: &[f64], dt: f64, out: &mut [f64]) {
    for ((o, &lw), &ll) in out.iter_mut().zip(log_weights).zip(log_liks) {
        *o = if ll == f64::NEG_INFINITY { f64::NEG_INFINITY } else { lw + dt * ll };
    }
}

/// Next temperature: bisection on the increment so that the reweighted ESS
/// drops to half the ensemble size. Returns 1 when even the full step keeps
/// the ESS at or above half. The result is always strictly above `t`.
pub fn find_temperature(log_weights: &[f64], log_liks: &[f64], t: f64) -> Result<f64> {
    let target = log_weights.len() as f64 / 2.0;
    let mut scratch = vec![0.0; log_weights.len()];
    let mut ess_at = |dt: f64| -> f64 {
        shifted(log_weights, log_liks, dt, &mut scratch);
        ess(&scratch).unwrap_or(0.0)
    };
    let remaining = 1.0 - t;
    if ess_at(remaining) >= target {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, remaining);
    while hi - lo > TEMPERATURE_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if ess_at(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let next = t + hi;
    Ok(if next > t { next.min(1.0) } else { 1.0 })
}

/// Applies the tempered likelihood increment to the weights and adds the
/// log normalising-constant ratio to the running evidence.
pub fn reweight_and_update_evidence(ens: &mut ParticleEnsemble, t_next: f64) -> Result<()> {
    let dt = t_next - ens.temperature;
    let before = log_sum_exp(&ens.log_weights);
    let mut next = vec![0.0; ens.len()];
    shifted(&ens.log_weights, &ens.log_liks, dt, &mut next);
    let after = log_sum_exp(&next);
    if !after.is_finite() {
        return Err(Error::DegenerateEnsemble(
            "every particle has zero likelihood".into(),
        ));
    }
    ens.log_evidence += after - before;
    ens.log_weights = next;
    ens.temperature = t_next;
    Ok(())
}

/// Multinomial resampling by binary search over the cumulative weights.
/// Returns the selected ancestor indices.
pub fn resample_multinomial(ens: &mut ParticleEnsemble, stream: &mut RngStream) -> Result<Vec<usize>> {
    let n = ens.len();
    let max = ens.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateEnsemble("no particle has finite weight".into()));
    }
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &lw in &ens.log_weights {
        acc += (lw - max).exp();
        cumulative.push(acc);
    }
    let ancestors: Vec<usize> = (0..n)
        .map(|_| {
            let u = stream.next_unit() * acc;
            cumulative.partition_point(|&c| c <= u).min(n - 1)
        })
        .collect();

    let d = ens.dim;
    let mut particles = Vec::with_capacity(n * d);
    for &a in &ancestors {
        particles.extend_from_slice(&ens.particles[a * d..(a + 1) * d]);
    }
    ens.particles = particles;
    ens.log_liks = ancestors.iter().map(|&a| ens.log_liks[a]).collect();
    ens.log_priors = ancestors.iter().map(|&a| ens.log_priors[a]).collect();
    ens.log_weights = vec![0.0; n];
    Ok(ancestors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ess_examples() {
        assert_eq!(ess(&[0.0; 500]).unwrap(), 500.0);
        let mut one = vec![f64::NEG_INFINITY; 10];
        one[3] = 0.0;
        assert_eq!(ess(&one).unwrap(), 1.0);
        let w = [1f64.ln(), 1f64.ln(), 2f64.ln()];
        assert!((ess(&w).unwrap() - 16.0 / 6.0).abs() < 1e-14);
        assert_eq!(
            ess(&[f64::NEG_INFINITY; 3]).unwrap_err().kind(),
            "degenerate-ensemble"
        );
    }

    #[test]
    fn constant_likelihood_jumps_to_one() {
        assert_eq!(find_temperature(&[0.0; 8], &[-3.0; 8], 0.0).unwrap(), 1.0);
    }

    #[test]
    fn temperature_matches_closed_form() {
        // ESS of weights (1, r, r, r) equals 2 where 3r^2 + 6r - 1 = 0.
        let big = 1e4;
        let r = (-6.0 + 48f64.sqrt()) / 6.0;
        let expected = -r.ln() / big;
        let t = find_temperature(&[0.0; 4], &[0.0, -big, -big, -big], 0.0).unwrap();
        assert!((t - expected).abs() <= 2e-10, "{t} vs {expected}");
    }

    #[test]
    fn interior_step_hits_half_ess() {
        let mut s = RngStream::new(3, 0);
        let ll = s.fill_gaussian(200, -50.0, 20.0).unwrap();
        let t = find_temperature(&[0.0; 200], &ll, 0.2).unwrap();
        assert!(t > 0.2 && t < 1.0);
        let lw: Vec<f64> = ll.iter().map(|l| (t - 0.2) * l).collect();
        assert!((ess(&lw).unwrap() - 100.0).abs() < 1.0);
    }

    #[test]
    fn evidence_increment_examples() {
        let mut e = ParticleEnsemble::new(1, vec![0.0, 1.0], vec![2f64.ln(), 0.0], vec![0.0; 2]);
        reweight_and_update_evidence(&mut e, 1.0).unwrap();
        assert!((e.log_evidence - 1.5f64.ln()).abs() < 1e-15);

        let mut e = ParticleEnsemble::new(1, vec![0.0; 3], vec![-2.5; 3], vec![0.0; 3]);
        reweight_and_update_evidence(&mut e, 0.4).unwrap();
        assert!((e.log_evidence - (-2.5 * 0.4)).abs() < 1e-15);
        assert_eq!(e.temperature, 0.4);
    }

    #[test]
    fn point_mass_resamples_to_constant() {
        let mut e = ParticleEnsemble::new(1, (0..6).map(f64::from).collect(), vec![0.0; 6], vec![0.0; 6]);
        e.log_weights = vec![f64::NEG_INFINITY; 6];
        e.log_weights[0] = 0.0;
        let anc = resample_multinomial(&mut e, &mut RngStream::new(1, 0)).unwrap();
        assert!(anc.iter().all(|&a| a == 0));
        assert!(e.particles.iter().all(|&x| x == 0.0));
        assert_eq!(e.log_weights, vec![0.0; 6]);
    }
}
