mod common;

use common::ConjugateNormal;
use proptest::prelude::*;
use vexbayes_core::smc::{
    default_scales, ess, find_temperature, resample_multinomial, reweight_and_update_evidence, run_smc, ModelHooks,
    ParticleEnsemble, ScaleRule, SmcConfig,
};
use vexbayes_core::{BlockWidth, RngStream, Workers};

fn w(v: usize) -> BlockWidth {
    BlockWidth::new(v).unwrap()
}

/// Upper 1% point of chi-square with 90 degrees of freedom.
const CHI2_90_99: f64 = 124.116;

/// Index counts from 10^4 uniform resamplings of 10 particles, on each of
/// ten streams; the per-stream statistics are summed.
#[test]
fn uniform_resampling_is_multinomial() {
    let (n, trials) = (10, 10_000);
    let base = ParticleEnsemble::new(1, (0..n).map(|i| i as f64).collect(), vec![0.0; n], vec![0.0; n]);
    let mut stat = 0.0;
    for seed in 1..=10 {
        let mut s = RngStream::new(seed, 0);
        let mut counts = vec![0usize; n];
        for _ in 0..trials {
            let mut e = base.clone();
            for idx in resample_multinomial(&mut e, &mut s).unwrap() {
                counts[idx] += 1;
            }
            assert!(e.log_weights.iter().all(|&lw| lw == 0.0));
        }
        let expected = trials as f64;
        stat += counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum::<f64>();
    }
    assert!(stat < CHI2_90_99, "chi-square {stat}");
}

#[test]
fn resampling_permutes_cached_values_with_particles() {
    let n = 32;
    let mut s = RngStream::new(2, 0);
    let particles = s.fill_gaussian(2 * n, 0.0, 1.0).unwrap();
    let liks: Vec<f64> = (0..n).map(|i| -(i as f64)).collect();
    let mut e = ParticleEnsemble::new(2, particles.clone(), liks.clone(), liks.iter().map(|l| 2.0 * l).collect());
    e.log_weights = s.fill_gaussian(n, 0.0, 2.0).unwrap();
    let idx = resample_multinomial(&mut e, &mut s).unwrap();
    for (i, &j) in idx.iter().enumerate() {
        assert_eq!(e.particle(i), &particles[2 * j..2 * j + 2]);
        assert_eq!(e.log_liks[i], liks[j]);
        assert_eq!(e.log_priors[i], 2.0 * liks[j]);
    }
}

struct Flat;

impl ModelHooks for Flat {
    fn dim(&self) -> usize {
        1
    }
    fn log_prior(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn log_likelihood(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn sample_prior(&self, s: &mut RngStream, theta: &mut [f64]) {
        theta[0] = s.next_unit();
    }
}

#[test]
fn unit_likelihood_telescopes_to_zero() {
    let out = run_smc(&Flat, &SmcConfig::new(64, w(8), ScaleRule::Fixed(1.0), 3), &Workers::sequential(1)).unwrap();
    assert_eq!(out.log_evidence(), 0.0);
    assert_eq!(out.ensemble.temperature, 1.0);
}

#[test]
fn conjugate_evidence_with_adaptive_scale() {
    let model = ConjugateNormal::simulate(20, 10.0, 1.0, 40);
    let cfg = SmcConfig::new(1000, w(8), ScaleRule::Esjd(default_scales()), 6);
    let out = run_smc(&model, &cfg, &Workers::new(2).unwrap()).unwrap();
    assert!((out.log_evidence() - model.log_evidence()).abs() < 0.25);
    let temps: Vec<f64> = out.trace.iter().map(|r| r.temperature).collect();
    assert!(temps.windows(2).all(|p| p[1] > p[0]), "{temps:?}");
    assert_eq!(*temps.last().unwrap(), 1.0);
    assert!(out.trace.iter().all(|r| r.steps >= 1 && r.steps <= 100));
}

#[test]
fn output_does_not_depend_on_workers_or_width() {
    let model = ConjugateNormal::simulate(10, 3.0, 1.0, 2);
    let run = |v, p| run_smc(&model, &SmcConfig::new(96, w(v), ScaleRule::Fixed(1.5), 8), &Workers::new(p).unwrap()).unwrap();
    let first = run(1, 1);
    for (v, p) in [(4, 2), (16, 3)] {
        let other = run(v, p);
        assert_eq!(other.log_evidence(), first.log_evidence());
        assert_eq!(other.ensemble.particles, first.ensemble.particles);
    }
}

#[test]
fn non_finite_initial_likelihood_is_rejected() {
    struct Broken;
    impl ModelHooks for Broken {
        fn dim(&self) -> usize {
            1
        }
        fn log_prior(&self, _: &[f64]) -> f64 {
            0.0
        }
        fn log_likelihood(&self, theta: &[f64]) -> f64 {
            if theta[0] > 0.5 { f64::NAN } else { 0.0 }
        }
        fn sample_prior(&self, s: &mut RngStream, theta: &mut [f64]) {
            theta[0] = s.next_unit();
        }
    }
    let err = run_smc(&Broken, &SmcConfig::new(32, w(4), ScaleRule::Fixed(1.0), 0), &Workers::sequential(1)).unwrap_err();
    assert_eq!(err.kind(), "invalid-model");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interior_temperature_halves_ess(seed in 0u64..10_000, n in 8usize..200, spread in 0.5f64..50.0) {
        let mut s = RngStream::new(seed, 0);
        let liks = s.fill_gaussian(n, 0.0, spread).unwrap();
        let t = find_temperature(&vec![0.0; n], &liks, 0.0).unwrap();
        prop_assert!(t > 0.0 && t <= 1.0);
        let mut e = ParticleEnsemble::new(1, vec![0.0; n], liks, vec![0.0; n]);
        reweight_and_update_evidence(&mut e, t).unwrap();
        let after = ess(&e.log_weights).unwrap();
        prop_assert!(after >= 1.0 && after <= n as f64 + 1e-9);
        if t < 1.0 {
            prop_assert!((after - n as f64 / 2.0).abs() <= 1.0, "ess {} for n {}", after, n);
        } else {
            prop_assert!(after >= n as f64 / 2.0 - 1.0);
        }
    }

    #[test]
    fn ess_is_bounded(lw in prop::collection::vec(-30.0f64..30.0, 1..100)) {
        let e = ess(&lw).unwrap();
        prop_assert!(e >= 1.0 - 1e-12 && e <= lw.len() as f64 + 1e-9);
    }
}
