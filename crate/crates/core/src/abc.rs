//! Fixed-size prior predictive sampling for ABC rejection.
//!
//! Rather than looping until a draw lands within a preset tolerance, we
//! generate `N` joint draws `(theta, S(D))` up front and choose the
//! tolerance afterwards from the empirical distribution of discrepancies.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::blocked::partition;
use crate::error::{Error, Result};
use crate::exec::Workers;
use crate::rng::RngStream;
use crate::stats::quantile_sorted;

/// A simulator usable for prior predictive sampling.
pub trait AbcModel: Sync {
    fn param_dim(&self) -> usize;
    fn summary_dim(&self) -> usize;
    fn sample_prior(&self, stream: &mut RngStream, theta: &mut [f64]);
    fn simulate_summaries(&self, theta: &[f64], stream: &mut RngStream) -> Result<Vec<f64>>;
}

/// `N` prior predictive rows. `params` is `N x d` and `summaries` is `N x k`,
/// both row-major. Failed rows carry NaN summaries and infinite discrepancy.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorPredictiveSet {
    pub param_dim: usize,
    pub summary_dim: usize,
    pub params: Vec<f64>,
    pub summaries: Vec<f64>,
    pub discrepancies: Vec<f64>,
    pub failed: Vec<bool>,
}

impl PriorPredictiveSet {
    pub fn len(&self) -> usize {
        self.discrepancies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.discrepancies.is_empty()
    }

    pub fn params_row(&self, i: usize) -> &[f64] {
        &self.params[i * self.param_dim..(i + 1) * self.param_dim]
    }

    pub fn summary_row(&self, i: usize) -> &[f64] {
        &self.summaries[i * self.summary_dim..(i + 1) * self.summary_dim]
    }

    pub fn failures(&self) -> usize {
        self.failed.iter().filter(|&&f| f).count()
    }

    /// CSV with header `row,theta_1..theta_d,s_1..s_k,rho,failed`; reals
    /// carry 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for j in 1..=self.param_dim {
            let _ = write!(out, ",theta_{j}");
        }
        for j in 1..=self.summary_dim {
            let _ = write!(out, ",s_{j}");
        }
        out.push_str(",rho,failed\n");
        for i in 0..self.len() {
            let _ = write!(out, "{i}");
            for x in self.params_row(i).iter().chain(self.summary_row(i)) {
                let _ = write!(out, ",{x:.16e}");
            }
            let _ = writeln!(
                out,
                ",{:.16e},{}",
                self.discrepancies[i],
                u8::from(self.failed[i])
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Euclidean distance between summary vectors.
pub fn discrepancy(s_sim: &[f64], s_obs: &[f64]) -> Result<f64> {
    if s_sim.len() != s_obs.len() {
        return Err(Error::InvalidSummary {
            left: s_sim.len(),
            right: s_obs.len(),
        });
    }
    Ok(s_sim
        .iter()
        .zip(s_obs)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

struct WorkerRows {
    params: Vec<f64>,
    summaries: Vec<f64>,
    failed: Vec<bool>,
}

/// Draws `n` joint prior predictive samples. Worker `w` of the static
/// partition owns stream `(seed, w)`, so output is reproducible for a fixed
/// `(seed, worker count)`.
pub fn run_prior_predictive<M: AbcModel>(
    model: &M,
    observed: &[f64],
    n: usize,
    workers: &Workers,
    seed: u64,
) -> Result<PriorPredictiveSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one draw".into()));
    }
    let (d, k) = (model.param_dim(), model.summary_dim());
    if observed.len() != k {
        return Err(Error::InvalidSummary {
            left: k,
            right: observed.len(),
        });
    }
    let part = partition(n, workers.count(), 1);
    let jobs: Vec<(usize, std::ops::Range<usize>)> =
        part.ranges.iter().cloned().enumerate().collect();
    let chunks = workers.map(jobs, |(w, range)| {
        let mut stream = RngStream::new(seed, w as u32);
        let mut rows = WorkerRows {
            params: vec![0.0; range.len() * d],
            summaries: vec![f64::NAN; range.len() * k],
            failed: vec![false; range.len()],
        };
        for i in 0..range.len() {
            let theta = &mut rows.params[i * d..(i + 1) * d];
            model.sample_prior(&mut stream, theta);
            match model.simulate_summaries(theta, &mut stream) {
                Ok(s) if s.len() == k && s.iter().all(|x| x.is_finite()) => {
                    rows.summaries[i * k..(i + 1) * k].copy_from_slice(&s);
                }
                _ => rows.failed[i] = true,
            }
        }
        rows
    });

    let mut set = PriorPredictiveSet {
        param_dim: d,
        summary_dim: k,
        params: Vec::with_capacity(n * d),
        summaries: Vec::with_capacity(n * k),
        discrepancies: Vec::with_capacity(n),
        failed: Vec::with_capacity(n),
    };
    for chunk in chunks {
        set.params.extend(chunk.params);
        set.summaries.extend(chunk.summaries);
        set.failed.extend(chunk.failed);
    }
    for i in 0..n {
        let rho = if set.failed[i] {
            f64::INFINITY
        } else {
            discrepancy(set.summary_row(i), observed)?
        };
        set.discrepancies.push(rho);
    }
    Ok(set)
}

/// Picks the tolerance as the `accept_fraction` quantile of the non-failed
/// discrepancies and returns it with the accepted row indices.
///
/// The tolerance is raised to the `ceil(q * n)`-th order statistic when the
/// interpolated quantile falls below it, so at least that many rows are
/// always accepted.
pub fn select_epsilon(set: &PriorPredictiveSet, accept_fraction: f64) -> Result<(f64, Vec<usize>)> {
    if !(accept_fraction > 0.0 && accept_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "accept fraction {accept_fraction} outside (0, 1]"
        )));
    }
    let mut rho: Vec<f64> = set
        .discrepancies
        .iter()
        .zip(&set.failed)
        .filter(|(_, &f)| !f)
        .map(|(&r, _)| r)
        .collect();
    if rho.is_empty() {
        return Err(Error::EmptySet);
    }
    rho.sort_by(f64::total_cmp);
    let n = rho.len();
    let min_count = ((accept_fraction * n as f64).ceil() as usize).clamp(1, n);
    let epsilon = quantile_sorted(&rho, accept_fraction).max(rho[min_count - 1]);
    let accepted = set
        .discrepancies
        .iter()
        .zip(&set.failed)
        .enumerate()
        .filter(|(_, (&r, &f))| !f && r <= epsilon)
        .map(|(i, _)| i)
        .collect();
    Ok((epsilon, accepted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set_from(rho: &[f64]) -> PriorPredictiveSet {
        PriorPredictiveSet {
            param_dim: 1,
            summary_dim: 1,
            params: vec![0.0; rho.len()],
            summaries: vec![0.0; rho.len()],
            discrepancies: rho.to_vec(),
            failed: vec![false; rho.len()],
        }
    }

    #[test]
    fn discrepancy_examples() {
        assert_eq!(discrepancy(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(discrepancy(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(
            discrepancy(&[0.0], &[1.0, 2.0]).unwrap_err().kind(),
            "invalid-summary"
        );
    }

    #[test]
    fn discrepancy_matches_sum_of_squares() {
        let mut s = RngStream::new(4, 0);
        for _ in 0..100 {
            let a = s.fill_gaussian(19, 300.0, 40.0).unwrap();
            let b = s.fill_gaussian(19, 300.0, 40.0).unwrap();
            let mut ss = 0.0;
            for i in 0..19 {
                ss += (a[i] - b[i]).powi(2);
            }
            let oracle = ss.sqrt();
            let got = discrepancy(&a, &b).unwrap();
            assert!((got - oracle).abs() <= 1e-15 * oracle);
        }
    }

    #[test]
    fn epsilon_examples() {
        let set = set_from(&[1.0, 2.0, 3.0, 4.0]);
        let (eps, acc) = select_epsilon(&set, 1.0).unwrap();
        assert_eq!((eps, acc.len()), (4.0, 4));
        let (eps, acc) = select_epsilon(&set, 0.5).unwrap();
        assert_eq!(eps, 2.5);
        assert_eq!(acc, vec![0, 1]);
    }

    #[test]
    fn epsilon_on_large_set_keeps_enough_rows() {
        let mut s = RngStream::new(1, 0);
        let rho = s.fill_uniform(8064, 0.0, 10.0).unwrap();
        let (_, acc) = select_epsilon(&set_from(&rho), 0.01).unwrap();
        assert!(acc.len() >= 81);
    }

    #[test]
    fn failed_rows_are_skipped() {
        let mut set = set_from(&[1.0, f64::INFINITY, 3.0]);
        set.failed[1] = true;
        let (eps, acc) = select_epsilon(&set, 1.0).unwrap();
        assert_eq!((eps, acc), (3.0, vec![0, 2]));
        set.failed = vec![true; 3];
        assert_eq!(select_epsilon(&set, 0.5).unwrap_err().kind(), "empty-set");
    }

    proptest! {
        #[test]
        fn acceptance_rule(rho in prop::collection::vec(0.0f64..100.0, 1..200), q in 0.001f64..1.0, q2 in 0.001f64..1.0) {
            let set = set_from(&rho);
            let (eps, acc) = select_epsilon(&set, q).unwrap();
            let expected: Vec<usize> = (0..rho.len()).filter(|&i| rho[i] <= eps).collect();
            prop_assert_eq!(&acc, &expected);
            prop_assert!(acc.len() >= (q * rho.len() as f64).ceil() as usize);
            let (lo, hi) = if q < q2 { (q, q2) } else { (q2, q) };
            let small = select_epsilon(&set, lo).unwrap().1;
            let large = select_epsilon(&set, hi).unwrap().1;
            prop_assert!(small.iter().all(|i| large.contains(i)));
        }
    }

    struct Flat;

    impl AbcModel for Flat {
        fn param_dim(&self) -> usize {
            2
        }
        fn summary_dim(&self) -> usize {
            3
        }
        fn sample_prior(&self, stream: &mut RngStream, theta: &mut [f64]) {
            stream.fill_uniform_into(theta, 0.0, 1.0).unwrap();
        }
        fn simulate_summaries(&self, theta: &[f64], stream: &mut RngStream) -> Result<Vec<f64>> {
            if theta[0] < 0.1 {
                return Err(Error::InvalidModel("synthetic failure".into()));
            }
            let c = theta[1] + stream.next_unit();
            Ok(vec![c; 3])
        }
    }

    #[test]
    fn prior_predictive_is_deterministic_per_workers() {
        let w1 = Workers::sequential(1);
        let a = run_prior_predictive(&Flat, &[0.5; 3], 40, &w1, 7).unwrap();
        let b = run_prior_predictive(&Flat, &[0.5; 3], 40, &w1, 7).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let w3 = Workers::new(3).unwrap();
        let c = run_prior_predictive(&Flat, &[0.5; 3], 40, &w3, 7).unwrap();
        let d = run_prior_predictive(&Flat, &[0.5; 3], 40, &Workers::sequential(3), 7).unwrap();
        assert_eq!(c.to_csv(), d.to_csv());
    }

    #[test]
    fn failures_are_flagged_not_fatal() {
        let set = run_prior_predictive(&Flat, &[0.5; 3], 200, &Workers::sequential(2), 3).unwrap();
        assert!(set.failures() > 0 && set.failures() < 200);
        for i in 0..set.len() {
            assert_eq!(set.failed[i], set.discrepancies[i].is_infinite());
            assert!(set.discrepancies[i] >= 0.0);
        }
        let csv = set.to_csv();
        assert!(csv.starts_with("row,theta_1,theta_2,s_1,s_2,s_3,rho,failed\n"));
        assert_eq!(csv.lines().count(), 201);
    }

    #[test]
    fn observed_length_checked() {
        let err = run_prior_predictive(&Flat, &[0.5; 2], 4, &Workers::sequential(1), 1).unwrap_err();
        assert_eq!(err.kind(), "invalid-summary");
    }
}
