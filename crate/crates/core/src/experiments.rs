//! The four benchmarked analyses, split into setup and a timed body.
//!
//! Setup simulates observed data and builds models; `Prepared::run` does
//! the sampling and returns its outputs as named CSV documents.

use std::fmt;
use std::str::FromStr;

use crate::abc::{run_prior_predictive, select_epsilon, AbcModel, PriorPredictiveSet};
use crate::bege::{posterior_csv, returns_csv, run_bege_inference, synthetic_series, BegeConfig};
use crate::blocked::BlockWidth;
use crate::error::{Error, Result};
use crate::exec::Workers;
use crate::rng::{derive_seed, RngStream};
use crate::smc::trace_csv;
use crate::tb::{TbModel, TbParams};
use crate::toggle::{ToggleModel, ToggleParams};
use crate::weak_info::{run_weak_info_test, WeakInfoConfig};

const OBSERVED_ROLE: u64 = 21;
const OBSERVED_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    ToggleAbc,
    WeakInfo,
    Bege,
    Tb,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Experiment::ToggleAbc, Experiment::WeakInfo, Experiment::Bege, Experiment::Tb];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ToggleAbc => "toggle-abc",
            Experiment::WeakInfo => "weakinfo",
            Experiment::Bege => "bege",
            Experiment::Tb => "tb",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown experiment '{s}' (expected toggle-abc, weakinfo, bege or tb)")))
    }
}

/// Problem sizes. Each experiment reads only the fields it needs.
#[derive(Clone, Debug, PartialEq)]
pub struct Sizes {
    /// Prior predictive draws for the ABC experiments.
    pub draws: usize,
    /// Cells per toggle-switch dataset.
    pub cells: usize,
    /// Euler-Maruyama steps per toggle-switch trajectory.
    pub steps: usize,
    /// Fraction of draws accepted by ABC.
    pub accept_fraction: f64,
    /// SMC particles for the weakinfo and bege experiments.
    pub particles: usize,
    /// Hyperparameter values tested by weakinfo.
    pub hypers: usize,
    /// Prior predictive datasets per hyperparameter.
    pub datasets: usize,
    pub redraw_base: bool,
    /// Leading months of the bundled return series; `None` uses all of it.
    pub months: Option<usize>,
}

impl Default for Sizes {
    fn default() -> Self {
        Sizes {
            draws: 8064,
            cells: 8000,
            steps: 600,
            accept_fraction: 0.01,
            particles: 500,
            hypers: 400,
            datasets: 400,
            redraw_base: false,
            months: None,
        }
    }
}

/// One named output document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

fn artifact(name: &str, contents: String) -> Artifact {
    Artifact { name: name.to_owned(), contents }
}

enum Body {
    Toggle(ToggleModel, Vec<f64>),
    Tb(TbModel, Vec<f64>),
    WeakInfo(WeakInfoConfig),
    Bege(Vec<f64>, BegeConfig),
}

/// An experiment with its data and models ready; only `run` is timed.
pub struct Prepared {
    experiment: Experiment,
    sizes: Sizes,
    seed: u64,
    body: Body,
}

pub fn prepare(experiment: Experiment, sizes: &Sizes, width: BlockWidth, seed: u64) -> Result<Prepared> {
    let mut observed_stream = RngStream::new(derive_seed(seed, &[OBSERVED_ROLE]), 0);
    let body = match experiment {
        Experiment::ToggleAbc => {
            let model = ToggleModel::new(sizes.steps, sizes.cells, width)?;
            let observed = model.observe(&toggle_truth(), &mut observed_stream)?;
            Body::Toggle(model, observed)
        }
        Experiment::Tb => {
            let model = TbModel::new(width);
            let observed = model.observe(&TbParams::reference(), &mut observed_stream, OBSERVED_ATTEMPTS)?;
            Body::Tb(model, observed)
        }
        Experiment::WeakInfo => Body::WeakInfo(WeakInfoConfig {
            hypers: sizes.hypers,
            datasets: sizes.datasets,
            particles: sizes.particles,
            width,
            seed,
            redraw_base: sizes.redraw_base,
            ..WeakInfoConfig::default()
        }),
        Experiment::Bege => {
            let mut returns = synthetic_series();
            if let Some(m) = sizes.months {
                if m == 0 || m > returns.len() {
                    return Err(Error::InvalidArgument(format!("months must be in 1..={}", returns.len())));
                }
                returns.truncate(m);
            }
            let config = BegeConfig { particles: sizes.particles, width, seed, ..BegeConfig::default() };
            Body::Bege(returns, config)
        }
    };
    Ok(Prepared { experiment, sizes: sizes.clone(), seed, body })
}

/// Parameters that generate the toggle-switch observed data.
pub fn toggle_truth() -> ToggleParams {
    ToggleParams::prior_midpoint()
}

impl Prepared {
    pub fn experiment(&self) -> Experiment {
        self.experiment
    }

    pub fn run(&self, workers: &Workers) -> Result<Vec<Artifact>> {
        match &self.body {
            Body::Toggle(model, observed) => self.abc(model, observed, workers),
            Body::Tb(model, observed) => self.abc(model, observed, workers),
            Body::WeakInfo(config) => {
                let table = run_weak_info_test(config, workers)?;
                Ok(vec![artifact("cutoffs.csv", table.to_csv())])
            }
            Body::Bege(returns, config) => {
                let out = run_bege_inference(returns, config, workers)?;
                Ok(vec![
                    artifact("returns.csv", returns_csv(returns)),
                    artifact("posterior.csv", posterior_csv(&out)?),
                    artifact("trace.csv", trace_csv(&out.trace)),
                ])
            }
        }
    }

    fn abc<M: AbcModel>(&self, model: &M, observed: &[f64], workers: &Workers) -> Result<Vec<Artifact>> {
        let set = run_prior_predictive(model, observed, self.sizes.draws, workers, self.seed)?;
        let (epsilon, accepted) = select_epsilon(&set, self.sizes.accept_fraction)?;
        Ok(vec![
            artifact("prior_predictive.csv", set.to_csv()),
            artifact("accepted.csv", accepted_csv(&set, epsilon, &accepted)),
        ])
    }
}

fn accepted_csv(set: &PriorPredictiveSet, epsilon: f64, accepted: &[usize]) -> String {
    let mut out = String::from("row");
    for j in 1..=set.param_dim {
        out.push_str(&format!(",theta_{j}"));
    }
    out.push_str(",rho,epsilon\n");
    for &i in accepted {
        out.push_str(&i.to_string());
        for x in set.params_row(i) {
            out.push_str(&format!(",{x:.16e}"));
        }
        out.push_str(&format!(",{:.16e},{epsilon:.16e}\n", set.discrepancies[i]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert_eq!("abc".parse::<Experiment>().unwrap_err().kind(), "invalid-input");
    }

    #[test]
    fn toggle_outputs_are_reproducible() {
        let sizes = Sizes { draws: 40, cells: 32, steps: 20, accept_fraction: 0.1, ..Sizes::default() };
        let run = |v| prepare(Experiment::ToggleAbc, &sizes, BlockWidth::new(v).unwrap(), 3).unwrap().run(&Workers::sequential(2)).unwrap();
        let a = run(1);
        assert_eq!(a, run(4));
        assert_eq!(a[1].contents.lines().count(), 1 + 4);
    }

    #[test]
    fn bege_rejects_bad_months() {
        let sizes = Sizes { months: Some(0), ..Sizes::default() };
        assert!(prepare(Experiment::Bege, &sizes, BlockWidth::SCALAR, 0).is_err());
    }
}
