//! Multi-genotype birth, death and mutation process for tuberculosis
//! transmission, simulated exactly with the Gillespie direct method.

use crate::abc::AbcModel;
use crate::blocked::BlockWidth;
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TbParams {
    pub birth: f64,
    pub death: f64,
    pub mutation: f64,
}

impl TbParams {
    pub fn new(birth: f64, death: f64, mutation: f64) -> Result<Self> {
        for r in [birth, death, mutation] {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidArgument(format!("rate {r} must be finite and non-negative")));
            }
        }
        Ok(TbParams { birth, death, mutation })
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.birth, self.death, self.mutation]
    }

    /// Rates used to generate synthetic observed data.
    pub fn reference() -> Self {
        TbParams { birth: 1.0, death: 0.5, mutation: 0.5 }
    }
}

/// Case counts per live genotype. Genotypes are dropped as soon as their
/// count reaches zero, so every stored count is at least one.
#[derive(Clone, Debug, PartialEq)]
pub struct TbState {
    pub counts: Vec<u32>,
    pub time: f64,
    total: u64,
}

impl TbState {
    pub fn new(initial_cases: u32) -> Self {
        TbState {
            counts: if initial_cases > 0 { vec![initial_cases] } else { Vec::new() },
            time: 0.0,
            total: u64::from(initial_cases),
        }
    }

    pub fn from_counts(counts: Vec<u32>) -> Self {
        let counts: Vec<u32> = counts.into_iter().filter(|&c| c > 0).collect();
        let total = counts.iter().map(|&c| u64::from(c)).sum();
        TbState { counts, time: 0.0, total }
    }

    pub fn cases(&self) -> u64 {
        self.total
    }

    pub fn genotypes(&self) -> usize {
        self.counts.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    Birth,
    Death,
    Mutation,
}

/// When to stop a run. Extinction always stops it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopRule {
    pub horizon: f64,
    pub max_cases: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { horizon: 50.0, max_cases: 10_000 }
    }
}

/// Birth, death and mutation propensities.
pub fn propensities(state: &TbState, theta: &TbParams) -> [f64; 3] {
    let n = state.total as f64;
    [theta.birth * n, theta.death * n, theta.mutation * n]
}

/// Index of the genotype holding case number `target` (0-based) in the
/// cumulative count order. Counts are summed `V` at a time and only the
/// block that crosses the target is scanned lane by lane.
pub fn select_genotype(counts: &[u32], target: u64, width: BlockWidth) -> usize {
    let v = width.get();
    let mut running = 0u64;
    let mut chunks = counts.chunks_exact(v);
    let mut base = 0;
    for chunk in chunks.by_ref() {
        let sum: u64 = chunk.iter().map(|&c| u64::from(c)).sum();
        if running + sum > target {
            return base + scan(chunk, target - running);
        }
        running += sum;
        base += v;
    }
    base + scan(chunks.remainder(), target - running)
}

fn scan(counts: &[u32], mut target: u64) -> usize {
    for (i, &c) in counts.iter().enumerate() {
        if target < u64::from(c) {
            return i;
        }
        target -= u64::from(c);
    }
    counts.len().saturating_sub(1)
}

/// Advances `state` by one event. Returns `None` without touching the state
/// when the total rate is zero. Each event consumes three uniforms: waiting
/// time, event category and genotype.
pub fn step(
    state: &mut TbState,
    theta: &TbParams,
    stream: &mut RngStream,
    width: BlockWidth,
) -> Option<(f64, Event)> {
    let [b, d, m] = propensities(state, theta);
    let total = b + d + m;
    if !(total > 0.0) {
        return None;
    }
    let wait = -(1.0 - stream.next_unit()).ln() / total;
    let pick = stream.next_unit() * total;
    let event = if pick < b {
        Event::Birth
    } else if pick < b + d {
        Event::Death
    } else {
        Event::Mutation
    };
    let target = ((stream.next_unit() * state.total as f64) as u64).min(state.total - 1);
    let g = select_genotype(&state.counts, target, width);
    match event {
        Event::Birth => {
            state.counts[g] += 1;
            state.total += 1;
        }
        Event::Death => {
            state.counts[g] -= 1;
            state.total -= 1;
            if state.counts[g] == 0 {
                state.counts.swap_remove(g);
            }
        }
        Event::Mutation => {
            state.counts[g] -= 1;
            if state.counts[g] == 0 {
                state.counts.swap_remove(g);
            }
            state.counts.push(1);
        }
    }
    state.time += wait;
    Some((wait, event))
}

/// Runs the process from `initial_cases` cases of one genotype until the
/// horizon, the case target or extinction.
pub fn gillespie_simulate(
    theta: &TbParams,
    initial_cases: u32,
    stop: StopRule,
    stream: &mut RngStream,
    width: BlockWidth,
) -> Result<TbState> {
    if initial_cases == 0 {
        return Err(Error::InvalidArgument("need at least one initial case".into()));
    }
    let mut state = TbState::new(initial_cases);
    while state.total > 0 && state.total < stop.max_cases {
        let before = state.clone();
        match step(&mut state, theta, stream, width) {
            None => {
                state.time = stop.horizon;
                break;
            }
            Some(_) if state.time > stop.horizon => {
                state = before;
                state.time = stop.horizon;
                break;
            }
            Some(_) => {}
        }
    }
    Ok(state)
}

/// Genotype count and diversity `1 - sum (X_i / N)^2`.
pub fn tb_summaries(state: &TbState) -> Result<(usize, f64)> {
    if state.total == 0 {
        return Err(Error::ExtinctPopulation);
    }
    let n = state.total as f64;
    let sq: f64 = state.counts.iter().map(|&c| (f64::from(c) / n).powi(2)).sum();
    Ok((state.counts.len(), (1.0 - sq).max(0.0)))
}

/// ABC wrapper: priors `birth ~ U(0,2)`, `death ~ U(0, birth)`,
/// `mutation ~ U(0,1)`, summaries `(G, H)`.
#[derive(Clone, Debug)]
pub struct TbModel {
    pub initial_cases: u32,
    pub stop: StopRule,
    pub width: BlockWidth,
}

impl TbModel {
    pub fn new(width: BlockWidth) -> Self {
        TbModel { initial_cases: 1, stop: StopRule::default(), width }
    }

    /// Summaries of one run, retrying up to `attempts` times on extinction.
    pub fn observe(&self, theta: &TbParams, stream: &mut RngStream, attempts: usize) -> Result<Vec<f64>> {
        let mut last = Error::ExtinctPopulation;
        for _ in 0..attempts.max(1) {
            match self.simulate_summaries(&theta.to_array(), stream) {
                Ok(s) => return Ok(s),
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}

impl AbcModel for TbModel {
    fn param_dim(&self) -> usize {
        3
    }

    fn summary_dim(&self) -> usize {
        2
    }

    fn sample_prior(&self, stream: &mut RngStream, theta: &mut [f64]) {
        let birth = stream.uniform(0.0, 2.0);
        let death = stream.uniform(0.0, birth);
        let mutation = stream.uniform(0.0, 1.0);
        theta.copy_from_slice(&[birth, death, mutation]);
    }

    fn simulate_summaries(&self, theta: &[f64], stream: &mut RngStream) -> Result<Vec<f64>> {
        let p = TbParams::new(theta[0], theta[1], theta[2])?;
        let state = gillespie_simulate(&p, self.initial_cases, self.stop, stream, self.width)?;
        let (g, h) = tb_summaries(&state)?;
        Ok(vec![g as f64, h])
    }
}
