//! Timing harness: runs an experiment over a grid of block widths and worker
//! counts, and reports per-replicate times plus mean and speedup tables.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::blocked::BlockWidth;
use crate::error::{Error, Result};
use crate::exec::Workers;
use crate::experiments::{prepare, Experiment, Sizes};

pub const RECORD_HEADER: &str = "experiment,mode,threads,block_width,replicate,runtime_seconds,failed";
pub const SUMMARY_HEADER: &str = "experiment,mode,threads,block_width,mean_runtime,speedup_vs_baseline";

/// Upper bound on the speedup from running the parallelisable part of a job
/// on `units` workers.
pub fn amdahl_bound(serial: f64, parallel: f64, units: usize) -> Result<f64> {
    if !(serial >= 0.0 && parallel >= 0.0) || units == 0 {
        return Err(Error::InvalidInput(format!(
            "need non-negative times and at least one unit, got ({serial}, {parallel}, {units})"
        )));
    }
    if serial + parallel == 0.0 {
        return Err(Error::InvalidInput("serial and parallel times are both zero".into()));
    }
    Ok((serial + parallel) / (serial + parallel / units as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Scalar,
    Blocked,
}

impl Mode {
    pub fn of(width: usize) -> Mode {
        if width == 1 {
            Mode::Scalar
        } else {
            Mode::Blocked
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Scalar => "scalar",
            Mode::Blocked => "blocked",
        }
    }
}

/// Times are kept at the six significant digits written to CSV, so a
/// record survives a write and parse unchanged.
pub fn round_time(t: f64) -> f64 {
    format!("{t:.5e}").parse().expect("formatted float parses")
}

#[derive(Clone, Debug)]
pub struct BenchmarkRecord {
    pub experiment: Experiment,
    pub mode: Mode,
    pub threads: usize,
    pub block_width: usize,
    pub replicate: usize,
    /// NaN when the run failed.
    pub runtime_seconds: f64,
    pub failed: bool,
}

impl PartialEq for BenchmarkRecord {
    fn eq(&self, o: &Self) -> bool {
        (self.experiment, self.mode, self.threads, self.block_width, self.replicate, self.failed)
            == (o.experiment, o.mode, o.threads, o.block_width, o.replicate, o.failed)
            && self.runtime_seconds.total_cmp(&o.runtime_seconds).is_eq()
    }
}

#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub experiment: Experiment,
    pub mode: Mode,
    pub threads: usize,
    pub block_width: usize,
    pub mean_runtime: f64,
    /// Baseline mean over this cell's mean; NaN without a baseline.
    pub speedup: f64,
}

impl PartialEq for SummaryRow {
    fn eq(&self, o: &Self) -> bool {
        (self.experiment, self.mode, self.threads, self.block_width) == (o.experiment, o.mode, o.threads, o.block_width)
            && self.mean_runtime.total_cmp(&o.mean_runtime).is_eq()
            && self.speedup.total_cmp(&o.speedup).is_eq()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub records: Vec<BenchmarkRecord>,
    pub summary: Vec<SummaryRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub experiment: Experiment,
    pub threads: Vec<usize>,
    pub widths: Vec<usize>,
    pub replicates: usize,
    /// Untimed-for-the-record runs before each cell's replicates.
    pub warmup: usize,
    pub sizes: Sizes,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(experiment: Experiment) -> Self {
        BenchConfig {
            experiment,
            threads: vec![1, 2, 4, 8, 16],
            widths: vec![1, 4, 8],
            replicates: 4,
            warmup: 1,
            sizes: Sizes::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads.is_empty() || self.threads.contains(&0) {
            return Err(Error::InvalidInput("thread counts must be at least 1".into()));
        }
        if self.widths.is_empty() {
            return Err(Error::InvalidInput("need at least one block width".into()));
        }
        for &v in &self.widths {
            BlockWidth::new(v)?;
        }
        if self.replicates == 0 {
            return Err(Error::InvalidInput("replicates must be at least 1".into()));
        }
        Ok(())
    }
}

/// Runs every (width, threads) cell. Setup and worker-pool construction are
/// outside the timed region.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let mut records = Vec::new();
    for &v in &config.widths {
        let prepared = prepare(config.experiment, &config.sizes, BlockWidth::new(v)?, config.seed)?;
        for &p in &config.threads {
            let workers = Workers::new(p)?;
            for _ in 0..config.warmup {
                let _ = prepared.run(&workers);
            }
            for r in 0..config.replicates {
                let start = Instant::now();
                let ok = prepared.run(&workers).is_ok();
                let elapsed = start.elapsed().as_secs_f64();
                records.push(BenchmarkRecord {
                    experiment: config.experiment,
                    mode: Mode::of(v),
                    threads: p,
                    block_width: v,
                    replicate: r,
                    runtime_seconds: if ok { round_time(elapsed) } else { f64::NAN },
                    failed: !ok,
                });
            }
        }
    }
    let summary = summarise(&records);
    Ok(BenchReport { records, summary })
}

/// Mean of each cell's successful replicates, in first-seen order, with the
/// speedup against the scalar single-worker cell of the same experiment.
pub fn summarise(records: &[BenchmarkRecord]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    let key = |r: &BenchmarkRecord| (r.experiment, r.threads, r.block_width);
    for r in records {
        if rows.iter().any(|s| (s.experiment, s.threads, s.block_width) == key(r)) {
            continue;
        }
        let times: Vec<f64> = records
            .iter()
            .filter(|o| key(o) == key(r) && !o.failed)
            .map(|o| o.runtime_seconds)
            .collect();
        let mean = if times.is_empty() { f64::NAN } else { round_time(times.iter().sum::<f64>() / times.len() as f64) };
        rows.push(SummaryRow {
            experiment: r.experiment,
            mode: r.mode,
            threads: r.threads,
            block_width: r.block_width,
            mean_runtime: mean,
            speedup: f64::NAN,
        });
    }
    for i in 0..rows.len() {
        let base = rows
            .iter()
            .find(|s| s.experiment == rows[i].experiment && s.block_width == 1 && s.threads == 1)
            .map_or(f64::NAN, |s| s.mean_runtime);
        rows[i].speedup = round_time(base / rows[i].mean_runtime);
    }
    rows
}

fn fmt_time(t: f64) -> String {
    if t.is_nan() {
        "NaN".into()
    } else {
        format!("{t:.5e}")
    }
}

impl BenchReport {
    /// Replicate rows, a blank line, then the summary table.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{RECORD_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.experiment,
                r.mode.name(),
                r.threads,
                r.block_width,
                r.replicate,
                fmt_time(r.runtime_seconds),
                u8::from(r.failed)
            );
        }
        let _ = write!(out, "\n{SUMMARY_HEADER}\n");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.experiment,
                s.mode.name(),
                s.threads,
                s.block_width,
                fmt_time(s.mean_runtime),
                fmt_time(s.speedup)
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<BenchReport> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == RECORD_HEADER => {}
            _ => return Err(parse_error(1, "missing record header")),
        }
        let mut report = BenchReport::default();
        let mut in_summary = false;
        for (i, line) in lines {
            let n = i + 1;
            if line.is_empty() {
                continue;
            }
            if line == SUMMARY_HEADER {
                in_summary = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let want = if in_summary { 6 } else { 7 };
            if f.len() != want {
                return Err(parse_error(n, &format!("expected {want} fields, found {}", f.len())));
            }
            let experiment: Experiment = f[0].parse().map_err(|_| parse_error(n, "unknown experiment"))?;
            let mode = match f[1] {
                "scalar" => Mode::Scalar,
                "blocked" => Mode::Blocked,
                _ => return Err(parse_error(n, "unknown mode")),
            };
            let int = |s: &str| s.parse::<usize>().map_err(|e| parse_error(n, &e.to_string()));
            let real = |s: &str| s.parse::<f64>().map_err(|e| parse_error(n, &e.to_string()));
            if in_summary {
                report.summary.push(SummaryRow {
                    experiment,
                    mode,
                    threads: int(f[2])?,
                    block_width: int(f[3])?,
                    mean_runtime: real(f[4])?,
                    speedup: real(f[5])?,
                });
            } else {
                report.records.push(BenchmarkRecord {
                    experiment,
                    mode,
                    threads: int(f[2])?,
                    block_width: int(f[3])?,
                    replicate: int(f[4])?,
                    runtime_seconds: real(f[5])?,
                    failed: match f[6] {
                        "0" => false,
                        "1" => true,
                        _ => return Err(parse_error(n, "failed flag must be 0 or 1")),
                    },
                });
            }
        }
        Ok(report)
    }
}

fn parse_error(line: usize, message: &str) -> Error {
    Error::Parse { line, message: message.to_owned() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(threads: usize, width: usize, replicate: usize, t: f64) -> BenchmarkRecord {
        BenchmarkRecord {
            experiment: Experiment::ToggleAbc,
            mode: Mode::of(width),
            threads,
            block_width: width,
            replicate,
            runtime_seconds: t,
            failed: t.is_nan(),
        }
    }

    #[test]
    fn amdahl_examples() {
        assert_eq!(amdahl_bound(1.0, 9.0, 9).unwrap(), 5.0);
        assert_eq!(amdahl_bound(0.0, 3.0, 7).unwrap(), 7.0);
        assert_eq!(amdahl_bound(2.0, 0.0, 16).unwrap(), 1.0);
        assert_eq!(amdahl_bound(0.0, 0.0, 2).unwrap_err().kind(), "invalid-input");
        assert!(amdahl_bound(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn empty_report_is_headers_only() {
        let text = BenchReport::default().to_csv();
        assert_eq!(text, format!("{RECORD_HEADER}\n\n{SUMMARY_HEADER}\n"));
        assert_eq!(BenchReport::parse_csv(&text).unwrap(), BenchReport::default());
    }

    #[test]
    fn summary_means_and_speedups() {
        let records = vec![
            record(1, 1, 0, 4.0),
            record(1, 1, 1, 6.0),
            record(1, 4, 0, 1.0),
            record(1, 4, 1, f64::NAN),
            record(1, 4, 2, 2.0),
        ];
        let s = summarise(&records);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].mean_runtime, s[0].speedup), (5.0, 1.0));
        assert_eq!((s[1].mean_runtime, s[1].speedup), (1.5, round_time(5.0 / 1.5)));
        assert_eq!(s[1].mode, Mode::Blocked);
    }

    #[test]
    fn no_baseline_gives_nan_speedup() {
        let s = summarise(&[record(2, 4, 0, 1.0)]);
        assert!(s[0].speedup.is_nan());
    }

    #[test]
    fn malformed_csv_reports_line() {
        let text = format!("{RECORD_HEADER}\ntoggle-abc,scalar,1,1,0,1e0\n");
        match BenchReport::parse_csv(&text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
    }
}
