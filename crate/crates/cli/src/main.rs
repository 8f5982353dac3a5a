use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vexbayes_core::bench::{run_benchmark, BenchConfig};
use vexbayes_core::experiments::{prepare, Experiment, Sizes};
use vexbayes_core::{BlockWidth, Error, Workers};

const THREADS_ENV: &str = "VEXBAYES_THREADS";

#[derive(Parser)]
#[command(name = "vexbayes", version, about = "Blocked and parallel Monte Carlo experiments and their benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time an experiment over block widths and thread counts and write a CSV table.
    Bench(BenchArgs),
    /// Run one analysis and write its outputs into a directory.
    Run(RunArgs),
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    experiment: Experiment,
    /// Worker counts; VEXBAYES_THREADS overrides this when set.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    threads: Vec<usize>,
    #[arg(long = "block-width", value_delimiter = ',', default_value = "1,4,8")]
    block_width: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    replicates: usize,
    /// Discarded runs before each cell's replicates.
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sizes: SizeArgs,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    experiment: Experiment,
    /// Worker count; VEXBAYES_THREADS overrides this when set.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long = "block-width", default_value_t = 8)]
    block_width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sizes: SizeArgs,
}

#[derive(Args)]
struct SizeArgs {
    /// Prior predictive draws (toggle-abc, tb).
    #[arg(long)]
    n: Option<usize>,
    /// Cells per dataset (toggle-abc).
    #[arg(long)]
    cells: Option<usize>,
    /// Time steps per trajectory (toggle-abc).
    #[arg(long)]
    steps: Option<usize>,
    /// Fraction of draws accepted (toggle-abc, tb).
    #[arg(long)]
    quantile: Option<f64>,
    /// SMC particles (weakinfo default 500, bege default 1024).
    #[arg(long)]
    particles: Option<usize>,
    /// Hyperparameter values tested (weakinfo).
    #[arg(long)]
    hypers: Option<usize>,
    /// Prior predictive datasets per hyperparameter (weakinfo).
    #[arg(long)]
    datasets: Option<usize>,
    /// Fresh base-prior datasets for every hyperparameter (weakinfo).
    #[arg(long)]
    redraw_base: bool,
    /// Leading months of the bundled return series (bege).
    #[arg(long)]
    months: Option<usize>,
}

impl SizeArgs {
    fn resolve(&self, experiment: Experiment) -> Result<Sizes, Error> {
        let d = Sizes::default();
        let default_particles = if experiment == Experiment::Bege { 1024 } else { d.particles };
        let sizes = Sizes {
            draws: self.n.unwrap_or(d.draws),
            cells: self.cells.unwrap_or(d.cells),
            steps: self.steps.unwrap_or(d.steps),
            accept_fraction: self.quantile.unwrap_or(d.accept_fraction),
            particles: self.particles.unwrap_or(default_particles),
            hypers: self.hypers.unwrap_or(d.hypers),
            datasets: self.datasets.unwrap_or(d.datasets),
            redraw_base: self.redraw_base,
            months: self.months,
        };
        if [sizes.draws, sizes.cells, sizes.steps, sizes.particles, sizes.hypers, sizes.datasets].contains(&0) {
            return Err(Error::InvalidInput("sizes must be at least 1".into()));
        }
        Ok(sizes)
    }
}

/// Thread counts from the environment, if the variable is set and non-empty.
fn env_threads() -> Result<Option<Vec<usize>>, Error> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    if raw.trim().is_empty() {
        return Ok(None);
    }
    raw.split(',')
        .map(|s| match s.trim().parse::<usize>() {
            Ok(p) if p >= 1 => Ok(p),
            _ => Err(Error::InvalidInput(format!("{THREADS_ENV}='{raw}' is not a list of positive integers"))),
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn bench(args: BenchArgs) -> Result<(), Error> {
    let threads = env_threads()?.unwrap_or(args.threads);
    let config = BenchConfig {
        experiment: args.experiment,
        threads,
        widths: args.block_width,
        replicates: args.replicates,
        warmup: args.warmup,
        sizes: args.sizes.resolve(args.experiment)?,
        seed: args.seed,
    };
    let report = run_benchmark(&config)?;
    report.write_csv(&args.out)?;
    for s in &report.summary {
        println!(
            "{} {:<7} P={:<2} V={:<2} mean {:.4e} s  speedup {:.2}",
            s.experiment,
            s.mode.name(),
            s.threads,
            s.block_width,
            s.mean_runtime,
            s.speedup
        );
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Error> {
    let threads = match env_threads()? {
        Some(list) if list.len() == 1 => list[0],
        Some(_) => return Err(Error::InvalidInput(format!("{THREADS_ENV} must hold a single count for run"))),
        None => args.threads,
    };
    let sizes = args.sizes.resolve(args.experiment)?;
    let workers = Workers::new(threads)?;
    let prepared = prepare(args.experiment, &sizes, BlockWidth::new(args.block_width)?, args.seed)?;
    let artifacts = prepared.run(&workers)?;
    std::fs::create_dir_all(&args.out)?;
    for a in artifacts {
        let path = Path::new(&args.out).join(&a.name);
        std::fs::write(&path, a.contents)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            return fail("usage", text.lines().next().unwrap_or_default().trim_start_matches("error: "));
        }
    };
    let result = match cli.command {
        Command::Bench(args) => bench(args),
        Command::Run(args) => run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}
