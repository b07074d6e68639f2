use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};

use taskrt::bench::{self, BenchKind, BenchSpec, DdastOverrides, SweepParam};
use taskrt::RuntimeMode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Benchmark {
    Matmul,
    Sparselu,
    Nbody,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Baseline,
    Ddast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Run a task-parallel benchmark on the taskrt runtime.
#[derive(Debug, Parser)]
#[command(name = "bench", version)]
struct Args {
    #[arg(value_enum, env = "TASKRT_BENCHMARK")]
    benchmark: Benchmark,
    /// Matrix dimension in elements (matmul, sparselu).
    #[arg(long, env = "TASKRT_MS")]
    ms: Option<usize>,
    /// Block dimension: elements per side, or particles per block for nbody.
    #[arg(long, env = "TASKRT_BS")]
    bs: Option<usize>,
    #[arg(long, env = "TASKRT_PARTICLES")]
    particles: Option<usize>,
    #[arg(long, env = "TASKRT_TIMESTEPS")]
    timesteps: Option<usize>,
    #[arg(long, env = "TASKRT_THREADS", default_value_t = 1)]
    threads: usize,
    #[arg(long, value_enum, env = "TASKRT_MODE", default_value = "ddast")]
    mode: Mode,
    #[arg(long, env = "TASKRT_MAX_DDAST_THREADS")]
    max_ddast_threads: Option<usize>,
    #[arg(long, env = "TASKRT_MAX_SPINS")]
    max_spins: Option<usize>,
    #[arg(long, env = "TASKRT_MAX_OPS_THREAD")]
    max_ops_thread: Option<usize>,
    #[arg(long, env = "TASKRT_MIN_READY_TASKS")]
    min_ready_tasks: Option<usize>,
    #[arg(long, env = "TASKRT_REPETITIONS", default_value_t = 5)]
    repetitions: usize,
    /// Write an event trace (CSV) of the last repetition here.
    #[arg(long, env = "TASKRT_TRACE_PATH")]
    trace: Option<PathBuf>,
    /// Only count the tasks the benchmark would create.
    #[arg(long, env = "TASKRT_DRY_RUN")]
    dry_run: bool,
    #[arg(long, value_enum, env = "TASKRT_REPORT", default_value = "json")]
    report: Format,
    /// Sweep one DDAST parameter over 1, 2, 4, ..., 128 and print CSV.
    #[arg(long, env = "TASKRT_SWEEP")]
    sweep: Option<String>,
}

impl Args {
    fn spec(&self) -> BenchSpec {
        let kind = match self.benchmark {
            Benchmark::Matmul => BenchKind::Matmul,
            Benchmark::Sparselu => BenchKind::SparseLu,
            Benchmark::Nbody => BenchKind::NBody,
        };
        let mut spec = BenchSpec::new(kind);
        spec.ms = self.ms.unwrap_or(spec.ms);
        spec.bs = self.bs.unwrap_or(spec.bs);
        spec.particles = self.particles.unwrap_or(spec.particles);
        spec.timesteps = self.timesteps.unwrap_or(spec.timesteps);
        spec.threads = self.threads;
        spec.mode = match self.mode {
            Mode::Baseline => RuntimeMode::Baseline,
            Mode::Ddast => RuntimeMode::Ddast,
        };
        spec.ddast = DdastOverrides {
            max_ddast_threads: self.max_ddast_threads,
            max_spins: self.max_spins,
            max_ops_thread: self.max_ops_thread,
            min_ready_tasks: self.min_ready_tasks,
        };
        spec.repetitions = self.repetitions;
        spec.trace = self.trace.clone();
        spec.dry_run = self.dry_run;
        spec
    }
}

fn main() -> Result<()> {
    let args = Args::parse();
    let spec = args.spec();
    let stdout = io::stdout();
    let mut out = stdout.lock();

    if let Some(name) = &args.sweep {
        let param: SweepParam = name.parse()?;
        if args.report != Format::Csv {
            eprintln!("note: sweeps are always reported as CSV");
        }
        let rows = bench::sweep(&spec, param, &bench::doubling_values())
            .with_context(|| format!("sweeping {param}"))?;
        bench::write_sweep_csv(&rows, &mut out)?;
        return Ok(());
    }

    let report = bench::run(&spec).with_context(|| format!("running {}", spec.benchmark))?;
    match args.report {
        Format::Json => writeln!(out, "{}", report.to_json())?,
        Format::Csv => {
            if spec.dry_run {
                bail!("a dry run has no timings to report as CSV; use --report json");
            }
            report.write_csv(&mut out)?
        }
    }
    Ok(())
}
