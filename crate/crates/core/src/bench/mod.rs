//! Benchmarks driven through the runtime: blocked matrix multiply, sparse
//! LU and N-Body, plus the timing protocol and the parameter sweep.

pub mod block;
pub mod matmul;
pub mod nbody;
pub mod sparselu;

use std::fmt;
use std::io::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ddast::{default_config, DdastConfig};
use crate::instrument::Counter;
use crate::runtime::{Runtime, RuntimeConfig, RuntimeError, RuntimeMode};

pub const SWEEP_HEADER: &str = "param,value,best_ns,speedup";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error("{benchmark} output differs from the sequential reference (repetition {repetition})")]
    VerificationFailed { benchmark: BenchKind, repetition: usize },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A benchmark instance: owns its data and can either feed its task stream
/// to a runtime or run the same kernels sequentially in creation order.
pub trait Workload {
    fn task_count(&self) -> u64;
    fn spawn_all(&mut self, rt: &Runtime) -> Result<(), RuntimeError>;
    fn run_sequential(&mut self);
    fn output(&self) -> Vec<f64>;
}

pub fn blocks_per_side(len: usize, bs: usize) -> Result<usize, BenchError> {
    if bs == 0 || len == 0 {
        return Err(BenchError::BadArgs("sizes must be positive".into()));
    }
    if !len.is_multiple_of(bs) {
        return Err(BenchError::BadArgs(format!("{len} is not a multiple of block size {bs}")));
    }
    Ok(len / bs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchKind {
    Matmul,
    SparseLu,
    NBody,
}

impl fmt::Display for BenchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchKind::Matmul => "matmul",
            BenchKind::SparseLu => "sparselu",
            BenchKind::NBody => "nbody",
        })
    }
}

impl FromStr for BenchKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "matmul" => Ok(BenchKind::Matmul),
            "sparselu" | "sparse-lu" => Ok(BenchKind::SparseLu),
            "nbody" | "n-body" => Ok(BenchKind::NBody),
            other => Err(BenchError::BadArgs(format!("unknown benchmark {other:?}"))),
        }
    }
}

/// Per-parameter DDAST overrides; unset fields take the tuned default for
/// the thread count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdastOverrides {
    pub max_ddast_threads: Option<usize>,
    pub max_spins: Option<usize>,
    pub max_ops_thread: Option<usize>,
    pub min_ready_tasks: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SweepParam {
    MaxDdastThreads,
    MaxSpins,
    MaxOpsThread,
    MinReadyTasks,
}

impl SweepParam {
    pub const ALL: [SweepParam; 4] = [
        SweepParam::MaxDdastThreads,
        SweepParam::MaxSpins,
        SweepParam::MaxOpsThread,
        SweepParam::MinReadyTasks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::MaxDdastThreads => "MAX_DDAST_THREADS",
            SweepParam::MaxSpins => "MAX_SPINS",
            SweepParam::MaxOpsThread => "MAX_OPS_THREAD",
            SweepParam::MinReadyTasks => "MIN_READY_TASKS",
        }
    }

    pub fn get(self, cfg: &DdastConfig) -> usize {
        match self {
            SweepParam::MaxDdastThreads => cfg.max_ddast_threads,
            SweepParam::MaxSpins => cfg.max_spins,
            SweepParam::MaxOpsThread => cfg.max_ops_thread,
            SweepParam::MinReadyTasks => cfg.min_ready_tasks,
        }
    }

    fn set(self, o: &mut DdastOverrides, value: usize) {
        let slot = match self {
            SweepParam::MaxDdastThreads => &mut o.max_ddast_threads,
            SweepParam::MaxSpins => &mut o.max_spins,
            SweepParam::MaxOpsThread => &mut o.max_ops_thread,
            SweepParam::MinReadyTasks => &mut o.min_ready_tasks,
        };
        *slot = Some(value);
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_uppercase().replace('-', "_");
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == norm)
            .ok_or_else(|| BenchError::BadArgs(format!("unknown sweep parameter {s:?}")))
    }
}

/// 1, 2, 4, ..., 128.
pub fn doubling_values() -> Vec<usize> {
    (0..8).map(|e| 1 << e).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub benchmark: BenchKind,
    pub ms: usize,
    pub bs: usize,
    pub particles: usize,
    pub timesteps: usize,
    pub threads: usize,
    pub mode: RuntimeMode,
    pub ddast: DdastOverrides,
    pub repetitions: usize,
    pub trace: Option<PathBuf>,
    pub dry_run: bool,
}

impl BenchSpec {
    /// Desk-scale defaults for `benchmark`.
    pub fn new(benchmark: BenchKind) -> Self {
        let (ms, bs) = match benchmark {
            BenchKind::Matmul => (256, 64),
            BenchKind::SparseLu => (1024, 64),
            BenchKind::NBody => (0, 128),
        };
        BenchSpec {
            benchmark,
            ms,
            bs,
            particles: 1024,
            timesteps: 4,
            threads: 1,
            mode: RuntimeMode::Ddast,
            ddast: DdastOverrides::default(),
            repetitions: 5,
            trace: None,
            dry_run: false,
        }
    }

    pub fn ddast_config(&self) -> DdastConfig {
        let mut cfg = default_config(self.threads);
        let o = &self.ddast;
        cfg.max_ddast_threads = o.max_ddast_threads.unwrap_or(cfg.max_ddast_threads);
        cfg.max_spins = o.max_spins.unwrap_or(cfg.max_spins);
        cfg.max_ops_thread = o.max_ops_thread.unwrap_or(cfg.max_ops_thread);
        cfg.min_ready_tasks = o.min_ready_tasks.unwrap_or(cfg.min_ready_tasks);
        cfg
    }

    pub fn runtime_config(&self) -> RuntimeConfig {
        let mut cfg = RuntimeConfig::new(self.threads, self.mode);
        cfg.ddast = self.ddast_config();
        cfg
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.repetitions == 0 {
            return Err(BenchError::BadArgs("repetitions must be at least 1".into()));
        }
        self.runtime_config()
            .validate()
            .map_err(|e| BenchError::BadArgs(e.to_string()))?;
        dry_run_count(self).map(drop)
    }

    fn build(&self) -> Result<Box<dyn Workload>, BenchError> {
        Ok(match self.benchmark {
            BenchKind::Matmul => Box::new(matmul::Matmul::new(self.ms, self.bs)?),
            BenchKind::SparseLu => Box::new(sparselu::SparseLu::new(self.ms, self.bs)?),
            BenchKind::NBody => Box::new(nbody::NBody::new(self.particles, self.timesteps, self.bs)?),
        })
    }
}

/// Number of tasks the benchmark would create, without allocating its data.
pub fn dry_run_count(spec: &BenchSpec) -> Result<u64, BenchError> {
    match spec.benchmark {
        BenchKind::Matmul => matmul::task_count(spec.ms, spec.bs),
        BenchKind::SparseLu => sparselu::task_count(spec.ms, spec.bs),
        BenchKind::NBody => nbody::task_count(spec.particles, spec.timesteps, spec.bs),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportCounters {
    pub created: u64,
    pub executed: u64,
    pub deleted: u64,
    pub messages_posted: u64,
    pub messages_consumed: u64,
    /// Time-averaged IN_GRAPH over the traced repetition, if any.
    pub avg_in_graph: Option<f64>,
    pub max_in_graph: Option<i64>,
    pub max_active_managers: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub benchmark: BenchKind,
    pub ms: usize,
    pub bs: usize,
    pub particles: usize,
    pub timesteps: usize,
    pub threads: usize,
    pub mode: RuntimeMode,
    pub ddast: DdastConfig,
    pub times_ns: Vec<u64>,
    pub best_ns: Option<u64>,
    pub task_count: u64,
    pub counters: ReportCounters,
}

impl Report {
    fn empty(spec: &BenchSpec, task_count: u64) -> Self {
        Report {
            benchmark: spec.benchmark,
            ms: spec.ms,
            bs: spec.bs,
            particles: spec.particles,
            timesteps: spec.timesteps,
            threads: spec.threads,
            mode: spec.mode,
            ddast: spec.ddast_config(),
            times_ns: Vec::new(),
            best_ns: None,
            task_count,
            counters: ReportCounters::default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One header line and one row per repetition.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["benchmark", "mode", "threads", "repetition", "time_ns", "task_count"])?;
        for (i, t) in self.times_ns.iter().enumerate() {
            w.write_record([
                self.benchmark.to_string(),
                self.mode.to_string(),
                self.threads.to_string(),
                i.to_string(),
                t.to_string(),
                self.task_count.to_string(),
            ])?;
        }
        w.flush()
    }
}

/// Runs the benchmark `spec.repetitions` times, each on fresh data and a
/// fresh runtime. The timer covers task creation through the final
/// taskwait; data initialization and runtime start-up are excluded. Every
/// repetition is checked bitwise against the sequential reference.
pub fn run(spec: &BenchSpec) -> Result<Report, BenchError> {
    spec.validate()?;
    let count = dry_run_count(spec)?;
    let mut report = Report::empty(spec, count);
    if spec.dry_run {
        return Ok(report);
    }

    let mut reference = spec.build()?;
    reference.run_sequential();
    let expected = reference.output();
    drop(reference);

    for rep in 0..spec.repetitions {
        let traced = spec.trace.is_some() && rep + 1 == spec.repetitions;
        let mut work = spec.build()?;
        let rt = Runtime::start(spec.runtime_config().with_tracing(traced))?;
        let start = Instant::now();
        work.spawn_all(&rt)?;
        rt.taskwait();
        report.times_ns.push(start.elapsed().as_nanos() as u64);
        let stats = rt.shutdown()?;

        if !block::bitwise_eq(&work.output(), &expected) {
            return Err(BenchError::VerificationFailed {
                benchmark: spec.benchmark,
                repetition: rep,
            });
        }
        report.counters = ReportCounters {
            created: stats.created,
            executed: stats.executed,
            deleted: stats.deleted,
            messages_posted: stats.messages_posted,
            messages_consumed: stats.messages_consumed,
            ..ReportCounters::default()
        };
        if let (true, Some(path)) = (traced, &spec.trace) {
            let (t0, t1) = stats.trace.span();
            let in_graph = stats.trace.series(Counter::InGraph);
            report.counters.avg_in_graph = Some(in_graph.time_average(t0, t1));
            report.counters.max_in_graph = Some(in_graph.max());
            report.counters.max_active_managers =
                Some(stats.trace.series(Counter::ActiveManagers).max());
            stats.trace.flush_trace(path)?;
        }
    }
    report.best_ns = report.times_ns.iter().copied().min();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: usize,
    pub best_ns: u64,
    pub speedup: f64,
}

/// Runs `spec` once with the tuned defaults and once per value of `param`,
/// overriding only that parameter. Speedup is default time over value time.
pub fn sweep(spec: &BenchSpec, param: SweepParam, values: &[usize]) -> Result<Vec<SweepRow>, BenchError> {
    if spec.mode != RuntimeMode::Ddast {
        return Err(BenchError::BadArgs("a parameter sweep needs ddast mode".into()));
    }
    if spec.dry_run {
        return Err(BenchError::BadArgs("a parameter sweep cannot be a dry run".into()));
    }
    let best = |s: &BenchSpec| -> Result<u64, BenchError> {
        Ok(run(s)?.best_ns.expect("at least one repetition"))
    };
    let mut base = spec.clone();
    base.ddast = DdastOverrides::default();
    base.trace = None;
    let default_ns = best(&base)?;
    values
        .iter()
        .map(|&value| {
            let mut s = base.clone();
            param.set(&mut s.ddast, value);
            let best_ns = best(&s)?;
            Ok(SweepRow {
                param,
                value,
                best_ns,
                speedup: default_ns as f64 / best_ns.max(1) as f64,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.param.to_string(),
            r.value.to_string(),
            r.best_ns.to_string(),
            format!("{:.6}", r.speedup),
        ])?;
    }
    w.flush()
}
