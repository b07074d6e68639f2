//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::SeedableRng;
use taskrt::bench::matmul::Matmul;
use taskrt::bench::{self, BenchKind, BenchSpec, SweepParam, Workload};
use taskrt::{
    default_config, Counter, DdastConfig, DependenceClause, RunStats, Runtime, RuntimeConfig,
    RuntimeMode, TaskRef, Token,
};

type Outcome = Result<String, String>;

const MODES: [RuntimeMode; 2] = [RuntimeMode::Baseline, RuntimeMode::Ddast];

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    check(took < limit, || format!("took {took:.2?}, limit {limit:?}"))
}

fn conserved(stats: &RunStats, what: &str) -> Result<(), String> {
    check(
        stats.created == stats.executed && stats.executed == stats.deleted,
        || format!("{what}: created {} executed {} deleted {}", stats.created, stats.executed, stats.deleted),
    )?;
    if !stats.trace.is_empty() {
        for c in [Counter::InGraph, Counter::Ready, Counter::ActiveManagers] {
            let last = stats.trace.series(c).last();
            check(last == 0, || format!("{what}: {} ends at {last}", c.name()))?;
        }
    }
    Ok(())
}

fn task_counts() -> Outcome {
    let start = Instant::now();
    let matmul = [(8192, 512, 4096), (8192, 256, 32768), (4096, 128, 32768), (4096, 64, 262144)];
    let nbody = [(128, 262176), (64, 1048608), (256, 65568)];
    for (ms, bs, want) in matmul {
        let mut s = BenchSpec::new(BenchKind::Matmul);
        (s.ms, s.bs) = (ms, bs);
        let got = bench::dry_run_count(&s).map_err(|e| e.to_string())?;
        check(got == want, || format!("matmul {ms}/{bs}: {got} != {want}"))?;
    }
    for (bs, want) in nbody {
        let mut s = BenchSpec::new(BenchKind::NBody);
        (s.particles, s.timesteps, s.bs) = (16384, 16, bs);
        let got = bench::dry_run_count(&s).map_err(|e| e.to_string())?;
        check(got == want, || format!("nbody 16384/16/{bs}: {got} != {want}"))?;
    }
    let mut s = BenchSpec::new(BenchKind::SparseLu);
    (s.ms, s.bs) = (8192, 128);
    let lu = bench::dry_run_count(&s).map_err(|e| e.to_string())?;
    within(Duration::from_secs(1), start)?;
    Ok(format!(
        "7 reference counts matched in {:.1?} (sparselu 8192/128 gives {lu}, informational only)",
        start.elapsed()
    ))
}

fn ordering_oracle() -> Outcome {
    let start = Instant::now();
    let mut total = 0;
    for mode in MODES {
        for threads in [1, 2, 4, 8] {
            let mut rng = StdRng::seed_from_u64(threads as u64 * 31 + mode as u64);
            let rt = Runtime::start(RuntimeConfig::new(threads, mode)).map_err(|e| e.to_string())?;
            for n in 0..1000 {
                let set = common::random_set(&mut rng, 64, 8);
                let t = common::execute(&rt, &set);
                let bad = common::violations(&set, &t);
                check(bad.is_empty(), || format!("{mode} x{threads} set {n}: {bad:?}"))?;
                total += 1;
            }
            let stats = rt.shutdown().map_err(|e| e.to_string())?;
            conserved(&stats, "oracle")?;
        }
    }
    within(Duration::from_secs(60), start)?;
    Ok(format!("{total} task sets, 0 violations, {:.1?}", start.elapsed()))
}

fn sequential_equivalence() -> Outcome {
    let start = Instant::now();
    let mut runs = 0;
    for kind in [BenchKind::Matmul, BenchKind::SparseLu, BenchKind::NBody] {
        let mut spec = BenchSpec::new(kind);
        match kind {
            BenchKind::Matmul => (spec.ms, spec.bs) = (256, 64),
            BenchKind::SparseLu => (spec.ms, spec.bs) = (1024, 64),
            BenchKind::NBody => (spec.particles, spec.timesteps, spec.bs) = (1024, 4, 128),
        }
        spec.repetitions = 1;
        for mode in MODES {
            for threads in 1..=8 {
                spec.mode = mode;
                spec.threads = threads;
                let report = bench::run(&spec).map_err(|e| format!("{kind} {mode} x{threads}: {e}"))?;
                check(report.counters.created == report.task_count, || {
                    format!("{kind}: created {} of {}", report.counters.created, report.task_count)
                })?;
                runs += 1;
            }
        }
    }
    within(Duration::from_secs(120), start)?;
    Ok(format!("{runs} runs bitwise equal to the sequential reference, {:.1?}", start.elapsed()))
}

fn traced_matmul(mode: RuntimeMode, threads: usize, ms: usize, bs: usize) -> Result<RunStats, String> {
    let mut work = Matmul::new(ms, bs).map_err(|e| e.to_string())?;
    let rt = Runtime::start(RuntimeConfig::new(threads, mode).with_tracing(true)).map_err(|e| e.to_string())?;
    work.spawn_all(&rt).map_err(|e| e.to_string())?;
    rt.taskwait();
    rt.shutdown().map_err(|e| e.to_string())
}

fn ddast_semantics() -> Outcome {
    // (a) manager cap from traces
    let mut peaks = Vec::new();
    for threads in [2, 8, 9, 16] {
        let stats = traced_matmul(RuntimeMode::Ddast, threads, 256, 16)?;
        let peak = stats.trace.series(Counter::ActiveManagers).max();
        let cap = threads.div_ceil(8) as i64;
        check(peak <= cap, || format!("x{threads}: {peak} managers, cap {cap}"))?;
        peaks.push(format!("x{threads}:{peak}/{cap}"));
    }
    // (b) per-creator submit order as stamped by the graph
    let rt = Runtime::start(RuntimeConfig::new(8, RuntimeMode::Ddast)).map_err(|e| e.to_string())?;
    let spawned: Arc<Mutex<Vec<TaskRef>>> = Arc::default();
    for p in 0..16u64 {
        let sink = spawned.clone();
        let t = rt
            .spawn(&[DependenceClause::inout(Token(1 << 20 | p))], move |ctx| {
                for c in 0..64u64 {
                    let t = ctx.spawn(&[DependenceClause::inout(Token(c % 7))], |_| {});
                    sink.lock().unwrap().push(t);
                }
                ctx.taskwait();
            })
            .map_err(|e| e.to_string())?;
        spawned.lock().unwrap().push(t);
    }
    rt.taskwait();
    let mut tasks = spawned.lock().unwrap().clone();
    tasks.sort_by_key(|t| (t.creator(), t.creation_seq()));
    let ordered = tasks.windows(2).all(|w| {
        w[0].creator() != w[1].creator() || w[0].graph_stamp() < w[1].graph_stamp()
    });
    check(ordered, || "submit stamped out of creation order".into())?;
    drop(tasks);
    rt.shutdown().map_err(|e| e.to_string())?;
    // (c) tuned defaults
    let want = DdastConfig { max_ddast_threads: 8, max_spins: 1, max_ops_thread: 8, min_ready_tasks: 4 };
    let got = default_config(64);
    check(got == want, || format!("default_config(64) = {got:?}"))?;
    Ok(format!("manager peaks {}; FIFO over 1040 submits; defaults {{8,1,8,4}}", peaks.join(" ")))
}

fn conservation() -> Outcome {
    let mut runs = 0;
    for mode in MODES {
        for threads in [1, 4, 8] {
            let stats = traced_matmul(mode, threads, 128, 16)?;
            conserved(&stats, &format!("matmul {mode} x{threads}"))?;
            for kind in [BenchKind::SparseLu, BenchKind::NBody] {
                let mut spec = BenchSpec::new(kind);
                (spec.ms, spec.bs, spec.particles, spec.timesteps) = (256, 32, 128, 3);
                (spec.mode, spec.threads, spec.repetitions) = (mode, threads, 1);
                let dir = std::env::temp_dir().join(format!("taskrt-acc-{}", std::process::id()));
                spec.trace = Some(dir.clone());
                let r = bench::run(&spec).map_err(|e| e.to_string())?;
                let _ = std::fs::remove_file(dir);
                let c = &r.counters;
                check(c.created == c.executed && c.executed == c.deleted && c.created == r.task_count, || {
                    format!("{kind} {mode} x{threads}: {c:?}")
                })?;
                runs += 1;
            }
            runs += 1;
        }
    }
    Ok(format!("{runs} runs quiescent with balanced counters"))
}

fn trace_shape() -> Outcome {
    let start = Instant::now();
    let mut avg = Vec::new();
    for mode in MODES {
        let mut samples = Vec::new();
        for _ in 0..3 {
            let stats = traced_matmul(mode, 8, 256, 16)?;
            let (t0, t1) = stats.trace.span();
            samples.push(stats.trace.series(Counter::InGraph).time_average(t0, t1));
        }
        samples.sort_by(f64::total_cmp);
        avg.push(samples[1]);
    }
    within(Duration::from_secs(60), start)?;
    let ratio = avg[1] / avg[0];
    let detail = format!(
        "median avg IN_GRAPH baseline {:.1}, ddast {:.1}, ratio {ratio:.3}",
        avg[0], avg[1]
    );
    check(ratio < 1.0, || detail.clone())?;
    Ok(detail)
}

fn chains(mode: RuntimeMode) -> Result<(Duration, Duration), String> {
    let rt = Runtime::start(RuntimeConfig::new(8, mode)).map_err(|e| e.to_string())?;
    let clauses: Vec<[DependenceClause; 1]> =
        (0..8).map(|c| [DependenceClause::inout(Token(c))]).collect();
    let start = Instant::now();
    for i in 0..100_000 {
        rt.spawn(&clauses[i % 8], |_| {}).map_err(|e| e.to_string())?;
    }
    let created = start.elapsed();
    rt.taskwait();
    let wall = start.elapsed();
    conserved(&rt.shutdown().map_err(|e| e.to_string())?, "chains")?;
    Ok((wall, created))
}

fn contention_guard() -> Outcome {
    let mut best = [Duration::MAX; 2];
    let mut creation = [Duration::MAX; 2];
    for _ in 0..3 {
        for (m, mode) in MODES.into_iter().enumerate() {
            let (wall, created) = chains(mode)?;
            best[m] = best[m].min(wall);
            creation[m] = creation[m].min(created);
        }
    }
    let ratio = best[1].as_secs_f64() / best[0].as_secs_f64();
    let rate = |d: Duration| 100_000.0 / d.as_secs_f64() / 1e6;
    let detail = format!(
        "wall baseline {:.1?}, ddast {:.1?}, ratio {ratio:.3}; creation {:.2} / {:.2} Mtasks/s",
        best[0],
        best[1],
        rate(creation[0]),
        rate(creation[1])
    );
    check(ratio <= 1.2, || detail.clone())?;
    Ok(detail)
}

fn sweep_mechanics() -> Outcome {
    let mut spec = BenchSpec::new(BenchKind::Matmul);
    (spec.ms, spec.bs, spec.threads, spec.repetitions) = (256, 32, 8, 5);
    spec.mode = RuntimeMode::Ddast;
    let defaults = spec.ddast_config();
    let mut at_default = Vec::new();
    for param in SweepParam::ALL {
        let rows = bench::sweep(&spec, param, &bench::doubling_values()).map_err(|e| e.to_string())?;
        let mut csv = Vec::new();
        bench::write_sweep_csv(&rows, &mut csv).map_err(|e| e.to_string())?;
        let text = String::from_utf8(csv).map_err(|e| e.to_string())?;
        let mut lines = text.lines();
        check(lines.next() == Some(bench::SWEEP_HEADER), || "bad header".into())?;
        let mut values = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            check(f.len() == 4 && f[0] == param.name(), || format!("bad row {line:?}"))?;
            let value: usize = f[1].parse().map_err(|_| format!("bad value in {line:?}"))?;
            f[2].parse::<u64>().map_err(|_| format!("bad time in {line:?}"))?;
            let speedup: f64 = f[3].parse().map_err(|_| format!("bad speedup in {line:?}"))?;
            if value == param.get(&defaults) {
                at_default.push((param, speedup));
            }
            values.push(value);
        }
        check(values == bench::doubling_values(), || format!("{param}: values {values:?}"))?;
    }
    let detail = at_default
        .iter()
        .map(|(p, s)| format!("{p}={s:.3}"))
        .collect::<Vec<_>>()
        .join(" ");
    check(at_default.len() == 4, || format!("missing default rows: {detail}"))?;
    check(at_default.iter().all(|(_, s)| (0.9..=1.1).contains(s)), || {
        format!("speedup at default outside [0.9, 1.1]: {detail}")
    })?;
    Ok(format!("4 x 8 rows, speedup at default: {detail}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("task-count reproduction", task_counts),
        ("ordering-safety oracle", ordering_oracle),
        ("sequential equivalence", sequential_equivalence),
        ("ddast semantics", ddast_semantics),
        ("conservation", conservation),
        ("trace shape", trace_shape),
        ("contention guard", contention_guard),
        ("sweep mechanics", sweep_mechanics),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
