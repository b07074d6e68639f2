//! Python bindings: a `Runtime` that runs Python callables as tasks with
//! declared data dependences, plus the benchmark entry points.
//!
//! Task bodies cannot spawn nested tasks from Python. The driving thread
//! releases the GIL while it waits so that workers can run bodies.

use std::sync::{Arc, Mutex};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyTuple};

use taskrt::bench::{self, BenchKind, BenchSpec, DdastOverrides};
use taskrt::{DdastConfig, DependenceClause, Direction, RuntimeConfig, RuntimeMode, Token};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl ToString) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Integers are used as tokens directly; any other object stands for itself.
fn token_of(obj: &Bound<'_, PyAny>) -> Token {
    match obj.extract::<u64>() {
        Ok(v) => Token(v),
        Err(_) => Token(obj.as_ptr() as u64),
    }
}

fn clauses(
    ins: &Bound<'_, PyTuple>,
    outs: &Bound<'_, PyTuple>,
    inouts: &Bound<'_, PyTuple>,
) -> Vec<DependenceClause> {
    let mut all = Vec::new();
    for (group, dir) in [(ins, Direction::In), (outs, Direction::Out), (inouts, Direction::InOut)] {
        for obj in group.iter() {
            all.push(DependenceClause::new(token_of(&obj), dir));
        }
    }
    all
}

fn config_dict<'py>(py: Python<'py>, cfg: &DdastConfig) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("max_ddast_threads", cfg.max_ddast_threads)?;
    d.set_item("max_spins", cfg.max_spins)?;
    d.set_item("max_ops_thread", cfg.max_ops_thread)?;
    d.set_item("min_ready_tasks", cfg.min_ready_tasks)?;
    Ok(d)
}

/// A task runtime driven from the Python thread that created it.
#[pyclass(unsendable, module = "taskrt")]
struct Runtime {
    inner: Option<taskrt::Runtime>,
    // First exception raised by a task body, re-raised by taskwait.
    failure: Arc<Mutex<Option<PyErr>>>,
}

impl Runtime {
    fn running(&self) -> PyResult<&taskrt::Runtime> {
        self.inner
            .as_ref()
            .ok_or_else(|| runtime_err("runtime has been shut down"))
    }

    fn raise_failure(&self) -> PyResult<()> {
        match self.failure.lock().unwrap().take() {
            Some(err) => Err(err),
            None => Ok(()),
        }
    }
}

#[pymethods]
impl Runtime {
    #[new]
    #[pyo3(signature = (threads=1, mode="ddast", max_ddast_threads=None, max_spins=None,
                        max_ops_thread=None, min_ready_tasks=None, tracing=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        threads: usize,
        mode: &str,
        max_ddast_threads: Option<usize>,
        max_spins: Option<usize>,
        max_ops_thread: Option<usize>,
        min_ready_tasks: Option<usize>,
        tracing: bool,
    ) -> PyResult<Self> {
        let mode: RuntimeMode = mode.parse().map_err(value_err)?;
        let mut cfg = RuntimeConfig::new(threads, mode).with_tracing(tracing);
        let d = &mut cfg.ddast;
        d.max_ddast_threads = max_ddast_threads.unwrap_or(d.max_ddast_threads);
        d.max_spins = max_spins.unwrap_or(d.max_spins);
        d.max_ops_thread = max_ops_thread.unwrap_or(d.max_ops_thread);
        d.min_ready_tasks = min_ready_tasks.unwrap_or(d.min_ready_tasks);
        let inner = taskrt::Runtime::start(cfg).map_err(value_err)?;
        Ok(Runtime {
            inner: Some(inner),
            failure: Arc::default(),
        })
    }

    #[getter]
    fn threads(&self) -> PyResult<usize> {
        Ok(self.running()?.config().threads)
    }

    #[getter]
    fn mode(&self) -> PyResult<String> {
        Ok(self.running()?.config().mode.to_string())
    }

    /// Creates a task running `body()`. Dependences are given as tuples of
    /// data handles (ints or arbitrary objects).
    #[pyo3(signature = (body, ins=None, outs=None, inouts=None, label=None))]
    fn spawn(
        &self,
        py: Python<'_>,
        body: Py<PyAny>,
        ins: Option<Bound<'_, PyTuple>>,
        outs: Option<Bound<'_, PyTuple>>,
        inouts: Option<Bound<'_, PyTuple>>,
        label: Option<&str>,
    ) -> PyResult<u64> {
        let rt = self.running()?;
        let empty = PyTuple::empty(py);
        let clauses = clauses(
            ins.as_ref().unwrap_or(&empty),
            outs.as_ref().unwrap_or(&empty),
            inouts.as_ref().unwrap_or(&empty),
        );
        let failure = self.failure.clone();
        let run = move |_: &taskrt::TaskContext<'_>| {
            Python::attach(|py| {
                if let Err(err) = body.call0(py) {
                    failure.lock().unwrap().get_or_insert(err);
                }
            })
        };
        let label: Arc<str> = Arc::from(label.unwrap_or("python"));
        let task = py
            .detach(|| rt.spawn_labeled(&label, &clauses, run))
            .map_err(runtime_err)?;
        Ok(task.id().0)
    }

    /// Waits for every spawned task, then re-raises the first exception a
    /// task body raised, if any.
    fn taskwait(&self, py: Python<'_>) -> PyResult<()> {
        let rt = self.running()?;
        py.detach(|| rt.taskwait());
        self.raise_failure()
    }

    /// Waits for all tasks, stops the workers and returns the totals. With
    /// `trace_path` and tracing enabled, also writes the event trace CSV.
    #[pyo3(signature = (trace_path=None))]
    fn shutdown<'py>(&mut self, py: Python<'py>, trace_path: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
        let rt = self
            .inner
            .take()
            .ok_or_else(|| runtime_err("runtime has been shut down"))?;
        let stats = py.detach(|| {
            rt.taskwait();
            rt.shutdown()
        });
        let stats = stats.map_err(runtime_err)?;
        if let Some(path) = trace_path {
            stats.trace.flush_trace(path).map_err(runtime_err)?;
        }
        self.raise_failure()?;
        let d = PyDict::new(py);
        d.set_item("created", stats.created)?;
        d.set_item("executed", stats.executed)?;
        d.set_item("deleted", stats.deleted)?;
        d.set_item("messages_posted", stats.messages_posted)?;
        d.set_item("messages_consumed", stats.messages_consumed)?;
        d.set_item("trace_events", stats.trace.events.len())?;
        Ok(d)
    }

    fn __enter__(slf: PyRef<'_, Self>) -> PyRef<'_, Self> {
        slf
    }

    fn __exit__(
        &mut self,
        py: Python<'_>,
        _exc_type: Option<Bound<'_, PyAny>>,
        _exc: Option<Bound<'_, PyAny>>,
        _tb: Option<Bound<'_, PyAny>>,
    ) -> PyResult<bool> {
        if self.inner.is_some() {
            self.shutdown(py, None)?;
        }
        Ok(false)
    }
}

impl Drop for Runtime {
    fn drop(&mut self) {
        if let Some(rt) = self.inner.take() {
            // Workers may need the GIL to finish Python bodies.
            Python::attach(|py| py.detach(|| drop(rt)));
        }
    }
}

/// The tuned DDAST limits for `threads` threads.
#[pyfunction]
fn default_config(py: Python<'_>, threads: usize) -> PyResult<Bound<'_, PyDict>> {
    config_dict(py, &taskrt::default_config(threads))
}

#[allow(clippy::too_many_arguments)]
fn spec(
    benchmark: &str,
    ms: Option<usize>,
    bs: Option<usize>,
    particles: Option<usize>,
    timesteps: Option<usize>,
    threads: usize,
    mode: &str,
    repetitions: usize,
) -> PyResult<BenchSpec> {
    let kind: BenchKind = benchmark.parse().map_err(value_err)?;
    let mut s = BenchSpec::new(kind);
    s.ms = ms.unwrap_or(s.ms);
    s.bs = bs.unwrap_or(s.bs);
    s.particles = particles.unwrap_or(s.particles);
    s.timesteps = timesteps.unwrap_or(s.timesteps);
    s.threads = threads;
    s.mode = mode.parse().map_err(value_err)?;
    s.ddast = DdastOverrides::default();
    s.repetitions = repetitions;
    Ok(s)
}

/// Number of tasks a benchmark configuration creates.
#[pyfunction]
#[pyo3(signature = (benchmark, ms=None, bs=None, particles=None, timesteps=None))]
fn dry_run_count(
    benchmark: &str,
    ms: Option<usize>,
    bs: Option<usize>,
    particles: Option<usize>,
    timesteps: Option<usize>,
) -> PyResult<u64> {
    let s = spec(benchmark, ms, bs, particles, timesteps, 1, "ddast", 1)?;
    bench::dry_run_count(&s).map_err(value_err)
}

/// Runs a benchmark (verified against its sequential reference) and returns
/// the report as a dict.
#[pyfunction]
#[pyo3(signature = (benchmark, threads=1, mode="ddast", ms=None, bs=None, particles=None,
                    timesteps=None, repetitions=5))]
#[allow(clippy::too_many_arguments)]
fn run_benchmark<'py>(
    py: Python<'py>,
    benchmark: &str,
    threads: usize,
    mode: &str,
    ms: Option<usize>,
    bs: Option<usize>,
    particles: Option<usize>,
    timesteps: Option<usize>,
    repetitions: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let s = spec(benchmark, ms, bs, particles, timesteps, threads, mode, repetitions)?;
    let report = py.detach(|| bench::run(&s)).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (report.to_json(),))
}

#[pymodule]
#[pyo3(name = "taskrt")]
fn taskrt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Runtime>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(dry_run_count, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    Ok(())
}
