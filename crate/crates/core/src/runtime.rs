//! Thread pool, task API and the two dependence-management flows.
//!
//! In [`RuntimeMode::Baseline`] the thread that creates or finishes a task
//! updates the parent's dependence graph itself, under that graph's lock. In
//! [`RuntimeMode::Ddast`] it only posts a request to its own mailbox and goes
//! back to application code; idle threads pick the requests up through the
//! functionality dispatcher and apply them as managers.
//!
//! Thread 0 is the thread that drives the runtime (spawns top-level tasks and
//! waits on them); threads `1..threads` are pool workers.

use std::fmt;
use std::panic::{self, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_utils::CachePadded;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ddast::{self, default_config, DdastConfig, ManagerGauge};
use crate::dispatcher::{DispatchError, Dispatcher};
use crate::graph::SubmitOutcome;
use crate::instrument::{Counter, Instrument, ThreadState, Trace};
use crate::mailbox::{DoneTaskMessage, Mailbox, SubmitTaskMessage};
use crate::pool::ReadyPool;
use crate::task::{
    DependenceClause, Task, TaskBody, TaskEvent, TaskId, TaskRef, DEFAULT_LABEL,
};

pub const ENV_PREFIX: &str = "TASKRT_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuntimeMode {
    Baseline,
    Ddast,
}

impl fmt::Display for RuntimeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuntimeMode::Baseline => "baseline",
            RuntimeMode::Ddast => "ddast",
        })
    }
}

impl FromStr for RuntimeMode {
    type Err = RuntimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "sync" => Ok(RuntimeMode::Baseline),
            "ddast" | "async" => Ok(RuntimeMode::Ddast),
            other => Err(RuntimeError::BadConfig(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("runtime is not running")]
    RuntimeNotStarted,
    #[error("invalid runtime configuration: {0}")]
    BadConfig(String),
    #[error("tasks leaked at shutdown: created {created}, executed {executed}, deleted {deleted}")]
    LeakedTasks {
        created: u64,
        executed: u64,
        deleted: u64,
    },
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeConfig {
    pub threads: usize,
    pub mode: RuntimeMode,
    pub ddast: DdastConfig,
    pub tracing: bool,
}

impl RuntimeConfig {
    /// `threads` threads with the tuned DDAST defaults for that count.
    pub fn new(threads: usize, mode: RuntimeMode) -> Self {
        RuntimeConfig {
            threads,
            mode,
            ddast: default_config(threads),
            tracing: false,
        }
    }

    pub fn with_tracing(mut self, on: bool) -> Self {
        self.tracing = on;
        self
    }

    /// Reads `TASKRT_THREADS`, `TASKRT_MODE`, `TASKRT_MAX_DDAST_THREADS`,
    /// `TASKRT_MAX_SPINS`, `TASKRT_MAX_OPS_THREAD`, `TASKRT_MIN_READY_TASKS`
    /// and `TASKRT_TRACE`. Unset variables keep their defaults.
    pub fn from_env() -> Result<Self, RuntimeError> {
        Self::from_lookup(|key| std::env::var(format!("{ENV_PREFIX}{key}")).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, RuntimeError> {
        let num = |key: &str| -> Result<Option<usize>, RuntimeError> {
            lookup(key)
                .map(|v| {
                    v.trim().parse::<usize>().map_err(|_| {
                        RuntimeError::BadConfig(format!("{ENV_PREFIX}{key}={v:?} is not a count"))
                    })
                })
                .transpose()
        };
        let threads = match num("THREADS")? {
            Some(t) => t,
            None => thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let mode = match lookup("MODE") {
            Some(m) => m.parse()?,
            None => RuntimeMode::Ddast,
        };
        let mut cfg = RuntimeConfig::new(threads, mode);
        if let Some(v) = num("MAX_DDAST_THREADS")? {
            cfg.ddast.max_ddast_threads = v;
        }
        if let Some(v) = num("MAX_SPINS")? {
            cfg.ddast.max_spins = v;
        }
        if let Some(v) = num("MAX_OPS_THREAD")? {
            cfg.ddast.max_ops_thread = v;
        }
        if let Some(v) = num("MIN_READY_TASKS")? {
            cfg.ddast.min_ready_tasks = v;
        }
        cfg.tracing = lookup("TRACE").is_some_and(|v| !v.is_empty() && v != "0");
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        if self.threads == 0 {
            return Err(RuntimeError::BadConfig("threads must be at least 1".into()));
        }
        self.ddast.validate().map_err(RuntimeError::BadConfig)
    }
}

/// Totals reported when a runtime shuts down.
#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub created: u64,
    pub executed: u64,
    pub deleted: u64,
    pub messages_posted: u64,
    pub messages_consumed: u64,
    pub trace: Trace,
}

/// Handed to every task body; spawns children of the running task.
pub struct TaskContext<'a> {
    core: &'a Arc<RuntimeCore>,
    task: &'a TaskRef,
    worker: usize,
}

impl TaskContext<'_> {
    pub fn spawn<F>(&self, clauses: &[DependenceClause], body: F) -> TaskRef
    where
        F: FnOnce(&TaskContext<'_>) + Send + 'static,
    {
        self.core
            .spawn_task(self.task, self.worker, DEFAULT_LABEL.clone(), clauses, Box::new(body))
    }

    pub fn spawn_labeled<F>(&self, label: &Arc<str>, clauses: &[DependenceClause], body: F) -> TaskRef
    where
        F: FnOnce(&TaskContext<'_>) + Send + 'static,
    {
        self.core
            .spawn_task(self.task, self.worker, label.clone(), clauses, Box::new(body))
    }

    /// Waits for this task's direct children, running other work meanwhile.
    pub fn taskwait(&self) {
        self.core.taskwait(self.task, self.worker);
    }

    pub fn task(&self) -> &TaskRef {
        self.task
    }

    pub fn worker_id(&self) -> usize {
        self.worker
    }
}

/// Exponential idle backoff. Spinning is short: there may be fewer cores
/// than threads.
struct Backoff {
    step: u32,
}

impl Backoff {
    const YIELD_LIMIT: u32 = 6;
    const SLEEP_LIMIT: u32 = 12;

    fn new() -> Self {
        Backoff { step: 0 }
    }

    fn reset(&mut self) {
        self.step = 0;
    }

    fn snooze(&mut self) {
        if self.step < Self::YIELD_LIMIT {
            thread::yield_now();
        } else {
            let exp = self.step.min(Self::SLEEP_LIMIT) - Self::YIELD_LIMIT;
            thread::sleep(Duration::from_micros(5 << exp));
        }
        self.step += 1;
    }
}

/// State shared by all threads of one runtime instance.
pub struct RuntimeCore {
    config: RuntimeConfig,
    root: TaskRef,
    pool: ReadyPool<TaskRef>,
    mailboxes: Box<[CachePadded<Mailbox>]>,
    dispatcher: Dispatcher<RuntimeCore>,
    gauge: ManagerGauge,
    instrument: Instrument,
    next_id: AtomicU64,
    graph_stamps: AtomicU64,
    shutdown: AtomicBool,
}

impl RuntimeCore {
    fn new(config: RuntimeConfig) -> Arc<RuntimeCore> {
        let n = config.threads;
        let core = Arc::new(RuntimeCore {
            root: Arc::new(Task::root()),
            pool: ReadyPool::new(n),
            mailboxes: (0..n).map(|_| CachePadded::new(Mailbox::new())).collect(),
            dispatcher: Dispatcher::new(),
            gauge: ManagerGauge::default(),
            instrument: Instrument::new(n, config.tracing),
            next_id: AtomicU64::new(1),
            graph_stamps: AtomicU64::new(0),
            shutdown: AtomicBool::new(false),
            config,
        });
        if core.config.mode == RuntimeMode::Ddast {
            core.dispatcher
                .register_callback("ddast", |core: &RuntimeCore, worker| {
                    ddast::ddast_callback(core, worker);
                })
                .expect("fresh dispatcher");
        }
        core
    }

    /// A core without worker threads.
    #[cfg(test)]
    pub(crate) fn detached(config: RuntimeConfig) -> Arc<RuntimeCore> {
        RuntimeCore::new(config)
    }

    #[cfg(test)]
    pub(crate) fn spawn_from_root(self: &Arc<Self>, worker: usize, clauses: &[DependenceClause]) -> TaskRef {
        let root = self.root.clone();
        self.spawn_task(&root, worker, DEFAULT_LABEL.clone(), clauses, Box::new(|_| {}))
    }

    pub fn threads(&self) -> usize {
        self.config.threads
    }

    pub fn mode(&self) -> RuntimeMode {
        self.config.mode
    }

    pub fn ddast_config(&self) -> DdastConfig {
        self.config.ddast
    }

    pub fn mailbox(&self, worker: usize) -> &Mailbox {
        &self.mailboxes[worker]
    }

    pub fn manager_gauge(&self) -> &ManagerGauge {
        &self.gauge
    }

    pub fn instrument(&self) -> &Instrument {
        &self.instrument
    }

    pub fn dispatcher(&self) -> &Dispatcher<RuntimeCore> {
        &self.dispatcher
    }

    /// Tasks currently sitting in the ready pool.
    pub fn ready_count(&self) -> usize {
        self.instrument.live(Counter::Ready).max(0) as usize
    }

    pub fn root(&self) -> &TaskRef {
        &self.root
    }

    fn is_shutting_down(&self) -> bool {
        self.shutdown.load(Ordering::Acquire)
    }

    pub(crate) fn spawn_task(
        self: &Arc<Self>,
        parent: &TaskRef,
        worker: usize,
        label: Arc<str>,
        clauses: &[DependenceClause],
        body: TaskBody,
    ) -> TaskRef {
        let mailbox = &self.mailboxes[worker];
        let seq = mailbox.next_seq();
        let id = TaskId(self.next_id.fetch_add(1, Ordering::Relaxed));
        let task = Arc::new(Task::with_origin(
            id,
            Some(parent.clone()),
            clauses,
            Some(body),
            label,
            worker,
            seq,
        ));
        parent.attach_child();
        self.instrument.counter_delta(worker, Counter::Created, 1);
        task.advance(TaskEvent::Submit);
        match self.config.mode {
            RuntimeMode::Baseline => self.submit_to_graph(&task, worker),
            RuntimeMode::Ddast => mailbox.post_submit(SubmitTaskMessage {
                task: task.clone(),
                creation_seq: seq,
            }),
        }
        task
    }

    pub(crate) fn submit_to_graph(&self, task: &TaskRef, worker: usize) {
        let parent = task.parent().expect("submitted task without parent");
        let outcome = {
            let mut graph = parent.lock_graph();
            task.set_graph_stamp(self.graph_stamps.fetch_add(1, Ordering::AcqRel) + 1);
            let outcome = graph.submit(task);
            self.instrument.counter_delta(worker, Counter::InGraph, 1);
            outcome
        };
        if outcome == SubmitOutcome::Ready {
            self.make_ready(task.clone(), worker);
        }
    }

    pub(crate) fn release_finished(&self, task: &TaskRef, worker: usize) {
        let parent = task.parent().expect("finished task without parent");
        let ready = {
            let mut graph = parent.lock_graph();
            let ready = graph.release(task);
            self.instrument.counter_delta(worker, Counter::InGraph, -1);
            ready
        };
        for t in ready {
            self.make_ready(t, worker);
        }
        self.delete_cascade(task, worker);
    }

    fn make_ready(&self, task: TaskRef, worker: usize) {
        self.instrument.counter_delta(worker, Counter::Ready, 1);
        self.pool.push(worker, task);
    }

    /// Deletes `task` if it is releasable, then walks up the parent chain
    /// while each deletion was the last live child.
    fn delete_cascade(&self, task: &TaskRef, worker: usize) {
        let mut current = task.clone();
        while current.try_delete() {
            self.instrument.counter_delta(worker, Counter::Deleted, 1);
            let Some(parent) = current.parent().cloned() else {
                break;
            };
            match parent.detach_child() {
                Some(0) => current = parent,
                Some(_) => break,
                None => panic!("task {}: live-children underflow", parent.id()),
            }
        }
    }

    /// Local pop, then one stealing sweep. READY is raised before every
    /// push, so a zero count means there is nothing to find.
    pub(crate) fn pop_ready(&self, worker: usize) -> Option<TaskRef> {
        if self.ready_count() == 0 {
            return None;
        }
        let task = self
            .pool
            .pop_local(worker)
            .or_else(|| self.pool.steal(worker))?;
        self.instrument.counter_delta(worker, Counter::Ready, -1);
        Some(task)
    }

    pub(crate) fn execute(self: &Arc<Self>, task: &TaskRef, worker: usize) {
        let previous = self
            .instrument
            .thread_state(worker, ThreadState::RunningTask(task.label().clone()));
        task.advance(TaskEvent::Start);
        if let Some(body) = task.take_body() {
            let ctx = TaskContext {
                core: self,
                task,
                worker,
            };
            if panic::catch_unwind(AssertUnwindSafe(|| body(&ctx))).is_err() {
                eprintln!("taskrt: task {} panicked; aborting", task.id());
                std::process::abort();
            }
        }
        task.advance(TaskEvent::Finish);
        self.instrument.counter_delta(worker, Counter::Executed, 1);
        match self.config.mode {
            RuntimeMode::Baseline => self.release_finished(task, worker),
            RuntimeMode::Ddast => self.mailboxes[worker].post_done(DoneTaskMessage { task: task.clone() }),
        }
        self.instrument
            .thread_state(worker, previous.unwrap_or(ThreadState::Idle));
    }

    /// One scheduling attempt. Returns true if it made progress.
    fn work_once(self: &Arc<Self>, worker: usize) -> bool {
        if let Some(task) = self.pop_ready(worker) {
            self.execute(&task, worker);
            return true;
        }
        if self.config.mode == RuntimeMode::Ddast {
            self.dispatcher.notify_idle(self, worker);
            if let Some(task) = self.pop_ready(worker) {
                self.execute(&task, worker);
                return true;
            }
        }
        false
    }

    pub(crate) fn taskwait(self: &Arc<Self>, task: &TaskRef, worker: usize) {
        if task.live_children() == 0 {
            return;
        }
        let is_root = Arc::ptr_eq(task, &self.root);
        if !is_root {
            task.advance(TaskEvent::Block);
        }
        let mut backoff = Backoff::new();
        while task.live_children() > 0 {
            if self.work_once(worker) {
                backoff.reset();
            } else {
                backoff.snooze();
            }
        }
        if !is_root {
            task.advance(TaskEvent::Unblock);
        }
    }

    fn worker_loop(self: Arc<Self>, worker: usize) {
        self.instrument.thread_state(worker, ThreadState::Idle);
        let mut backoff = Backoff::new();
        while !self.is_shutting_down() {
            if self.work_once(worker) {
                backoff.reset();
            } else {
                backoff.snooze();
            }
        }
    }

    fn has_pending_work(&self) -> bool {
        !self.pool.is_empty() || self.mailboxes.iter().any(|m| !m.is_empty())
    }

    /// Drops every queued task and graph reference.
    pub(crate) fn discard_all(&self) {
        self.pool.clear();
        for m in self.mailboxes.iter() {
            m.discard();
        }
        self.root.lock_graph().clear();
    }

    fn stats(&self, trace: Trace) -> RunStats {
        let (posted, consumed) = self
            .mailboxes
            .iter()
            .map(|m| m.traffic())
            .fold((0, 0), |(a, b), (p, c)| (a + p, b + c));
        RunStats {
            created: self.instrument.live(Counter::Created) as u64,
            executed: self.instrument.live(Counter::Executed) as u64,
            deleted: self.instrument.live(Counter::Deleted) as u64,
            messages_posted: posted as u64,
            messages_consumed: consumed as u64,
            trace,
        }
    }
}

/// A running runtime instance, driven from the thread that started it.
pub struct Runtime {
    core: Arc<RuntimeCore>,
    workers: Vec<JoinHandle<()>>,
}

impl Runtime {
    pub fn start(config: RuntimeConfig) -> Result<Runtime, RuntimeError> {
        config.validate()?;
        let core = RuntimeCore::new(config);
        let workers = (1..core.threads())
            .map(|w| {
                let core = core.clone();
                thread::Builder::new()
                    .name(format!("taskrt-worker-{w}"))
                    .stack_size(8 << 20)
                    .spawn(move || core.worker_loop(w))
                    .map_err(|e| RuntimeError::BadConfig(format!("cannot start worker {w}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        core.instrument.thread_state(0, ThreadState::Idle);
        Ok(Runtime { core, workers })
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.core.config
    }

    pub fn core(&self) -> &Arc<RuntimeCore> {
        &self.core
    }

    /// Creates a top-level task.
    pub fn spawn<F>(&self, clauses: &[DependenceClause], body: F) -> Result<TaskRef, RuntimeError>
    where
        F: FnOnce(&TaskContext<'_>) + Send + 'static,
    {
        self.spawn_labeled(&DEFAULT_LABEL, clauses, body)
    }

    pub fn spawn_labeled<F>(
        &self,
        label: &Arc<str>,
        clauses: &[DependenceClause],
        body: F,
    ) -> Result<TaskRef, RuntimeError>
    where
        F: FnOnce(&TaskContext<'_>) + Send + 'static,
    {
        if self.core.is_shutting_down() {
            return Err(RuntimeError::RuntimeNotStarted);
        }
        Ok(self
            .core
            .spawn_task(&self.core.root, 0, label.clone(), clauses, Box::new(body)))
    }

    /// Waits until every top-level task has completed and been deleted.
    pub fn taskwait(&self) {
        self.core.taskwait(&self.core.root, 0);
    }

    /// Registers an extra runtime callback run by idle threads.
    pub fn register_callback<F>(&self, name: &str, entry: F) -> Result<(), RuntimeError>
    where
        F: Fn(&RuntimeCore, usize) + Send + Sync + 'static,
    {
        Ok(self.core.dispatcher.register_callback(name, entry)?)
    }

    fn stop_workers(&mut self) {
        self.core.shutdown.store(true, Ordering::Release);
        for handle in self.workers.drain(..) {
            if handle.join().is_err() {
                eprintln!("taskrt: a worker thread panicked");
            }
        }
    }

    /// Joins the workers and reports totals. Fails if any created task was
    /// not executed and deleted.
    pub fn shutdown(mut self) -> Result<RunStats, RuntimeError> {
        self.stop_workers();
        let core = &self.core;
        core.instrument.thread_state(0, ThreadState::Idle);
        let stats = core.stats(core.instrument.take_trace());
        let clean = stats.created == stats.executed
            && stats.executed == stats.deleted
            && core.root.live_children() == 0
            && !core.has_pending_work();
        if clean {
            Ok(stats)
        } else {
            core.discard_all();
            Err(RuntimeError::LeakedTasks {
                created: stats.created,
                executed: stats.executed,
                deleted: stats.deleted,
            })
        }
    }
}

impl Drop for Runtime {
    fn drop(&mut self) {
        if !self.workers.is_empty() {
            self.stop_workers();
        }
        self.core.discard_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::TaskState;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Mutex;

    fn modes() -> [RuntimeMode; 2] {
        [RuntimeMode::Baseline, RuntimeMode::Ddast]
    }

    #[test]
    fn independent_tasks_run_once() {
        for mode in modes() {
            let rt = Runtime::start(RuntimeConfig::new(4, mode)).unwrap();
            let hits: Arc<Vec<AtomicUsize>> = Arc::new((0..16).map(|_| AtomicUsize::new(0)).collect());
            for i in 0..16 {
                let hits = hits.clone();
                rt.spawn(&[], move |_| {
                    hits[i].fetch_add(1, Ordering::Relaxed);
                })
                .unwrap();
            }
            rt.taskwait();
            assert!(hits.iter().all(|h| h.load(Ordering::Relaxed) == 1));
            let stats = rt.shutdown().unwrap();
            assert_eq!((stats.created, stats.executed, stats.deleted), (16, 16, 16));
        }
    }

    #[test]
    fn inout_chain_runs_in_order() {
        for mode in modes() {
            for _ in 0..20 {
                let rt = Runtime::start(RuntimeConfig::new(4, mode)).unwrap();
                let log = Arc::new(Mutex::new(Vec::new()));
                for name in ["a", "b", "c"] {
                    let log = log.clone();
                    rt.spawn(&[DependenceClause::inout(1u64)], move |_| {
                        log.lock().unwrap().push(name)
                    })
                    .unwrap();
                }
                rt.taskwait();
                assert_eq!(*log.lock().unwrap(), vec!["a", "b", "c"]);
                rt.shutdown().unwrap();
            }
        }
    }

    #[test]
    fn ddast_spawn_returns_before_graph_insertion() {
        let rt = Runtime::start(RuntimeConfig::new(1, RuntimeMode::Ddast)).unwrap();
        let t = rt.spawn(&[DependenceClause::inout(1u64)], |_| {}).unwrap();
        assert_eq!(t.state(), TaskState::Submitted);
        assert_eq!(t.graph_stamp(), 0);
        rt.taskwait();
        assert_eq!(t.state(), TaskState::Deletable);
        rt.shutdown().unwrap();

        let rt = Runtime::start(RuntimeConfig::new(1, RuntimeMode::Baseline)).unwrap();
        let t = rt.spawn(&[DependenceClause::inout(1u64)], |_| {}).unwrap();
        assert_eq!(t.state(), TaskState::Ready);
        rt.taskwait();
        rt.shutdown().unwrap();
    }

    #[test]
    fn taskwait_without_children_returns() {
        for mode in modes() {
            let rt = Runtime::start(RuntimeConfig::new(2, mode)).unwrap();
            rt.taskwait();
            let stats = rt.shutdown().unwrap();
            assert_eq!((stats.created, stats.executed, stats.deleted), (0, 0, 0));
        }
    }

    #[test]
    fn taskwait_covers_all_children() {
        for mode in modes() {
            let rt = Runtime::start(RuntimeConfig::new(4, mode)).unwrap();
            let children = Arc::new(Mutex::new(Vec::new()));
            let kids = children.clone();
            let parent = rt
                .spawn(&[], move |ctx| {
                    for i in 0..100u64 {
                        let t = ctx.spawn(&[DependenceClause::inout(i % 7)], |_| {});
                        kids.lock().unwrap().push(t);
                    }
                    ctx.taskwait();
                    for t in kids.lock().unwrap().iter() {
                        assert_eq!(t.state(), TaskState::Deletable);
                    }
                    assert_eq!(ctx.task().live_children(), 0);
                })
                .unwrap();
            rt.taskwait();
            assert_eq!(children.lock().unwrap().len(), 100);
            assert_eq!(parent.state(), TaskState::Deletable);
            let stats = rt.shutdown().unwrap();
            assert_eq!(stats.created, 101);
        }
    }

    #[test]
    fn nested_taskwait_waits_for_direct_children_only() {
        for mode in modes() {
            let rt = Runtime::start(RuntimeConfig::new(3, mode)).unwrap();
            let log = Arc::new(Mutex::new(Vec::new()));
            let l = log.clone();
            rt.spawn(&[], move |ctx| {
                let l2 = l.clone();
                ctx.spawn(&[], move |ctx| {
                    for _ in 0..4 {
                        let l3 = l2.clone();
                        ctx.spawn(&[], move |_| l3.lock().unwrap().push("grandchild"));
                    }
                    ctx.taskwait();
                    l2.lock().unwrap().push("child-after-wait");
                });
                ctx.taskwait();
                l.lock().unwrap().push("parent-after-wait");
            })
            .unwrap();
            rt.taskwait();
            let log = log.lock().unwrap();
            assert_eq!(log.len(), 6);
            assert_eq!(log[4], "child-after-wait");
            assert_eq!(log[5], "parent-after-wait");
            rt.shutdown().unwrap();
        }
    }

    #[test]
    fn children_may_outlive_parent_body() {
        for mode in modes() {
            let rt = Runtime::start(RuntimeConfig::new(2, mode)).unwrap();
            let parent = rt
                .spawn(&[], |ctx| {
                    for _ in 0..10 {
                        ctx.spawn(&[], |_| thread::sleep(Duration::from_micros(200)));
                    }
                })
                .unwrap();
            rt.taskwait();
            assert_eq!(parent.state(), TaskState::Deletable);
            let stats = rt.shutdown().unwrap();
            assert_eq!(stats.deleted, 11);
        }
    }

    #[test]
    fn single_thread_matches_sequential_order() {
        // With one thread and no dependences the breadth-first deque runs
        // tasks in creation order.
        for mode in modes() {
            let rt = Runtime::start(RuntimeConfig::new(1, mode)).unwrap();
            let log = Arc::new(Mutex::new(Vec::new()));
            for i in 0..50 {
                let log = log.clone();
                rt.spawn(&[DependenceClause::inout(i % 3)], move |_| log.lock().unwrap().push(i))
                    .unwrap();
            }
            rt.taskwait();
            let log = log.lock().unwrap();
            for k in 0..3 {
                let chain: Vec<_> = log.iter().filter(|&&i| i % 3 == k).collect();
                assert!(chain.windows(2).all(|w| w[0] < w[1]));
            }
            rt.shutdown().unwrap();
        }
    }

    #[test]
    fn early_shutdown_reports_leaks() {
        let rt = Runtime::start(RuntimeConfig::new(1, RuntimeMode::Ddast)).unwrap();
        for _ in 0..100 {
            rt.spawn(&[DependenceClause::inout(1u64)], |_| {}).unwrap();
        }
        match rt.shutdown() {
            Err(RuntimeError::LeakedTasks { created, executed, deleted }) => {
                assert_eq!((created, executed, deleted), (100, 0, 0));
            }
            other => panic!("expected leak, got {other:?}"),
        }
    }

    #[test]
    fn empty_runtime_shuts_down() {
        for mode in modes() {
            let rt = Runtime::start(RuntimeConfig::new(8, mode)).unwrap();
            let stats = rt.shutdown().unwrap();
            assert_eq!(stats.messages_posted, 0);
        }
    }

    #[test]
    fn zero_threads_is_rejected() {
        assert!(matches!(
            Runtime::start(RuntimeConfig::new(0, RuntimeMode::Ddast)),
            Err(RuntimeError::BadConfig(_))
        ));
    }

    #[test]
    fn env_lookup_overrides_defaults() {
        let vars = [
            ("THREADS", "16"),
            ("MODE", "baseline"),
            ("MAX_OPS_THREAD", "32"),
            ("TRACE", "1"),
        ];
        let cfg = RuntimeConfig::from_lookup(|k| {
            vars.iter().find(|(n, _)| *n == k).map(|(_, v)| v.to_string())
        })
        .unwrap();
        assert_eq!(cfg.threads, 16);
        assert_eq!(cfg.mode, RuntimeMode::Baseline);
        assert_eq!(cfg.ddast.max_ddast_threads, 2);
        assert_eq!(cfg.ddast.max_ops_thread, 32);
        assert!(cfg.tracing);
        assert!(RuntimeConfig::from_lookup(|k| (k == "MAX_SPINS").then(|| "x".into())).is_err());
    }

    #[test]
    fn custom_callbacks_run_when_idle() {
        let rt = Runtime::start(RuntimeConfig::new(2, RuntimeMode::Ddast)).unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let h = hits.clone();
        rt.register_callback("probe", move |_, _| {
            h.fetch_add(1, Ordering::Relaxed);
        })
        .unwrap();
        assert!(rt.register_callback("ddast", |_, _| {}).is_err());
        while hits.load(Ordering::Relaxed) == 0 {
            thread::sleep(Duration::from_millis(1));
        }
        rt.shutdown().unwrap();
    }
}
