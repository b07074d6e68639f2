//! Runtime counters and an event trace of counter deltas and thread states.
//!
//! Live totals are kept in shared atomics (the scheduler reads the ready
//! count from here). When tracing is on, each thread also appends events to
//! its own buffer; buffers are merged and sorted by timestamp once the
//! workers have been joined.

use std::fmt;
use std::io::{self, Write};
use std::path::Path;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crossbeam_utils::CachePadded;
use parking_lot::Mutex;
use serde::Serialize;

pub const TRACE_HEADER: &str = "timestamp_ns,kind,name,thread_id,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Counter {
    InGraph,
    Ready,
    ActiveManagers,
    Created,
    Executed,
    Deleted,
}

impl Counter {
    pub const ALL: [Counter; 6] = [
        Counter::InGraph,
        Counter::Ready,
        Counter::ActiveManagers,
        Counter::Created,
        Counter::Executed,
        Counter::Deleted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Counter::InGraph => "IN_GRAPH",
            Counter::Ready => "READY",
            Counter::ActiveManagers => "ACTIVE_MANAGERS",
            Counter::Created => "CREATED",
            Counter::Executed => "EXECUTED",
            Counter::Deleted => "DELETED",
        }
    }

    pub fn from_name(name: &str) -> Option<Counter> {
        Counter::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ThreadState {
    Idle,
    RunningTask(Arc<str>),
    Manager,
}

impl ThreadState {
    pub fn code(&self) -> i64 {
        match self {
            ThreadState::Idle => 0,
            ThreadState::RunningTask(_) => 1,
            ThreadState::Manager => 2,
        }
    }
}

impl fmt::Display for ThreadState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThreadState::Idle => f.write_str("IDLE"),
            ThreadState::RunningTask(label) => write!(f, "RUNNING:{label}"),
            ThreadState::Manager => f.write_str("MANAGER"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Counter,
    ThreadState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Payload {
    Counter(Counter, i64),
    State(ThreadState),
}

#[derive(Debug, Clone)]
struct Record {
    ts: u64,
    thread: usize,
    payload: Payload,
}

/// One exported trace row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub timestamp_ns: u64,
    pub kind: EventKind,
    pub name: String,
    pub thread_id: Option<usize>,
    pub value: i64,
}

#[derive(Default)]
struct ThreadBuffer {
    records: Vec<Record>,
    last_state: Option<ThreadState>,
}

pub struct Instrument {
    tracing: bool,
    epoch: Instant,
    live: [CachePadded<AtomicI64>; 6],
    buffers: Box<[CachePadded<Mutex<ThreadBuffer>>]>,
}

impl Instrument {
    pub fn new(threads: usize, tracing: bool) -> Self {
        Instrument {
            tracing,
            epoch: Instant::now(),
            live: Default::default(),
            buffers: (0..threads.max(1))
                .map(|_| CachePadded::new(Mutex::new(ThreadBuffer::default())))
                .collect(),
        }
    }

    pub fn tracing(&self) -> bool {
        self.tracing
    }

    fn now(&self) -> u64 {
        self.epoch.elapsed().as_nanos() as u64
    }

    pub fn counter_delta(&self, thread: usize, counter: Counter, delta: i64) {
        self.live[counter as usize].fetch_add(delta, Ordering::AcqRel);
        if self.tracing {
            let ts = self.now();
            self.buffers[thread].lock().records.push(Record {
                ts,
                thread,
                payload: Payload::Counter(counter, delta),
            });
        }
    }

    /// Records a state change for `thread` and returns the state it replaces.
    /// Repeating the current state records nothing.
    pub fn thread_state(&self, thread: usize, state: ThreadState) -> Option<ThreadState> {
        if !self.tracing {
            return None;
        }
        let ts = self.now();
        let mut buf = self.buffers[thread].lock();
        if buf.last_state.as_ref() == Some(&state) {
            return Some(state);
        }
        buf.records.push(Record {
            ts,
            thread,
            payload: Payload::State(state.clone()),
        });
        buf.last_state.replace(state)
    }

    pub fn live(&self, counter: Counter) -> i64 {
        self.live[counter as usize].load(Ordering::Acquire)
    }

    /// Drains all thread buffers into one time-sorted trace.
    pub fn take_trace(&self) -> Trace {
        let mut records: Vec<Record> = Vec::new();
        for buf in self.buffers.iter() {
            let mut buf = buf.lock();
            records.append(&mut buf.records);
            buf.last_state = None;
        }
        // At equal timestamps decrements go first, so a reconstructed level
        // never overshoots what was live.
        records.sort_by_key(|r| {
            let rising = !matches!(r.payload, Payload::Counter(_, d) if d < 0);
            (r.ts, rising)
        });
        let events = records
            .into_iter()
            .map(|r| match r.payload {
                Payload::Counter(c, d) => TraceEvent {
                    timestamp_ns: r.ts,
                    kind: EventKind::Counter,
                    name: c.name().to_owned(),
                    thread_id: Some(r.thread),
                    value: d,
                },
                Payload::State(s) => TraceEvent {
                    timestamp_ns: r.ts,
                    kind: EventKind::ThreadState,
                    name: s.to_string(),
                    thread_id: Some(r.thread),
                    value: s.code(),
                },
            })
            .collect();
        Trace { events }
    }
}

/// Absolute counter level over time, as a step function.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CounterSeries {
    pub points: Vec<(u64, i64)>,
}

impl CounterSeries {
    pub fn last(&self) -> i64 {
        self.points.last().map_or(0, |p| p.1)
    }

    pub fn max(&self) -> i64 {
        self.points.iter().map(|p| p.1).max().unwrap_or(0)
    }

    pub fn min(&self) -> i64 {
        self.points.iter().map(|p| p.1).min().unwrap_or(0)
    }

    /// Mean level over `[start, end]`, counting 0 before the first point.
    pub fn time_average(&self, start: u64, end: u64) -> f64 {
        if end <= start {
            return 0.0;
        }
        let mut area = 0.0;
        let mut level = 0i64;
        let mut t = start;
        for &(ts, value) in &self.points {
            let ts = ts.clamp(start, end);
            area += level as f64 * (ts - t) as f64;
            t = ts;
            level = value;
        }
        area += level as f64 * (end - t) as f64;
        area / (end - start) as f64
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn span(&self) -> (u64, u64) {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => (a.timestamp_ns, b.timestamp_ns),
            _ => (0, 0),
        }
    }

    pub fn series(&self, counter: Counter) -> CounterSeries {
        let mut level = 0;
        let points = self
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Counter && e.name == counter.name())
            .map(|e| {
                level += e.value;
                (e.timestamp_ns, level)
            })
            .collect();
        CounterSeries { points }
    }

    /// State names recorded by one thread, in order.
    pub fn thread_states(&self, thread: usize) -> Vec<&str> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::ThreadState && e.thread_id == Some(thread))
            .map(|e| e.name.as_str())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(TRACE_HEADER.split(','))?;
        for e in &self.events {
            w.serialize(e)?;
        }
        w.flush()
    }

    pub fn flush_trace(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(io::BufWriter::new(file))
    }
}
