//! Task descriptors, dependence clauses and the task life-cycle state machine.
//!
//! A task moves through
//!
//! ```text
//! CREATED -> SUBMITTED -> IN_GRAPH -> READY -> RUNNING -> FINISHED -> RELEASED -> DELETABLE
//!                                               |   ^
//!                                               v   |
//!                                              BLOCKED
//! ```
//!
//! `RELEASED` means the finished task has been removed from its parent's
//! dependence graph and its successors notified. Whoever observes both
//! `RELEASED` and zero live children first moves the task to `DELETABLE` and
//! owns its deletion; this replaces an explicit "delete" request between the
//! worker that ran the task and the thread that releases it.

use std::fmt;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, LazyLock};

use parking_lot::{Mutex, MutexGuard};
use thiserror::Error;

use crate::graph::TaskGraph;
use crate::runtime::TaskContext;

/// Opaque identifier of a datum that tasks declare accesses on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(pub u64);

impl Token {
    /// Token derived from the address of the first byte of `datum`.
    ///
    /// The token is only meaningful while `datum` stays where it is.
    pub fn of<T: ?Sized>(datum: &T) -> Self {
        Token(datum as *const T as *const u8 as usize as u64)
    }
}

impl From<u64> for Token {
    fn from(raw: u64) -> Self {
        Token(raw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    In,
    Out,
    InOut,
}

impl Direction {
    /// Least upper bound of two accesses on the same datum.
    pub fn join(self, other: Direction) -> Direction {
        if self == other {
            self
        } else {
            Direction::InOut
        }
    }

    pub fn writes(self) -> bool {
        self != Direction::In
    }
}

/// Declared access of a task on one datum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DependenceClause {
    pub token: Token,
    pub direction: Direction,
}

impl DependenceClause {
    pub fn new(token: impl Into<Token>, direction: Direction) -> Self {
        DependenceClause {
            token: token.into(),
            direction,
        }
    }

    pub fn input(token: impl Into<Token>) -> Self {
        Self::new(token, Direction::In)
    }

    pub fn output(token: impl Into<Token>) -> Self {
        Self::new(token, Direction::Out)
    }

    pub fn inout(token: impl Into<Token>) -> Self {
        Self::new(token, Direction::InOut)
    }
}

/// Canonicalizes a clause list: one clause per token, directions joined,
/// first-occurrence order kept.
pub fn merge_clauses(clauses: &[DependenceClause]) -> Vec<DependenceClause> {
    let mut merged: Vec<DependenceClause> = Vec::with_capacity(clauses.len());
    for clause in clauses {
        match merged.iter_mut().find(|c| c.token == clause.token) {
            Some(existing) => existing.direction = existing.direction.join(clause.direction),
            None => merged.push(*clause),
        }
    }
    merged
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum TaskState {
    Created = 0,
    Submitted = 1,
    InGraph = 2,
    Ready = 3,
    Running = 4,
    Blocked = 5,
    Finished = 6,
    Released = 7,
    Deletable = 8,
}

impl TaskState {
    pub const ALL: [TaskState; 9] = [
        TaskState::Created,
        TaskState::Submitted,
        TaskState::InGraph,
        TaskState::Ready,
        TaskState::Running,
        TaskState::Blocked,
        TaskState::Finished,
        TaskState::Released,
        TaskState::Deletable,
    ];

    fn from_bits(bits: u64) -> TaskState {
        Self::ALL[bits as usize]
    }

    /// The legal-transition table.
    pub fn next(self, event: TaskEvent) -> Option<TaskState> {
        use TaskEvent as E;
        use TaskState as S;
        Some(match (self, event) {
            (S::Created, E::Submit) => S::Submitted,
            (S::Submitted, E::EnterGraph) => S::InGraph,
            (S::InGraph, E::BecomeReady) => S::Ready,
            (S::Ready, E::Start) => S::Running,
            (S::Running, E::Block) => S::Blocked,
            (S::Blocked, E::Unblock) => S::Running,
            (S::Running, E::Finish) => S::Finished,
            (S::Finished, E::Release) => S::Released,
            (S::Released, E::LastChildGone) => S::Deletable,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskEvent {
    Submit,
    EnterGraph,
    BecomeReady,
    Start,
    Block,
    Unblock,
    Finish,
    Release,
    LastChildGone,
}

impl TaskEvent {
    pub const ALL: [TaskEvent; 9] = [
        TaskEvent::Submit,
        TaskEvent::EnterGraph,
        TaskEvent::BecomeReady,
        TaskEvent::Start,
        TaskEvent::Block,
        TaskEvent::Unblock,
        TaskEvent::Finish,
        TaskEvent::Release,
        TaskEvent::LastChildGone,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal transition: {event:?} from state {from:?}")]
pub struct IllegalTransition {
    pub from: TaskState,
    pub event: TaskEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskId(pub u64);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

pub type TaskBody = Box<dyn FnOnce(&TaskContext<'_>) + Send + 'static>;

pub type TaskRef = Arc<Task>;

pub(crate) static DEFAULT_LABEL: LazyLock<Arc<str>> = LazyLock::new(|| Arc::from("task"));

// State and live-children count share one word so that "RELEASED with no
// children" can be observed and claimed by a single compare-and-swap.
const STATE_SHIFT: u32 = 56;
const CHILDREN_MASK: u64 = (1 << STATE_SHIFT) - 1;

fn pack(state: TaskState, children: u64) -> u64 {
    ((state as u64) << STATE_SHIFT) | children
}

/// One task of the program (the runtime's work descriptor).
pub struct Task {
    id: TaskId,
    label: Arc<str>,
    clauses: Vec<DependenceClause>,
    word: AtomicU64,
    pending_predecessors: AtomicUsize,
    parent: Option<TaskRef>,
    creator: usize,
    creation_seq: u64,
    graph_stamp: AtomicU64,
    body: Mutex<Option<TaskBody>>,
    // Outgoing edges; only touched under the parent's graph lock.
    successors: Mutex<Vec<TaskRef>>,
    children: Mutex<TaskGraph>,
}

impl fmt::Debug for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Task")
            .field("id", &self.id)
            .field("label", &self.label)
            .field("state", &self.state())
            .field("live_children", &self.live_children())
            .field("pending_predecessors", &self.pending_predecessors())
            .finish()
    }
}

impl Task {
    /// A new task in state `CREATED`. Clauses are canonicalized.
    pub fn new(
        id: TaskId,
        parent: Option<TaskRef>,
        clauses: &[DependenceClause],
        body: Option<TaskBody>,
    ) -> Task {
        Task::with_origin(id, parent, clauses, body, DEFAULT_LABEL.clone(), 0, 0)
    }

    pub(crate) fn with_origin(
        id: TaskId,
        parent: Option<TaskRef>,
        clauses: &[DependenceClause],
        body: Option<TaskBody>,
        label: Arc<str>,
        creator: usize,
        creation_seq: u64,
    ) -> Task {
        Task {
            id,
            label,
            clauses: merge_clauses(clauses),
            word: AtomicU64::new(pack(TaskState::Created, 0)),
            pending_predecessors: AtomicUsize::new(0),
            parent,
            creator,
            creation_seq,
            graph_stamp: AtomicU64::new(0),
            body: Mutex::new(body),
            successors: Mutex::new(Vec::new()),
            children: Mutex::new(TaskGraph::new()),
        }
    }

    /// The implicit task standing for the main program. It is running from
    /// the start and never finishes.
    pub fn root() -> Task {
        let task = Task::new(TaskId(0), None, &[], None);
        task.word.store(pack(TaskState::Running, 0), Ordering::Release);
        task
    }

    pub fn id(&self) -> TaskId {
        self.id
    }

    pub fn label(&self) -> &Arc<str> {
        &self.label
    }

    pub fn clauses(&self) -> &[DependenceClause] {
        &self.clauses
    }

    pub fn parent(&self) -> Option<&TaskRef> {
        self.parent.as_ref()
    }

    /// Worker that created the task.
    pub fn creator(&self) -> usize {
        self.creator
    }

    /// Position of the task among the tasks created by the same worker.
    pub fn creation_seq(&self) -> u64 {
        self.creation_seq
    }

    /// Global order in which the task was inserted into a dependence graph,
    /// starting at 1; 0 while not yet inserted.
    pub fn graph_stamp(&self) -> u64 {
        self.graph_stamp.load(Ordering::Acquire)
    }

    pub(crate) fn set_graph_stamp(&self, stamp: u64) {
        self.graph_stamp.store(stamp, Ordering::Release);
    }

    pub fn state(&self) -> TaskState {
        TaskState::from_bits(self.word.load(Ordering::Acquire) >> STATE_SHIFT)
    }

    pub fn live_children(&self) -> u64 {
        self.word.load(Ordering::Acquire) & CHILDREN_MASK
    }

    pub fn pending_predecessors(&self) -> usize {
        self.pending_predecessors.load(Ordering::Acquire)
    }

    /// Applies `event` atomically and returns the new state.
    pub fn transition(&self, event: TaskEvent) -> Result<TaskState, IllegalTransition> {
        let mut current = self.word.load(Ordering::Acquire);
        loop {
            let from = TaskState::from_bits(current >> STATE_SHIFT);
            let to = from
                .next(event)
                .ok_or(IllegalTransition { from, event })?;
            let next = pack(to, current & CHILDREN_MASK);
            match self
                .word
                .compare_exchange_weak(current, next, Ordering::AcqRel, Ordering::Acquire)
            {
                Ok(_) => return Ok(to),
                Err(seen) => current = seen,
            }
        }
    }

    /// Runtime-internal transition; an illegal one is a runtime bug.
    pub(crate) fn advance(&self, event: TaskEvent) -> TaskState {
        match self.transition(event) {
            Ok(state) => state,
            Err(err) => panic!("task {}: {err}", self.id),
        }
    }

    /// Claims the deletion of this task. Returns true iff the task was
    /// `RELEASED` with zero live children; exactly one caller ever wins.
    pub fn try_delete(&self) -> bool {
        self.word
            .compare_exchange(
                pack(TaskState::Released, 0),
                pack(TaskState::Deletable, 0),
                Ordering::AcqRel,
                Ordering::Acquire,
            )
            .is_ok()
    }

    pub(crate) fn attach_child(&self) {
        let prev = self.word.fetch_add(1, Ordering::AcqRel);
        debug_assert!(prev & CHILDREN_MASK < CHILDREN_MASK, "live-children overflow");
    }

    /// Decrements the live-children count and returns the remaining count,
    /// or `None` if it was already zero.
    pub fn detach_child(&self) -> Option<u64> {
        let mut current = self.word.load(Ordering::Acquire);
        loop {
            if current & CHILDREN_MASK == 0 {
                return None;
            }
            match self.word.compare_exchange_weak(
                current,
                current - 1,
                Ordering::AcqRel,
                Ordering::Acquire,
            ) {
                Ok(_) => return Some((current & CHILDREN_MASK) - 1),
                Err(seen) => current = seen,
            }
        }
    }

    pub(crate) fn set_pending_predecessors(&self, count: usize) {
        self.pending_predecessors.store(count, Ordering::Release);
    }

    /// Decrements the predecessor count; `None` if it was already zero.
    pub fn satisfy_predecessor(&self) -> Option<usize> {
        self.pending_predecessors
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |n| n.checked_sub(1))
            .ok()
            .map(|prev| prev - 1)
    }

    pub(crate) fn take_body(&self) -> Option<TaskBody> {
        self.body.lock().take()
    }

    pub(crate) fn push_successor(&self, succ: TaskRef) {
        self.successors.lock().push(succ);
    }

    pub(crate) fn take_successors(&self) -> Vec<TaskRef> {
        std::mem::take(&mut *self.successors.lock())
    }

    /// Exclusive access to the dependence graph of this task's children.
    pub fn lock_graph(&self) -> MutexGuard<'_, TaskGraph> {
        self.children.lock()
    }
}
