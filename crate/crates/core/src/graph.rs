//! Per-parent dependence graph over sibling tasks.
//!
//! Each datum token keeps its live last writer and the live readers since
//! that write. Submitting a task adds read-after-write, write-after-read and
//! write-after-write edges from those live accessors; releasing a finished
//! task drops it from every token entry and hands back the successors whose
//! last pending predecessor it was.

use rustc_hash::FxHashMap;

use crate::task::{DependenceClause, Direction, TaskEvent, TaskRef, TaskState, Token};

/// True iff the two accesses must be ordered.
pub fn conflict(a: &DependenceClause, b: &DependenceClause) -> bool {
    a.token == b.token && (a.direction.writes() || b.direction.writes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmitOutcome {
    Ready,
    Pending(usize),
}

#[derive(Debug, Default)]
pub struct TokenEntry {
    pub last_writer: Option<TaskRef>,
    pub readers_since_write: Vec<TaskRef>,
}

impl TokenEntry {
    fn is_empty(&self) -> bool {
        self.last_writer.is_none() && self.readers_since_write.is_empty()
    }
}

#[derive(Debug, Default)]
pub struct TaskGraph {
    entries: FxHashMap<Token, TokenEntry>,
    in_graph: usize,
}

impl TaskGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tasks inserted and not yet released.
    pub fn in_graph_count(&self) -> usize {
        self.in_graph
    }

    pub fn entry(&self, token: Token) -> Option<&TokenEntry> {
        self.entries.get(&token)
    }

    pub fn tracked_tokens(&self) -> usize {
        self.entries.len()
    }

    /// Inserts a `SUBMITTED` task and computes its predecessors. The task ends
    /// `IN_GRAPH`, or `READY` when nothing precedes it.
    pub fn submit(&mut self, task: &TaskRef) -> SubmitOutcome {
        debug_assert_eq!(task.state(), TaskState::Submitted);
        let mut preds: Vec<TaskRef> = Vec::new();
        for clause in task.clauses() {
            let entry = self.entries.entry(clause.token).or_default();
            if let Some(writer) = &entry.last_writer {
                preds.push(writer.clone());
            }
            match clause.direction {
                Direction::In => entry.readers_since_write.push(task.clone()),
                Direction::Out | Direction::InOut => {
                    preds.append(&mut entry.readers_since_write);
                    entry.last_writer = Some(task.clone());
                }
            }
        }
        preds.sort_unstable_by_key(|p| p.id());
        preds.dedup_by_key(|p| p.id());

        let count = preds.len();
        task.set_pending_predecessors(count);
        for pred in preds {
            pred.push_successor(task.clone());
        }
        self.in_graph += 1;
        task.advance(TaskEvent::EnterGraph);
        if count == 0 {
            task.advance(TaskEvent::BecomeReady);
            SubmitOutcome::Ready
        } else {
            SubmitOutcome::Pending(count)
        }
    }

    /// Removes a `FINISHED` task, notifies its successors and returns those
    /// that became `READY`. The task ends `RELEASED`.
    pub fn release(&mut self, task: &TaskRef) -> Vec<TaskRef> {
        debug_assert_eq!(task.state(), TaskState::Finished);
        for clause in task.clauses() {
            let Some(entry) = self.entries.get_mut(&clause.token) else {
                continue;
            };
            if entry
                .last_writer
                .as_ref()
                .is_some_and(|w| w.id() == task.id())
            {
                entry.last_writer = None;
            }
            entry.readers_since_write.retain(|r| r.id() != task.id());
            if entry.is_empty() {
                self.entries.remove(&clause.token);
            }
        }

        let mut ready = Vec::new();
        for succ in task.take_successors() {
            let left = succ
                .satisfy_predecessor()
                .expect("successor predecessor count underflow");
            if left == 0 {
                succ.advance(TaskEvent::BecomeReady);
                ready.push(succ);
            }
        }
        self.in_graph -= 1;
        task.advance(TaskEvent::Release);
        ready
    }

    /// Drops every reference the graph holds.
    pub(crate) fn clear(&mut self) {
        self.entries.clear();
        self.in_graph = 0;
    }
}
