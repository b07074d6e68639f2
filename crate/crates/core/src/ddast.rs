//! The DDAST manager: a dispatcher callback through which idle workers
//! temporarily become runtime managers and drain the per-worker mailboxes.
//!
//! Admission is capped by `max_ddast_threads`. An admitted manager sweeps
//! the mailboxes round-robin starting after its own, taking up to
//! `max_ops_thread` messages from each (submits first) and stopping as soon
//! as `min_ready_tasks` tasks are ready. `max_spins` consecutive sweeps that
//! find nothing also end the visit.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::instrument::{Counter, ThreadState};
use crate::mailbox::{DoneTaskMessage, SubmitTaskMessage};
use crate::runtime::RuntimeCore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdastConfig {
    pub max_ddast_threads: usize,
    pub max_spins: usize,
    pub max_ops_thread: usize,
    pub min_ready_tasks: usize,
}

/// Tuned defaults for a runtime with `num_threads` threads.
pub fn default_config(num_threads: usize) -> DdastConfig {
    DdastConfig {
        max_ddast_threads: num_threads.max(1).div_ceil(8),
        max_spins: 1,
        max_ops_thread: 8,
        min_ready_tasks: 4,
    }
}

impl DdastConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("max_ddast_threads", self.max_ddast_threads),
            ("max_spins", self.max_spins),
            ("max_ops_thread", self.max_ops_thread),
        ] {
            if v == 0 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Number of threads currently inside the callback.
#[derive(Debug, Default)]
pub struct ManagerGauge {
    active: AtomicUsize,
}

impl ManagerGauge {
    pub fn active(&self) -> usize {
        self.active.load(Ordering::Acquire)
    }

    /// Takes a manager slot unless `cap` are already taken.
    pub fn try_enter(&self, cap: usize) -> bool {
        let entered = self
            .active
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |n| (n < cap).then_some(n + 1))
            .is_ok();
        debug_assert!(self.active() <= cap || !entered || cap == 0);
        entered
    }

    pub fn leave(&self) {
        let prev = self.active.fetch_sub(1, Ordering::AcqRel);
        debug_assert!(prev > 0, "manager gauge underflow");
    }

    #[cfg(test)]
    pub(crate) fn force(&self, n: usize) {
        self.active.store(n, Ordering::Release);
    }
}

/// Messages handled during one visit of a manager to one mailbox.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Visit {
    pub mailbox: usize,
    pub submits: usize,
    pub dones: usize,
}

impl Visit {
    pub fn total(&self) -> usize {
        self.submits + self.dones
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallbackOutcome {
    /// The manager cap was reached; nothing was touched.
    Rejected,
    Drained { messages: usize, sweeps: usize },
}

pub(crate) fn ddast_callback(core: &RuntimeCore, worker: usize) -> CallbackOutcome {
    ddast_callback_observed(core, worker, |_| {})
}

pub(crate) fn ddast_callback_observed(
    core: &RuntimeCore,
    worker: usize,
    mut observe: impl FnMut(Visit),
) -> CallbackOutcome {
    let cfg = core.ddast_config();
    let gauge = core.manager_gauge();
    if !gauge.try_enter(cfg.max_ddast_threads) {
        return CallbackOutcome::Rejected;
    }
    let inst = core.instrument();
    inst.counter_delta(worker, Counter::ActiveManagers, 1);
    let previous = inst.thread_state(worker, ThreadState::Manager);

    let n = core.threads();
    let (mut messages, mut sweeps, mut empty_spins) = (0, 0, 0);
    'sweeps: loop {
        sweeps += 1;
        let mut in_sweep = 0;
        for step in 1..=n {
            let id = (worker + step) % n;
            let mailbox = core.mailbox(id);
            if mailbox.is_empty() {
                continue;
            }
            let Some(lease) = mailbox.lease_submit_queue() else {
                continue;
            };
            let mut visit = Visit {
                mailbox: id,
                submits: 0,
                dones: 0,
            };
            let mut satisfied = false;
            while visit.total() < cfg.max_ops_thread {
                if let Some(msg) = lease.pop_submit() {
                    process_submit(core, msg, worker);
                    visit.submits += 1;
                } else if let Some(msg) = mailbox.pop_done() {
                    process_done(core, msg, worker);
                    visit.dones += 1;
                } else {
                    break;
                }
                if core.ready_count() >= cfg.min_ready_tasks {
                    satisfied = true;
                    break;
                }
            }
            drop(lease);
            if visit.total() > 0 {
                observe(visit);
            }
            in_sweep += visit.total();
            if satisfied {
                messages += in_sweep;
                break 'sweeps;
            }
        }
        messages += in_sweep;
        if core.ready_count() >= cfg.min_ready_tasks {
            break;
        }
        if in_sweep == 0 {
            empty_spins += 1;
            if empty_spins >= cfg.max_spins {
                break;
            }
        } else {
            empty_spins = 0;
        }
    }

    inst.thread_state(worker, previous.unwrap_or(ThreadState::Idle));
    inst.counter_delta(worker, Counter::ActiveManagers, -1);
    gauge.leave();
    CallbackOutcome::Drained { messages, sweeps }
}

/// Inserts a submitted task into its parent's graph; a ready task goes to
/// the manager's own deque. The caller must hold the producer's submit lease.
pub fn process_submit(core: &RuntimeCore, msg: SubmitTaskMessage, worker: usize) {
    core.submit_to_graph(&msg.task, worker);
}

/// Releases a finished task, schedules the successors it unblocked and
/// attempts its deletion.
pub fn process_done(core: &RuntimeCore, msg: DoneTaskMessage, worker: usize) {
    core.release_finished(&msg.task, worker);
}
