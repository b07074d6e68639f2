//! Per-worker request queues between task-executing workers and the threads
//! that act as runtime managers.
//!
//! Submit requests must reach the dependence graph in the order their
//! producer created them, so a mailbox's submit queue has a single consumer
//! at a time, enforced with a non-blocking lease. Done requests have no
//! ordering constraint and may be drained by any number of managers.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};

use crossbeam_queue::SegQueue;

use crate::task::TaskRef;

#[derive(Debug)]
pub struct SubmitTaskMessage<T = TaskRef> {
    pub task: T,
    pub creation_seq: u64,
}

#[derive(Debug)]
pub struct DoneTaskMessage<T = TaskRef> {
    pub task: T,
}

#[derive(Debug)]
pub struct Mailbox<T = TaskRef> {
    submit_q: SegQueue<SubmitTaskMessage<T>>,
    done_q: SegQueue<DoneTaskMessage<T>>,
    leased: AtomicBool,
    last_seq: AtomicU64,
    posted: AtomicUsize,
    consumed: AtomicUsize,
}

impl<T> Default for Mailbox<T> {
    fn default() -> Self {
        Mailbox {
            submit_q: SegQueue::new(),
            done_q: SegQueue::new(),
            leased: AtomicBool::new(false),
            last_seq: AtomicU64::new(0),
            posted: AtomicUsize::new(0),
            consumed: AtomicUsize::new(0),
        }
    }
}

impl<T> Mailbox<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Next creation sequence number for the owning worker, starting at 1.
    pub fn next_seq(&self) -> u64 {
        self.last_seq.fetch_add(1, Ordering::Relaxed) + 1
    }

    pub fn post_submit(&self, msg: SubmitTaskMessage<T>) {
        self.posted.fetch_add(1, Ordering::Relaxed);
        self.submit_q.push(msg);
    }

    pub fn post_done(&self, msg: DoneTaskMessage<T>) {
        self.posted.fetch_add(1, Ordering::Relaxed);
        self.done_q.push(msg);
    }

    /// Pops any pending done message; safe from many threads at once.
    pub fn pop_done(&self) -> Option<DoneTaskMessage<T>> {
        let msg = self.done_q.pop();
        if msg.is_some() {
            self.consumed.fetch_add(1, Ordering::Relaxed);
        }
        msg
    }

    /// Grants exclusive pop rights on the submit queue, or `None` (busy)
    /// when another thread holds them. Never blocks.
    pub fn lease_submit_queue(&self) -> Option<SubmitLease<'_, T>> {
        self.leased
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .ok()
            .map(|_| SubmitLease { mailbox: self })
    }

    pub fn is_leased(&self) -> bool {
        self.leased.load(Ordering::Relaxed)
    }

    pub fn pending_submits(&self) -> usize {
        self.submit_q.len()
    }

    pub fn pending_dones(&self) -> usize {
        self.done_q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.submit_q.is_empty() && self.done_q.is_empty()
    }

    /// Messages ever posted and ever popped, in that order.
    pub fn traffic(&self) -> (usize, usize) {
        (
            self.posted.load(Ordering::Relaxed),
            self.consumed.load(Ordering::Relaxed),
        )
    }

    /// Drops every pending message.
    pub(crate) fn discard(&self) {
        while self.submit_q.pop().is_some() {}
        while self.done_q.pop().is_some() {}
    }
}

/// Exclusive consumer rights on one mailbox's submit queue; released on drop.
///
/// Popping submit messages is only possible through a lease:
///
/// ```compile_fail
/// let mailbox: taskrt::mailbox::Mailbox<u32> = taskrt::mailbox::Mailbox::new();
/// mailbox.pop_submit();
/// ```
#[derive(Debug)]
pub struct SubmitLease<'a, T> {
    mailbox: &'a Mailbox<T>,
}

impl<T> SubmitLease<'_, T> {
    pub fn pop_submit(&self) -> Option<SubmitTaskMessage<T>> {
        let msg = self.mailbox.submit_q.pop();
        if msg.is_some() {
            self.mailbox.consumed.fetch_add(1, Ordering::Relaxed);
        }
        msg
    }

    pub fn has_submits(&self) -> bool {
        !self.mailbox.submit_q.is_empty()
    }
}

impl<T> Drop for SubmitLease<'_, T> {
    fn drop(&mut self) {
        let was = self.mailbox.leased.swap(false, Ordering::Release);
        debug_assert!(was, "submit lease released twice");
    }
}
