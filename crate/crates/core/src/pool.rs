//! Distributed breadth-first ready pool: one deque per thread. The owner
//! pushes at the back and pops at the front; thieves take from the back.

use std::collections::VecDeque;

use crossbeam_utils::CachePadded;
use parking_lot::Mutex;

pub struct ReadyPool<T> {
    queues: Box<[CachePadded<Mutex<VecDeque<T>>>]>,
}

impl<T> ReadyPool<T> {
    pub fn new(threads: usize) -> Self {
        ReadyPool {
            queues: (0..threads.max(1))
                .map(|_| CachePadded::new(Mutex::new(VecDeque::new())))
                .collect(),
        }
    }

    pub fn threads(&self) -> usize {
        self.queues.len()
    }

    pub fn push(&self, owner: usize, item: T) {
        self.queues[owner].lock().push_back(item);
    }

    pub fn pop_local(&self, owner: usize) -> Option<T> {
        self.queues[owner].lock().pop_front()
    }

    pub fn steal_from(&self, victim: usize) -> Option<T> {
        self.queues[victim].lock().pop_back()
    }

    /// One stealing sweep over all other threads, round-robin from `thief + 1`.
    pub fn steal(&self, thief: usize) -> Option<T> {
        let n = self.queues.len();
        (1..n).find_map(|step| {
            let victim = (thief + step) % n;
            // skip the lock for visibly empty victims
            if self.queues[victim].lock().is_empty() {
                None
            } else {
                self.steal_from(victim)
            }
        })
    }

    pub fn len(&self) -> usize {
        self.queues.iter().map(|q| q.lock().len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn clear(&self) {
        for q in self.queues.iter() {
            q.lock().clear();
        }
    }
}
