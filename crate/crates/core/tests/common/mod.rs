//! Shared helpers: random task sets, a brute-force ordering oracle and a
//! runner that timestamps task bodies.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use taskrt::{DependenceClause, Direction, Runtime, Token};

pub type TaskSet = Vec<Vec<DependenceClause>>;

/// Up to `max_tasks` tasks, each with 0..=3 clauses over `max_tokens` tokens.
pub fn random_set(rng: &mut impl Rng, max_tasks: usize, max_tokens: u64) -> TaskSet {
    let tasks = rng.gen_range(1..=max_tasks);
    let tokens = rng.gen_range(1..=max_tokens);
    (0..tasks)
        .map(|_| {
            (0..rng.gen_range(0..=3))
                .map(|_| {
                    let dir = match rng.gen_range(0..3) {
                        0 => Direction::In,
                        1 => Direction::Out,
                        _ => Direction::InOut,
                    };
                    DependenceClause::new(Token(rng.gen_range(0..tokens)), dir)
                })
                .collect()
        })
        .collect()
}

fn accesses(clauses: &[DependenceClause]) -> HashMap<Token, bool> {
    let mut m = HashMap::new();
    for c in clauses {
        let w = !matches!(c.direction, Direction::In);
        *m.entry(c.token).or_insert(false) |= w;
    }
    m
}

/// Whether two tasks touch a common token with at least one of them writing it.
pub fn conflicting(a: &[DependenceClause], b: &[DependenceClause]) -> bool {
    let (a, b) = (accesses(a), accesses(b));
    a.iter().any(|(t, wa)| b.get(t).is_some_and(|wb| *wa || *wb))
}

/// Start and end ticks of every task body on a shared logical clock.
pub struct Timeline {
    pub start: Vec<u64>,
    pub end: Vec<u64>,
}

/// Spawns `set` as top-level tasks in order and waits for them.
pub fn execute(rt: &Runtime, set: &TaskSet) -> Timeline {
    let clock = Arc::new(AtomicU64::new(1));
    let marks: Arc<Vec<(AtomicU64, AtomicU64)>> =
        Arc::new((0..set.len()).map(|_| (AtomicU64::new(0), AtomicU64::new(0))).collect());
    for (i, clauses) in set.iter().enumerate() {
        let (clock, marks) = (clock.clone(), marks.clone());
        rt.spawn(clauses, move |_| {
            marks[i].0.store(clock.fetch_add(1, Ordering::SeqCst), Ordering::SeqCst);
            if i % 3 == 0 {
                std::thread::yield_now();
            }
            marks[i].1.store(clock.fetch_add(1, Ordering::SeqCst), Ordering::SeqCst);
        })
        .expect("runtime is running");
    }
    rt.taskwait();
    Timeline {
        start: marks.iter().map(|m| m.0.load(Ordering::SeqCst)).collect(),
        end: marks.iter().map(|m| m.1.load(Ordering::SeqCst)).collect(),
    }
}

/// Pairs `(i, j)`, `i < j`, that conflict but where `j` started before `i`
/// ended, plus any task that never ran (reported as `(i, i)`).
pub fn violations(set: &TaskSet, t: &Timeline) -> Vec<(usize, usize)> {
    let mut bad: Vec<(usize, usize)> = (0..set.len())
        .filter(|&i| t.start[i] == 0 || t.end[i] == 0)
        .map(|i| (i, i))
        .collect();
    for j in 0..set.len() {
        for i in 0..j {
            if conflicting(&set[i], &set[j]) && t.end[i] > t.start[j] {
                bad.push((i, j));
            }
        }
    }
    bad
}
