use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::block::Block;
use super::{BenchError, Workload};
use crate::runtime::{Runtime, RuntimeError};
use crate::task::DependenceClause;

/// Blocked `C += A * B` with one task per `(i, j, k)` block triple.
pub struct Matmul {
    n: usize,
    bs: usize,
    a: Vec<Block>,
    b: Vec<Block>,
    c: Vec<Block>,
    label: Arc<str>,
}

pub fn task_count(ms: usize, bs: usize) -> Result<u64, BenchError> {
    let n = super::blocks_per_side(ms, bs)? as u64;
    Ok(n * n * n)
}

impl Matmul {
    pub fn new(ms: usize, bs: usize) -> Result<Self, BenchError> {
        let n = super::blocks_per_side(ms, bs)?;
        let mut rng = StdRng::seed_from_u64(0x6d6d);
        let mut random_block = || Block::new((0..bs * bs).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let a = (0..n * n).map(|_| random_block()).collect();
        let b = (0..n * n).map(|_| random_block()).collect();
        let c = (0..n * n).map(|_| Block::zeros(bs * bs)).collect();
        Ok(Matmul {
            n,
            bs,
            a,
            b,
            c,
            label: Arc::from("matmul"),
        })
    }

    fn triples(&self) -> impl Iterator<Item = (usize, usize, usize)> {
        let n = self.n;
        (0..n).flat_map(move |i| (0..n).flat_map(move |j| (0..n).map(move |k| (i, j, k))))
    }
}

/// `c += a * b` on `bs x bs` row-major blocks.
pub fn gemm_block(a: &[f64], b: &[f64], c: &mut [f64], bs: usize) {
    for i in 0..bs {
        for k in 0..bs {
            let aik = a[i * bs + k];
            let brow = &b[k * bs..(k + 1) * bs];
            let crow = &mut c[i * bs..(i + 1) * bs];
            for (cij, bkj) in crow.iter_mut().zip(brow) {
                *cij += aik * bkj;
            }
        }
    }
}

impl Workload for Matmul {
    fn task_count(&self) -> u64 {
        (self.n * self.n * self.n) as u64
    }

    fn spawn_all(&mut self, rt: &Runtime) -> Result<(), RuntimeError> {
        let (n, bs) = (self.n, self.bs);
        for (i, j, k) in self.triples() {
            let a = self.a[i * n + k].clone();
            let b = self.b[k * n + j].clone();
            let c = self.c[i * n + j].clone();
            let clauses = [
                DependenceClause::input(a.token()),
                DependenceClause::input(b.token()),
                DependenceClause::inout(c.token()),
            ];
            rt.spawn_labeled(&self.label, &clauses, move |_| {
                gemm_block(&a.read(), &b.read(), &mut c.write(), bs);
            })?;
        }
        Ok(())
    }

    fn run_sequential(&mut self) {
        let n = self.n;
        for (i, j, k) in self.triples() {
            gemm_block(
                &self.a[i * n + k].read(),
                &self.b[k * n + j].read(),
                &mut self.c[i * n + j].write(),
                self.bs,
            );
        }
    }

    fn output(&self) -> Vec<f64> {
        self.c.iter().flat_map(|b| b.snapshot()).collect()
    }
}
