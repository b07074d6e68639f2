use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::block::Block;
use super::{BenchError, Workload};
use crate::runtime::{Runtime, RuntimeError};
use crate::task::DependenceClause;

/// Initial block presence: the diagonal, upper blocks outside rows that are
/// multiples of 3 and lower blocks outside such columns.
pub fn initially_present(i: usize, j: usize) -> bool {
    i == j || (i < j && !i.is_multiple_of(3)) || (i > j && !j.is_multiple_of(3))
}

/// Blocked right-looking LU without pivoting over a sparse block matrix.
/// Missing trailing blocks are allocated (zeroed) by the creating thread the
/// first time an update targets them.
pub struct SparseLu {
    n: usize,
    bs: usize,
    blocks: Vec<Option<Block>>,
    labels: [Arc<str>; 4],
}

/// Tasks the factorization creates for an `n x n` block grid, obtained by
/// replaying block presence and fill-in.
pub fn task_count(ms: usize, bs: usize) -> Result<u64, BenchError> {
    let n = super::blocks_per_side(ms, bs)?;
    let mut present: Vec<bool> = (0..n * n).map(|x| initially_present(x / n, x % n)).collect();
    let mut count = 0u64;
    for k in 0..n {
        count += 1;
        count += (k + 1..n).filter(|&j| present[k * n + j]).count() as u64;
        count += (k + 1..n).filter(|&i| present[i * n + k]).count() as u64;
        for i in k + 1..n {
            if !present[i * n + k] {
                continue;
            }
            for j in k + 1..n {
                if present[k * n + j] {
                    present[i * n + j] = true;
                    count += 1;
                }
            }
        }
    }
    Ok(count)
}

pub fn lu0(diag: &mut [f64], bs: usize) {
    for k in 0..bs {
        for i in k + 1..bs {
            diag[i * bs + k] /= diag[k * bs + k];
            let lik = diag[i * bs + k];
            for j in k + 1..bs {
                diag[i * bs + j] -= lik * diag[k * bs + j];
            }
        }
    }
}

/// Row panel: `row = L^-1 row` with the unit-lower factor of `diag`.
pub fn fwd(diag: &[f64], row: &mut [f64], bs: usize) {
    for k in 0..bs {
        for i in k + 1..bs {
            let lik = diag[i * bs + k];
            for j in 0..bs {
                row[i * bs + j] -= lik * row[k * bs + j];
            }
        }
    }
}

/// Column panel: `col = col U^-1` with the upper factor of `diag`.
pub fn bdiv(diag: &[f64], col: &mut [f64], bs: usize) {
    for i in 0..bs {
        for k in 0..bs {
            col[i * bs + k] /= diag[k * bs + k];
            let cik = col[i * bs + k];
            for j in k + 1..bs {
                col[i * bs + j] -= cik * diag[k * bs + j];
            }
        }
    }
}

/// Trailing update `inner -= col * row`.
pub fn bmod(col: &[f64], row: &[f64], inner: &mut [f64], bs: usize) {
    for i in 0..bs {
        for k in 0..bs {
            let cik = col[i * bs + k];
            for j in 0..bs {
                inner[i * bs + j] -= cik * row[k * bs + j];
            }
        }
    }
}

enum Step {
    Lu0(Block),
    Fwd(Block, Block),
    Bdiv(Block, Block),
    Bmod(Block, Block, Block),
}

impl Step {
    fn run(&self, bs: usize) {
        match self {
            Step::Lu0(d) => lu0(&mut d.write(), bs),
            Step::Fwd(d, r) => fwd(&d.read(), &mut r.write(), bs),
            Step::Bdiv(d, c) => bdiv(&d.read(), &mut c.write(), bs),
            Step::Bmod(c, r, x) => bmod(&c.read(), &r.read(), &mut x.write(), bs),
        }
    }

    fn clauses(&self) -> Vec<DependenceClause> {
        use DependenceClause as C;
        match self {
            Step::Lu0(d) => vec![C::inout(d.token())],
            Step::Fwd(d, t) | Step::Bdiv(d, t) => vec![C::input(d.token()), C::inout(t.token())],
            Step::Bmod(c, r, x) => vec![
                C::input(c.token()),
                C::input(r.token()),
                C::inout(x.token()),
            ],
        }
    }

    fn kind(&self) -> usize {
        match self {
            Step::Lu0(_) => 0,
            Step::Fwd(..) => 1,
            Step::Bdiv(..) => 2,
            Step::Bmod(..) => 3,
        }
    }
}

impl SparseLu {
    pub fn new(ms: usize, bs: usize) -> Result<Self, BenchError> {
        let n = super::blocks_per_side(ms, bs)?;
        let mut rng = StdRng::seed_from_u64(0x6c75);
        let blocks = (0..n * n)
            .map(|x| {
                let (i, j) = (x / n, x % n);
                initially_present(i, j).then(|| {
                    let mut data: Vec<f64> = (0..bs * bs).map(|_| rng.gen_range(0.0..1.0)).collect();
                    if i == j {
                        // diagonal dominance keeps the pivot-free factorization stable
                        for d in 0..bs {
                            data[d * bs + d] += (2 * ms) as f64;
                        }
                    }
                    Block::new(data)
                })
            })
            .collect();
        Ok(SparseLu {
            n,
            bs,
            blocks,
            labels: ["lu0", "fwd", "bdiv", "bmod"].map(Arc::from),
        })
    }

    /// Walks the factorization in creation order, allocating fill-in.
    fn for_each_step(&mut self, mut emit: impl FnMut(Step)) {
        let (n, bs) = (self.n, self.bs);
        let b = |blocks: &Vec<Option<Block>>, i: usize, j: usize| blocks[i * n + j].clone();
        for k in 0..n {
            let diag = b(&self.blocks, k, k).expect("diagonal blocks are always present");
            emit(Step::Lu0(diag.clone()));
            for j in k + 1..n {
                if let Some(row) = b(&self.blocks, k, j) {
                    emit(Step::Fwd(diag.clone(), row));
                }
            }
            for i in k + 1..n {
                if let Some(col) = b(&self.blocks, i, k) {
                    emit(Step::Bdiv(diag.clone(), col));
                }
            }
            for i in k + 1..n {
                let Some(col) = b(&self.blocks, i, k) else {
                    continue;
                };
                for j in k + 1..n {
                    let Some(row) = b(&self.blocks, k, j) else {
                        continue;
                    };
                    let inner = self.blocks[i * n + j]
                        .get_or_insert_with(|| Block::zeros(bs * bs))
                        .clone();
                    emit(Step::Bmod(col.clone(), row, inner));
                }
            }
        }
    }

    pub fn present_blocks(&self) -> usize {
        self.blocks.iter().filter(|b| b.is_some()).count()
    }
}

impl Workload for SparseLu {
    fn task_count(&self) -> u64 {
        task_count(self.n * self.bs, self.bs).expect("validated at construction")
    }

    fn spawn_all(&mut self, rt: &Runtime) -> Result<(), RuntimeError> {
        let bs = self.bs;
        let labels = self.labels.clone();
        let mut result = Ok(());
        self.for_each_step(|step| {
            if result.is_err() {
                return;
            }
            let label = &labels[step.kind()];
            result = rt
                .spawn_labeled(label, &step.clauses(), move |_| step.run(bs))
                .map(drop);
        });
        result
    }

    fn run_sequential(&mut self) {
        let bs = self.bs;
        self.for_each_step(|step| step.run(bs));
    }

    fn output(&self) -> Vec<f64> {
        let len = self.bs * self.bs;
        self.blocks
            .iter()
            .flat_map(|b| b.as_ref().map_or_else(|| vec![0.0; len], Block::snapshot))
            .collect()
    }
}
