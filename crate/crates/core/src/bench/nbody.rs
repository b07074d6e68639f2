use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::block::Block;
use super::{BenchError, Workload};
use crate::runtime::{Runtime, RuntimeError, TaskContext};
use crate::task::DependenceClause;

const DT: f64 = 0.01;
const SOFTENING: f64 = 1e-3;

// Particle block layout: x, y, z, vx, vy, vz, mass, each `bs` long.
const FIELDS: usize = 7;
const X: usize = 0;
const V: usize = 3;
const MASS: usize = 6;

/// Gravitational N-body with nested tasks: every timestep is a top-level
/// task that spawns all pairwise block force tasks and one update task, then
/// waits for them.
pub struct NBody {
    blocks: usize,
    bs: usize,
    timesteps: usize,
    particles: Arc<[Block]>,
    forces: Arc<[Block]>,
    labels: Arc<Labels>,
}

struct Labels {
    step: Arc<str>,
    force: Arc<str>,
    update: Arc<str>,
}

pub fn task_count(particles: usize, timesteps: usize, bs: usize) -> Result<u64, BenchError> {
    let n = super::blocks_per_side(particles, bs)? as u64;
    Ok(timesteps as u64 * (n * n + 2))
}

/// Accumulates on `force` (block `target`) the pull of every particle of `source`.
pub fn force_block(target: &[f64], source: &[f64], force: &mut [f64], bs: usize, same_block: bool) {
    for p in 0..bs {
        let (px, py, pz) = (target[p], target[bs + p], target[2 * bs + p]);
        let (mut fx, mut fy, mut fz) = (0.0, 0.0, 0.0);
        for q in 0..bs {
            if same_block && p == q {
                continue;
            }
            let dx = source[X * bs + q] - px;
            let dy = source[(X + 1) * bs + q] - py;
            let dz = source[(X + 2) * bs + q] - pz;
            let d2 = dx * dx + dy * dy + dz * dz + SOFTENING;
            let s = source[MASS * bs + q] / (d2 * d2.sqrt());
            fx += s * dx;
            fy += s * dy;
            fz += s * dz;
        }
        force[p] += fx;
        force[bs + p] += fy;
        force[2 * bs + p] += fz;
    }
}

/// Advances one block by one timestep and clears its accumulated force.
pub fn update_block(particles: &mut [f64], force: &mut [f64], bs: usize) {
    for d in 0..3 {
        for p in 0..bs {
            let v = &mut particles[(V + d) * bs + p];
            *v += force[d * bs + p] * DT;
            let v = *v;
            particles[(X + d) * bs + p] += v * DT;
            force[d * bs + p] = 0.0;
        }
    }
}

impl NBody {
    pub fn new(particles: usize, timesteps: usize, bs: usize) -> Result<Self, BenchError> {
        let blocks = super::blocks_per_side(particles, bs)?;
        let mut rng = StdRng::seed_from_u64(0x6e62);
        let particle_blocks = (0..blocks)
            .map(|_| {
                let mut data = vec![0.0; FIELDS * bs];
                for v in &mut data[X * bs..V * bs] {
                    *v = rng.gen_range(0.0..1.0);
                }
                for m in &mut data[MASS * bs..] {
                    *m = rng.gen_range(0.5..1.5) / particles as f64;
                }
                Block::new(data)
            })
            .collect();
        let forces = (0..blocks).map(|_| Block::zeros(3 * bs)).collect();
        Ok(NBody {
            blocks,
            bs,
            timesteps,
            particles: particle_blocks,
            forces,
            labels: Arc::new(Labels {
                step: Arc::from("nbody_step"),
                force: Arc::from("nbody_force"),
                update: Arc::from("nbody_update"),
            }),
        })
    }

    fn all_blocks_inout(particles: &[Block], forces: &[Block]) -> Vec<DependenceClause> {
        particles
            .iter()
            .chain(forces)
            .map(|b| DependenceClause::inout(b.token()))
            .collect()
    }

    fn spawn_step(
        ctx: &TaskContext<'_>,
        particles: &Arc<[Block]>,
        forces: &Arc<[Block]>,
        labels: &Labels,
        bs: usize,
    ) {
        let n = particles.len();
        for i in 0..n {
            for j in 0..n {
                let target = particles[i].clone();
                let source = particles[j].clone();
                let force = forces[i].clone();
                let clauses = [
                    DependenceClause::input(target.token()),
                    DependenceClause::input(source.token()),
                    DependenceClause::inout(force.token()),
                ];
                ctx.spawn_labeled(&labels.force, &clauses, move |_| {
                    if i == j {
                        let t = target.read();
                        force_block(&t, &t, &mut force.write(), bs, true);
                    } else {
                        force_block(&target.read(), &source.read(), &mut force.write(), bs, false);
                    }
                });
            }
        }
        let (p, f) = (particles.clone(), forces.clone());
        ctx.spawn_labeled(&labels.update, &Self::all_blocks_inout(particles, forces), move |_| {
            for (pb, fb) in p.iter().zip(f.iter()) {
                update_block(&mut pb.write(), &mut fb.write(), bs);
            }
        });
        ctx.taskwait();
    }
}

impl Workload for NBody {
    fn task_count(&self) -> u64 {
        let n = self.blocks as u64;
        self.timesteps as u64 * (n * n + 2)
    }

    fn spawn_all(&mut self, rt: &Runtime) -> Result<(), RuntimeError> {
        let clauses = Self::all_blocks_inout(&self.particles, &self.forces);
        for _ in 0..self.timesteps {
            let (p, f, labels, bs) = (
                self.particles.clone(),
                self.forces.clone(),
                self.labels.clone(),
                self.bs,
            );
            rt.spawn_labeled(&self.labels.step, &clauses, move |ctx| {
                Self::spawn_step(ctx, &p, &f, &labels, bs);
            })?;
        }
        Ok(())
    }

    fn run_sequential(&mut self) {
        let (n, bs) = (self.blocks, self.bs);
        for _ in 0..self.timesteps {
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        let t = self.particles[i].read();
                        force_block(&t, &t, &mut self.forces[i].write(), bs, true);
                    } else {
                        force_block(
                            &self.particles[i].read(),
                            &self.particles[j].read(),
                            &mut self.forces[i].write(),
                            bs,
                            false,
                        );
                    }
                }
            }
            for (pb, fb) in self.particles.iter().zip(self.forces.iter()) {
                update_block(&mut pb.write(), &mut fb.write(), bs);
            }
        }
    }

    fn output(&self) -> Vec<f64> {
        self.particles.iter().flat_map(|b| b.snapshot()).collect()
    }
}
