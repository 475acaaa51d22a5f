//! Multi-worker force evaluation with a fixed-order reduction.
//!
//! Worker `w` always runs the same set of work units into its own
//! clustered-order buffer; buffers and energies are then summed in worker
//! order. For a fixed assignment the result is therefore bit-identical from
//! run to run, whatever the OS scheduling.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{compute_units, ClusterForces, KernelInput};
use crate::model::{CompensatedSum, Vec3};

/// Splits `costs` into `workers` contiguous chunks of roughly equal total
/// cost. Every chunk is returned, empty ones included.
pub fn partition_by_cost(costs: &[usize], workers: usize) -> Vec<Vec<usize>> {
    let workers = workers.max(1);
    let total: usize = costs.iter().sum();
    let mut out = vec![Vec::new(); workers];
    let mut prefix = 0usize;
    for (unit, &c) in costs.iter().enumerate() {
        // place a unit by the midpoint of its cost interval
        let mid = 2 * prefix + c;
        let w = if total == 0 {
            unit * workers / costs.len().max(1)
        } else {
            (mid * workers / (2 * total)).min(workers - 1)
        };
        out[w].push(unit);
        prefix += c;
    }
    out
}

pub struct ForcePool {
    pool: rayon::ThreadPool,
    workers: usize,
    buffers: Vec<Vec<Vec3>>,
}

#[derive(Clone, Debug)]
pub struct ParallelOutput {
    pub forces: ClusterForces,
    /// kernel wall time of each worker (s)
    pub worker_seconds: Vec<f64>,
}

impl ForcePool {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::param("worker count must be at least 1"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|k| format!("force-{k}"))
            .build()
            .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
        Ok(ForcePool {
            pool,
            workers,
            buffers: Vec::new(),
        })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Runs `assignment[w]` on worker `w` and reduces in worker order.
    pub fn compute(
        &mut self,
        inp: &KernelInput<'_>,
        assignment: &[Vec<usize>],
    ) -> Result<ParallelOutput> {
        let n_slots = inp.grid.n_slots();
        self.buffers.resize_with(assignment.len(), Vec::new);
        for b in &mut self.buffers {
            b.clear();
            b.resize(n_slots, [0.0; 3]);
        }
        let results: Vec<Result<(f64, f64, f64)>> = self.pool.install(|| {
            self.buffers
                .par_iter_mut()
                .zip(assignment.par_iter())
                .with_max_len(1)
                .map(|(buf, units)| {
                    let t0 = Instant::now();
                    let (e_lj, e_coul) = compute_units(inp, units, buf)?;
                    Ok((e_lj, e_coul, t0.elapsed().as_secs_f64()))
                })
                .collect()
        });

        let mut e_lj = CompensatedSum::default();
        let mut e_coulomb = CompensatedSum::default();
        let mut worker_seconds = Vec::with_capacity(results.len());
        for r in results {
            let (lj, coul, secs) = r?;
            e_lj.add(lj);
            e_coulomb.add(coul);
            worker_seconds.push(secs);
        }
        let mut forces = match self.buffers.first() {
            Some(b) => b.clone(),
            None => vec![[0.0; 3]; n_slots],
        };
        for buf in self.buffers.iter().skip(1) {
            for (f, b) in forces.iter_mut().zip(buf) {
                f[0] += b[0];
                f[1] += b[1];
                f[2] += b[2];
            }
        }
        Ok(ParallelOutput {
            forces: ClusterForces {
                forces,
                e_lj: e_lj.value(),
                e_coulomb: e_coulomb.value(),
            },
            worker_seconds,
        })
    }
}
