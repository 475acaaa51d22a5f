use std::io::Write;
use std::time::{Duration, Instant};

use super::{Simulation, StepEnergies};
use crate::error::Result;
use crate::model::{norm2, sub, Vec3};

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub steps: u64,
    pub initial: StepEnergies,
    pub last: StepEnergies,
    /// max over steps of `|E - E0| / |E0|`
    pub max_energy_drift: f64,
    pub final_energy_drift: f64,
    /// `|P - P0|` over the initial momentum scale `sum m |v|`
    pub momentum_drift: f64,
    pub n_rebuilds: u64,
    pub n_drift_rebuilds: u64,
    pub wall: Duration,
}

impl RunSummary {
    pub fn steps_per_second(&self) -> f64 {
        let s = self.wall.as_secs_f64();
        if s > 0.0 {
            self.steps as f64 / s
        } else {
            0.0
        }
    }
}

fn log_line<W: Write>(out: &mut W, e: &StepEnergies) -> std::io::Result<()> {
    writeln!(
        out,
        "{:>10} {:>20.12e} {:>20.12e} {:>20.12e} {:>12.4} {:>12.6e}",
        e.step,
        e.kinetic,
        e.potential,
        e.total(),
        e.temperature,
        e.max_drift
    )
}

fn relative(delta: f64, reference: f64) -> f64 {
    if reference != 0.0 {
        delta.abs() / reference.abs()
    } else {
        delta.abs()
    }
}

impl Simulation {
    /// Runs `n_steps` steps, logging every `report_interval` steps (0 turns
    /// the per-step lines off) followed by the timing breakdown. The timing
    /// report is reset at the start so it covers exactly this run.
    pub fn run<W: Write>(
        &mut self,
        n_steps: u64,
        report_interval: u64,
        log: &mut W,
    ) -> Result<RunSummary> {
        let momentum_scale: f64 = {
            let s = &self.state.system;
            s.masses
                .iter()
                .zip(&s.velocities)
                .map(|(&m, v)| m * norm2(*v).sqrt())
                .sum()
        };
        let p0: Vec3 = self.state.system.momentum();
        let initial = self.energies();
        let e0 = initial.total();
        let rebuilds0 = (self.state.n_rebuilds, self.state.n_drift_rebuilds);

        let s = &self.state.system;
        writeln!(
            log,
            "# cpmd run: n={} layout={} supercluster={} workers={} slabs={} dt={} r_cut={} r_list={} rebuild_interval={} prune={}",
            s.len(),
            self.config.layout,
            self.config.supercluster_size,
            self.config.workers,
            self.partition.is_some(),
            self.config.dt,
            self.config.params.r_cut,
            self.config.params.r_list,
            self.config.policy.rebuild_interval,
            self.config.policy.prune_on_build,
        )?;
        writeln!(
            log,
            "# {:>8} {:>20} {:>20} {:>20} {:>12} {:>12}",
            "step", "kinetic", "potential", "total", "temperature", "max_drift"
        )?;
        log_line(log, &initial)?;

        self.timing = Default::default();
        let started = Instant::now();
        let mut last = initial;
        let mut max_drift = 0.0f64;
        for _ in 0..n_steps {
            last = self.velocity_verlet_step()?;
            self.begin("output");
            max_drift = max_drift.max(relative(last.total() - e0, e0));
            if report_interval > 0 && last.step.is_multiple_of(report_interval) {
                log_line(log, &last)?;
            }
            self.end("output");
        }
        let wall = started.elapsed();

        let p1 = self.state.system.momentum();
        let summary = RunSummary {
            steps: n_steps,
            initial,
            last,
            max_energy_drift: max_drift,
            final_energy_drift: relative(last.total() - e0, e0),
            momentum_drift: relative(norm2(sub(p1, p0)).sqrt(), momentum_scale),
            n_rebuilds: self.state.n_rebuilds - rebuilds0.0,
            n_drift_rebuilds: self.state.n_drift_rebuilds - rebuilds0.1,
            wall,
        };
        writeln!(
            log,
            "# energy drift: max {:.6e} final {:.6e} (relative to |E0| = {:.12e})",
            summary.max_energy_drift,
            summary.final_energy_drift,
            e0.abs()
        )?;
        writeln!(log, "# momentum drift: {:.6e}", summary.momentum_drift)?;
        writeln!(
            log,
            "# list rebuilds: {} (drift-triggered {})",
            summary.n_rebuilds, summary.n_drift_rebuilds
        )?;
        writeln!(log, "# performance: {:.3} steps/s", summary.steps_per_second())?;
        writeln!(log, "# timing breakdown")?;
        for line in self.timing.format_table(wall).lines() {
            writeln!(log, "# {line}")?;
        }
        Ok(summary)
    }
}
