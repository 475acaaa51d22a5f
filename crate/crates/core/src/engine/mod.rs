//! Velocity-Verlet integration around the cluster-pair machinery: list
//! lifecycle with a drift guard, multi-worker forces, optional slab load
//! balancing and per-section timing.

pub mod balance;
pub mod parallel;
pub mod run;
pub mod timing;

pub use balance::{rebalance_slabs, relative_spread, SlabPartition};
pub use parallel::{partition_by_cost, ForcePool};
pub use run::RunSummary;
pub use timing::{timed_section, TimingReport};

use crate::error::{Error, Result};
use crate::gridder::{build_cluster_grid, CellSizing, ClusterGrid};
use crate::kernels::{ClusterAttributes, KernelInput, KernelLayout, PairTable};
use crate::model::{validate_system, ForcesEnergies, NonbondedParams, ParticleSystem, Vec3};
use crate::oracle::{update_drift_in_place, DriftTracker};
use crate::pairlist::{build_pair_list, prune_pair_list, ClusterPairList, SUPERCLUSTER_GROUP};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ListPolicy {
    /// rebuild when this many steps have passed since the last build
    pub rebuild_interval: u64,
    /// prune right after each build when the list is reused
    pub prune_on_build: bool,
}

impl Default for ListPolicy {
    fn default() -> Self {
        ListPolicy {
            rebuild_interval: 10,
            prune_on_build: true,
        }
    }
}

/// What drives the slab widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BalanceMetric {
    /// measured kernel wall time per slab
    WallTime,
    /// admitted particle pairs per slab; deterministic
    AdmittedPairs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlabConfig {
    pub min_width: Option<f64>,
    pub relaxation: f64,
    pub metric: BalanceMetric,
}

impl Default for SlabConfig {
    fn default() -> Self {
        SlabConfig {
            min_width: None,
            relaxation: balance::DEFAULT_RELAXATION,
            metric: BalanceMetric::WallTime,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub params: NonbondedParams,
    pub layout: KernelLayout,
    pub supercluster_size: usize,
    pub policy: ListPolicy,
    pub workers: usize,
    /// one slab per worker when set
    pub slabs: Option<SlabConfig>,
    pub sizing: CellSizing,
    /// ps
    pub dt: f64,
}

impl EngineConfig {
    pub fn new(params: NonbondedParams, layout: KernelLayout, dt: f64) -> Self {
        EngineConfig {
            params,
            layout,
            supercluster_size: 1,
            policy: ListPolicy::default(),
            workers: 1,
            slabs: None,
            sizing: CellSizing::default(),
            dt,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RebuildReason {
    Initial,
    Interval,
    Drift,
}

#[derive(Clone, Debug)]
pub struct MDState {
    pub system: ParticleSystem,
    pub step: u64,
    pub grid: ClusterGrid,
    pub list: ClusterPairList,
    pub drift: DriftTracker,
    pub attrs: ClusterAttributes,
    /// forces at the current positions, original ordering
    pub forces: ForcesEnergies,
    pub n_rebuilds: u64,
    pub n_drift_rebuilds: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepEnergies {
    pub step: u64,
    pub kinetic: f64,
    pub potential: f64,
    pub temperature: f64,
    pub max_drift: f64,
}

impl StepEnergies {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

pub struct Simulation {
    pub config: EngineConfig,
    pub state: MDState,
    pub partition: Option<SlabPartition>,
    pub timing: TimingReport,
    pool: ForcePool,
    table: PairTable,
    assignment: Vec<Vec<usize>>,
    slab_cost: Vec<f64>,
}

fn unit_centers_x(list: &ClusterPairList, grid: &ClusterGrid) -> Vec<f64> {
    if list.supercluster_size == SUPERCLUSTER_GROUP {
        list.superclusters
            .iter()
            .map(|g| grid.bboxes[g.first_i].center()[0])
            .collect()
    } else {
        grid.bboxes.iter().map(|b| b.center()[0]).collect()
    }
}

impl Simulation {
    pub fn new(system: ParticleSystem, config: EngineConfig) -> Result<Self> {
        let report = validate_system(&system, &config.params);
        if !report.is_empty() {
            let msg: Vec<String> = report.iter().map(|v| v.to_string()).collect();
            return Err(Error::Validation(msg.join("; ")));
        }
        if !(config.dt > 0.0) {
            return Err(Error::param(format!("time step must be positive, got {}", config.dt)));
        }
        if config.policy.rebuild_interval == 0 {
            return Err(Error::param("rebuild interval must be at least 1"));
        }
        let pool = ForcePool::new(config.workers)?;
        let partition = match &config.slabs {
            Some(sc) => {
                let min_width = sc.min_width.unwrap_or(config.params.r_list);
                Some(
                    SlabPartition::uniform(config.workers, system.sim_box.lengths[0], min_width)?
                        .with_relaxation(sc.relaxation),
                )
            }
            None => None,
        };
        let table = PairTable::new(&config.params);
        let (grid, list, attrs) = Self::build_lists(&system, &config, 0)?;
        let drift = DriftTracker::new(system.positions.clone());
        let n = system.len();
        let mut sim = Simulation {
            state: MDState {
                system,
                step: 0,
                grid,
                list,
                drift,
                attrs,
                forces: ForcesEnergies::zeros(n),
                n_rebuilds: 0,
                n_drift_rebuilds: 0,
            },
            config,
            partition,
            timing: TimingReport::new(),
            pool,
            table,
            assignment: Vec::new(),
            slab_cost: Vec::new(),
        };
        sim.refresh_assignment();
        sim.compute_forces()?;
        Ok(sim)
    }

    fn build_lists(
        system: &ParticleSystem,
        config: &EngineConfig,
        step: u64,
    ) -> Result<(ClusterGrid, ClusterPairList, ClusterAttributes)> {
        let grid = build_cluster_grid(system, config.layout.m, config.sizing)?;
        let mut list = build_pair_list(
            &grid,
            &system.sim_box,
            config.params.r_list,
            config.layout.n_lane,
            config.supercluster_size,
        )?
        .with_build_step(step);
        if config.policy.prune_on_build && config.policy.rebuild_interval > 1 {
            list = prune_pair_list(&list, &grid.clustered_positions, &system.sim_box);
        }
        let attrs = ClusterAttributes::gather(&grid, system);
        Ok((grid, list, attrs))
    }

    fn kernel_input(&self) -> KernelInput<'_> {
        KernelInput {
            list: &self.state.list,
            grid: &self.state.grid,
            positions: &self.state.grid.clustered_positions,
            attrs: &self.state.attrs,
            table: &self.table,
            sim_box: &self.state.system.sim_box,
            layout: self.config.layout,
        }
    }

    fn unit_costs(&self) -> Vec<usize> {
        let inp = self.kernel_input();
        (0..inp.n_units()).map(|u| inp.unit_cost(u)).collect()
    }

    /// Rebalances slabs (if enabled) and recomputes the per-worker units.
    fn refresh_assignment(&mut self) {
        let costs = self.unit_costs();
        match self.partition.take() {
            Some(mut part) => {
                if self.slab_cost.len() == part.n_slabs() && self.slab_cost.iter().all(|&t| t > 0.0) {
                    if let Ok(next) = rebalance_slabs(&part, &self.slab_cost) {
                        part = next;
                    }
                }
                part.assign(&unit_centers_x(&self.state.list, &self.state.grid));
                self.assignment = part.units_per_slab();
                self.slab_cost = vec![0.0; part.n_slabs()];
                self.partition = Some(part);
            }
            None => {
                self.assignment = partition_by_cost(&costs, self.config.workers);
            }
        }
    }

    fn begin(&mut self, name: &str) {
        let r = self.timing.start(name);
        debug_assert!(r.is_ok(), "{r:?}");
    }

    fn end(&mut self, name: &str) {
        let r = self.timing.stop(name);
        debug_assert!(r.is_ok(), "{r:?}");
    }

    /// Rebuilds grid and list from the current positions.
    pub fn rebuild(&mut self, reason: RebuildReason) -> Result<()> {
        self.begin("list_build");
        let built = Self::build_lists(&self.state.system, &self.config, self.state.step);
        self.end("list_build");
        let (grid, list, attrs) = built?;
        self.state.grid = grid;
        self.state.list = list;
        self.state.attrs = attrs;
        self.state.drift.reset(&self.state.system.positions);
        self.state.n_rebuilds += 1;
        if reason == RebuildReason::Drift {
            self.state.n_drift_rebuilds += 1;
        }
        self.begin("balance");
        self.refresh_assignment();
        self.end("balance");
        Ok(())
    }

    /// Refreshes clustered positions and the drift tracker, then rebuilds
    /// when the interval has elapsed or the buffer could be exhausted.
    pub fn lifecycle_tick(&mut self) -> Result<Option<RebuildReason>> {
        let since_build = self.state.step - self.state.list.build_step;
        let state = &mut self.state;
        state.grid.update_positions(&state.system.positions, &state.system.sim_box);
        update_drift_in_place(&mut state.drift, &state.system.positions, &state.system.sim_box)?;
        let buffer = self.config.params.r_list - self.config.params.r_cut;
        let reason = if 2.0 * state.drift.max_displacement > buffer {
            Some(RebuildReason::Drift)
        } else if since_build >= self.config.policy.rebuild_interval {
            Some(RebuildReason::Interval)
        } else {
            None
        };
        if let Some(r) = reason {
            self.rebuild(r)?;
        }
        Ok(reason)
    }

    /// Evaluates forces for the current positions into `state.forces`.
    pub fn compute_forces(&mut self) -> Result<()> {
        let table = &self.table;
        let inp = KernelInput {
            list: &self.state.list,
            grid: &self.state.grid,
            positions: &self.state.grid.clustered_positions,
            attrs: &self.state.attrs,
            table,
            sim_box: &self.state.system.sim_box,
            layout: self.config.layout,
        };
        let out = self.pool.compute(&inp, &self.assignment)?;
        if let Some(part) = &self.partition {
            let metric = self.config.slabs.as_ref().map(|s| s.metric);
            for (slab, units) in self.assignment.iter().enumerate().take(part.n_slabs()) {
                self.slab_cost[slab] += match metric {
                    Some(BalanceMetric::AdmittedPairs) => {
                        units.iter().map(|&u| inp.unit_cost(u)).sum::<usize>() as f64
                    }
                    _ => out.worker_seconds[slab],
                };
            }
        }
        self.state.forces = out.forces.to_original(&self.state.grid)?;
        Ok(())
    }

    pub fn energies(&self) -> StepEnergies {
        let s = &self.state.system;
        StepEnergies {
            step: self.state.step,
            kinetic: s.kinetic_energy(),
            potential: self.state.forces.potential(),
            temperature: s.temperature(),
            max_drift: self.state.drift.max_displacement,
        }
    }

    fn half_kick(&mut self) {
        let half_dt = 0.5 * self.config.dt;
        let s = &mut self.state.system;
        for ((v, f), &m) in s.velocities.iter_mut().zip(&self.state.forces.forces).zip(&s.masses) {
            let k = half_dt / m;
            v[0] += k * f[0];
            v[1] += k * f[1];
            v[2] += k * f[2];
        }
    }

    fn drift_positions(&mut self) {
        let dt = self.config.dt;
        let s = &mut self.state.system;
        for (p, v) in s.positions.iter_mut().zip(&s.velocities) {
            let moved: Vec3 = [p[0] + dt * v[0], p[1] + dt * v[1], p[2] + dt * v[2]];
            *p = crate::model::wrap_position(moved, &s.sim_box);
        }
    }

    /// One velocity-Verlet step: half kick, drift, list lifecycle, forces,
    /// half kick.
    pub fn velocity_verlet_step(&mut self) -> Result<StepEnergies> {
        self.begin("update");
        self.half_kick();
        self.drift_positions();
        self.end("update");
        self.state.step += 1;

        self.begin("pairsearch");
        let tick = self.lifecycle_tick();
        self.end("pairsearch");
        self.begin("force");
        let forces = tick.and_then(|_| self.compute_forces());
        self.end("force");
        forces.map_err(|e| Error::AtStep {
            step: self.state.step,
            source: Box::new(e),
        })?;

        self.begin("update");
        self.half_kick();
        self.end("update");
        Ok(self.energies())
    }
}

/// Forces for `state` with `workers` workers and cost-balanced contiguous
/// chunks of work units.
pub fn parallel_forces(
    state: &MDState,
    params: &NonbondedParams,
    layout: KernelLayout,
    workers: usize,
) -> Result<ForcesEnergies> {
    let table = PairTable::new(params);
    let inp = KernelInput {
        list: &state.list,
        grid: &state.grid,
        positions: &state.grid.clustered_positions,
        attrs: &state.attrs,
        table: &table,
        sim_box: &state.system.sim_box,
        layout,
    };
    let costs: Vec<usize> = (0..inp.n_units()).map(|u| inp.unit_cost(u)).collect();
    let assignment = partition_by_cost(&costs, workers);
    let mut pool = ForcePool::new(workers)?;
    pool.compute(&inp, &assignment)?.forces.to_original(&state.grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate_fluid, FluidKind, FluidSpec, ARGON_EPSILON, ARGON_MASS, ARGON_SIGMA};
    use crate::kernels::compute_nonbonded;
    use crate::model::{LjTable, SimBox};
    use crate::oracle::brute_force_pairs;
    use crate::pairlist::admitted_pairs;

    fn argon_params() -> NonbondedParams {
        NonbondedParams::new(0.9, 1.0, LjTable::single(ARGON_EPSILON, ARGON_SIGMA))
    }

    fn particles(edge: f64, positions: Vec<Vec3>, velocities: Vec<Vec3>) -> ParticleSystem {
        let n = positions.len();
        ParticleSystem {
            sim_box: SimBox::cubic(edge),
            positions,
            velocities,
            masses: vec![ARGON_MASS; n],
            charges: vec![0.0; n],
            lj_type: vec![0; n],
        }
    }

    fn fluid(kind: FluidKind, n: usize, temperature: f64, seed: u64) -> ParticleSystem {
        generate_fluid(&FluidSpec {
            kind,
            n,
            density: 21.0,
            temperature,
            seed,
        })
        .unwrap()
        .system
    }

    fn max_rel_error(a: &[Vec3], b: &[Vec3]) -> f64 {
        let scale = b.iter().map(|f| norm2(*f)).fold(0.0, f64::max).sqrt().max(1e-300);
        a.iter()
            .zip(b)
            .map(|(x, y)| norm2(crate::model::sub(*x, *y)).sqrt() / scale)
            .fold(0.0, f64::max)
    }

    use crate::model::norm2;

    #[test]
    fn resting_particle_stays_put() {
        let s = particles(3.0, vec![[1.0, 1.5, 2.0]], vec![[0.0; 3]]);
        let mut sim = Simulation::new(s.clone(), EngineConfig::new(argon_params(), KernelLayout::new(4, 4).unwrap(), 2e-3)).unwrap();
        for _ in 0..5 {
            sim.velocity_verlet_step().unwrap();
        }
        assert_eq!(sim.state.system.positions, s.positions);
        assert_eq!(sim.state.system.velocities, s.velocities);
        assert_eq!(sim.state.step, 5);
    }

    #[test]
    fn free_particle_is_ballistic() {
        let v = [0.5, -0.25, 0.125];
        let p = [1.0, 1.5, 2.0];
        let mut sim = Simulation::new(
            particles(3.0, vec![p], vec![v]),
            EngineConfig::new(argon_params(), KernelLayout::new(1, 1).unwrap(), 2e-3),
        )
        .unwrap();
        let e = sim.velocity_verlet_step().unwrap();
        let expected: Vec3 = std::array::from_fn(|d| p[d] + 2e-3 * v[d]);
        assert_eq!(sim.state.system.positions[0], expected);
        assert_eq!(sim.state.system.velocities[0], v);
        assert_eq!(e.potential, 0.0);
        assert_eq!(e.step, 1);
    }

    #[test]
    fn two_body_oscillation_conserves_energy() {
        let s = particles(3.0, vec![[1.0, 1.5, 1.5], [1.375, 1.5, 1.5]], vec![[0.0; 3]; 2]);
        let mut cfg = EngineConfig::new(argon_params(), KernelLayout::new(4, 2).unwrap(), 1e-3);
        cfg.policy.rebuild_interval = 10;
        let mut sim = Simulation::new(s, cfg).unwrap();
        let e0 = sim.energies().total();
        let mut worst = 0.0f64;
        let mut max_kinetic = 0.0f64;
        for _ in 0..10_000 {
            let e = sim.velocity_verlet_step().unwrap();
            worst = worst.max(((e.total() - e0) / e0).abs());
            max_kinetic = max_kinetic.max(e.kinetic);
        }
        assert!(max_kinetic > 1e-3, "the pair should oscillate");
        assert!(worst <= 1e-6, "relative drift {worst:e}");
    }

    #[test]
    fn coincident_particles_report_the_step() {
        // no interactions at all, so the two particles meet exactly at step 1
        let params = NonbondedParams::new(0.9, 1.0, LjTable::single(0.0, ARGON_SIGMA));
        let s = particles(3.0, vec![[1.0, 1.0, 1.0], [1.25, 1.0, 1.0]], vec![[0.25, 0.0, 0.0], [-0.25, 0.0, 0.0]]);
        let mut cfg = EngineConfig::new(params, KernelLayout::new(2, 2).unwrap(), 0.5);
        cfg.policy.rebuild_interval = 1;
        let mut sim = Simulation::new(s, cfg).unwrap();
        match sim.velocity_verlet_step() {
            Err(Error::AtStep { step, source }) => {
                assert_eq!(step, 1);
                assert!(matches!(*source, Error::Singularity { .. }), "{source:?}");
            }
            other => panic!("expected a step-annotated singularity, got {other:?}"),
        }
    }

    #[test]
    fn frozen_lattice_only_rebuilds_on_interval() {
        let mut positions = Vec::new();
        for x in 0..6 {
            for y in 0..6 {
                for z in 0..6 {
                    positions.push([x as f64 * 0.5, y as f64 * 0.5, z as f64 * 0.5]);
                }
            }
        }
        let n = positions.len();
        let mut cfg = EngineConfig::new(argon_params(), KernelLayout::new(4, 4).unwrap(), 2e-3);
        cfg.policy.rebuild_interval = 5;
        let mut sim = Simulation::new(particles(3.0, positions, vec![[0.0; 3]; n]), cfg).unwrap();
        for _ in 0..20 {
            sim.velocity_verlet_step().unwrap();
        }
        assert_eq!(sim.state.n_rebuilds, 4);
        assert_eq!(sim.state.n_drift_rebuilds, 0);
        assert!(sim.state.list.build_step <= sim.state.step);
    }

    #[test]
    fn every_step_rebuild_keeps_coverage() {
        let s = fluid(FluidKind::ChargedFluid, 300, 600.0, 11);
        let mut cfg = EngineConfig::new(argon_params(), KernelLayout::new(4, 4).unwrap(), 2e-3);
        cfg.policy.rebuild_interval = 1;
        let mut sim = Simulation::new(s, cfg).unwrap();
        for _ in 0..20 {
            sim.velocity_verlet_step().unwrap();
            assert_eq!(sim.state.list.build_step, sim.state.step);
            let admitted = admitted_pairs(&sim.state.list, &sim.state.grid);
            let needed = brute_force_pairs(&sim.state.system.positions, &sim.state.system.sim_box, 0.9);
            assert!(needed.is_subset(&admitted));
        }
        assert_eq!(sim.state.n_rebuilds, 20);
    }

    #[test]
    fn drift_guard_triggers_rebuild() {
        let s = particles(3.0, vec![[1.0, 1.0, 1.0]], vec![[20.0, 0.0, 0.0]]);
        let mut cfg = EngineConfig::new(argon_params(), KernelLayout::new(1, 1).unwrap(), 2e-3);
        cfg.policy.rebuild_interval = 1000;
        let mut sim = Simulation::new(s, cfg).unwrap();
        // 0.04 nm per step, the guard trips once 2 d_max exceeds 0.1
        for _ in 0..2 {
            assert_eq!(sim.lifecycle_tick().unwrap(), None);
            sim.drift_positions();
            sim.state.step += 1;
        }
        assert_eq!(sim.lifecycle_tick().unwrap(), Some(RebuildReason::Drift));
        assert_eq!(sim.state.n_drift_rebuilds, 1);
        assert_eq!(sim.state.drift.max_displacement, 0.0);
    }

    #[test]
    fn parallel_forces_match_single_worker() {
        let s = fluid(FluidKind::ChargedFluid, 1500, 300.0, 3);
        let params = argon_params();
        let layout = KernelLayout::new(4, 4).unwrap();
        let sim = Simulation::new(s, EngineConfig::new(params.clone(), layout, 2e-3)).unwrap();
        let st = &sim.state;
        let direct = compute_nonbonded(
            &st.list,
            &st.grid,
            &st.grid.clustered_positions,
            &st.attrs,
            &params,
            &st.system.sim_box,
            layout,
        )
        .unwrap()
        .to_original(&st.grid)
        .unwrap();
        let one = parallel_forces(st, &params, layout, 1).unwrap();
        assert_eq!(one, direct);
        for w in [2, 4, 8] {
            let f = parallel_forces(st, &params, layout, w).unwrap();
            assert!(max_rel_error(&f.forces, &one.forces) <= 1e-10, "W={w}");
            assert!(((f.potential() - one.potential()) / one.potential()).abs() <= 1e-12);
            assert_eq!(f, parallel_forces(st, &params, layout, w).unwrap(), "W={w} rerun");
        }
    }

    #[test]
    fn more_workers_than_units() {
        let s = generate_fluid(&FluidSpec {
            kind: FluidKind::ChargedFluid,
            n: 24,
            density: 2.0,
            temperature: 300.0,
            seed: 4,
        })
        .unwrap()
        .system;
        let params = NonbondedParams::new(0.9, 1.0, LjTable::single(ARGON_EPSILON, ARGON_SIGMA));
        let layout = KernelLayout::new(8, 4).unwrap();
        let sim = Simulation::new(s, EngineConfig::new(params.clone(), layout, 2e-3)).unwrap();
        assert!(sim.state.grid.n_clusters < 16);
        let one = parallel_forces(&sim.state, &params, layout, 1).unwrap();
        let many = parallel_forces(&sim.state, &params, layout, 16).unwrap();
        assert!(max_rel_error(&many.forces, &one.forces) <= 1e-10);
    }

    #[test]
    fn slab_mode_matches_and_rebalances() {
        let s = fluid(FluidKind::LjFluid, 800, 200.0, 5);
        let params = argon_params();
        let layout = KernelLayout::new(4, 4).unwrap();
        let mut cfg = EngineConfig::new(params.clone(), layout, 2e-3);
        cfg.workers = 3;
        cfg.slabs = Some(SlabConfig {
            metric: BalanceMetric::AdmittedPairs,
            ..SlabConfig::default()
        });
        cfg.policy.rebuild_interval = 2;
        let mut sim = Simulation::new(s, cfg).unwrap();
        let reference = parallel_forces(&sim.state, &params, layout, 1).unwrap();
        assert!(max_rel_error(&sim.state.forces.forces, &reference.forces) <= 1e-10);
        let before = sim.partition.as_ref().unwrap().boundaries.clone();
        for _ in 0..4 {
            sim.velocity_verlet_step().unwrap();
        }
        let part = sim.partition.as_ref().unwrap();
        assert_ne!(part.boundaries, before);
        assert!(part.widths().iter().all(|&w| w >= 1.0 - 1e-12));
    }

    #[test]
    fn bad_configs_rejected() {
        let s = particles(3.0, vec![[1.0; 3]], vec![[0.0; 3]]);
        let layout = KernelLayout::new(1, 1).unwrap();
        assert!(Simulation::new(s.clone(), EngineConfig::new(argon_params(), layout, 0.0)).is_err());
        let mut cfg = EngineConfig::new(argon_params(), layout, 1e-3);
        cfg.policy.rebuild_interval = 0;
        assert!(Simulation::new(s.clone(), cfg).is_err());
        let mut cfg = EngineConfig::new(argon_params(), layout, 1e-3);
        cfg.workers = 0;
        assert!(Simulation::new(s.clone(), cfg).is_err());
        let small = particles(1.5, vec![[1.0; 3]], vec![[0.0; 3]]);
        assert!(matches!(
            Simulation::new(small, EngineConfig::new(argon_params(), layout, 1e-3)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn run_log_and_timing() {
        let s = fluid(FluidKind::LjFluid, 200, 120.0, 9);
        let mut sim = Simulation::new(s.clone(), EngineConfig::new(argon_params(), KernelLayout::new(4, 4).unwrap(), 2e-3)).unwrap();
        let mut log = Vec::new();
        let summary = sim.run(30, 10, &mut log).unwrap();
        let text = String::from_utf8(log).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 4);
        assert!(data[3].trim_start().starts_with("30 "));
        assert!(text.contains("# energy drift"));
        assert!(text.contains("force"));
        assert_eq!(summary.steps, 30);
        assert_eq!(summary.n_rebuilds, 3);
        for name in ["update", "pairsearch", "force", "output"] {
            let sec = sim.timing.get(name).unwrap();
            assert!(sec.parent.is_none(), "{name}");
        }
        assert_eq!(sim.timing.get("force").unwrap().calls, 30);
        assert_eq!(sim.timing.get("update").unwrap().calls, 60);
        let lb = sim.timing.get("list_build").unwrap();
        assert_eq!(sim.timing.parent_of(lb).unwrap().name, "pairsearch");
        assert!(sim.timing.nesting_holds());

        // same inputs, same scientific output
        let mut again = Simulation::new(s, EngineConfig::new(argon_params(), KernelLayout::new(4, 4).unwrap(), 2e-3)).unwrap();
        let mut log2 = Vec::new();
        again.run(30, 10, &mut log2).unwrap();
        let strip = |t: &str| t.lines().take_while(|l| !l.starts_with("# performance")).map(str::to_owned).collect::<Vec<_>>();
        assert_eq!(strip(&text), strip(&String::from_utf8(log2).unwrap()));
    }

    #[test]
    fn zero_steps_reports_initial_state() {
        let s = fluid(FluidKind::LjFluid, 300, 100.0, 1);
        let mut sim = Simulation::new(s, EngineConfig::new(argon_params(), KernelLayout::new(4, 4).unwrap(), 2e-3)).unwrap();
        let mut log = Vec::new();
        let summary = sim.run(0, 10, &mut log).unwrap();
        let text = String::from_utf8(log).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1);
        assert_eq!(summary.max_energy_drift, 0.0);
        assert_eq!(summary.initial, summary.last);
    }
}
