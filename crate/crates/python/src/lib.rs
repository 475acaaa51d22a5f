//! Python bindings for the cluster-pair MD core.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cpmd::cli::verify_system;
use cpmd::engine::{EngineConfig, ListPolicy, SlabConfig, StepEnergies};
use cpmd::generate::{generate_fluid, FluidKind, FluidSpec};
use cpmd::gridder::{build_cluster_grid, CellSizing};
use cpmd::kernels::{compute_nonbonded, ClusterAttributes, KernelLayout};
use cpmd::model::SystemFile;
use cpmd::oracle::brute_force_nonbonded;
use cpmd::pairlist::{build_pair_list, prune_pair_list};
use cpmd::{ForcesEnergies, NonbondedParams, Vec3};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn layout_of((m, n): (usize, usize)) -> PyResult<KernelLayout> {
    KernelLayout::new(m, n).map_err(err)
}

/// A particle system together with its LJ parameter table.
#[pyclass(name = "System", module = "cpmd_py", skip_from_py_object)]
#[derive(Clone)]
struct PySystem {
    file: SystemFile,
}

#[pymethods]
impl PySystem {
    #[staticmethod]
    #[pyo3(signature = (n, kind="lj_fluid", density=cpmd::generate::STANDARD_DENSITY, temperature=cpmd::generate::STANDARD_TEMPERATURE, seed=1))]
    fn generate(n: usize, kind: &str, density: f64, temperature: f64, seed: u64) -> PyResult<Self> {
        let kind: FluidKind = kind.parse().map_err(err)?;
        let file = generate_fluid(&FluidSpec {
            kind,
            n,
            density,
            temperature,
            seed,
        })
        .map_err(err)?;
        Ok(PySystem { file })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        SystemFile::load(path).map(|file| PySystem { file }).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        SystemFile::from_json(text).map(|file| PySystem { file }).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.file.to_json().map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.file.save(path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.file.system.len()
    }

    #[getter]
    fn box_lengths(&self) -> Vec3 {
        self.file.system.sim_box.lengths
    }

    #[getter]
    fn positions(&self) -> Vec<Vec3> {
        self.file.system.positions.clone()
    }

    #[getter]
    fn velocities(&self) -> Vec<Vec3> {
        self.file.system.velocities.clone()
    }

    #[getter]
    fn charges(&self) -> Vec<f64> {
        self.file.system.charges.clone()
    }

    #[getter]
    fn masses(&self) -> Vec<f64> {
        self.file.system.masses.clone()
    }

    #[getter]
    fn temperature(&self) -> f64 {
        self.file.system.temperature()
    }

    fn __repr__(&self) -> String {
        let l = self.file.system.sim_box.lengths;
        format!("System(n={}, box=[{}, {}, {}])", self.file.system.len(), l[0], l[1], l[2])
    }
}

fn params(sys: &PySystem, r_cut: f64, r_list: f64, shift: bool) -> NonbondedParams {
    NonbondedParams::new(r_cut, r_list, sys.file.lj_table.clone()).shifted(shift)
}

fn forces_dict<'py>(py: Python<'py>, f: &ForcesEnergies) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("forces", f.forces.clone())?;
    d.set_item("e_lj", f.e_lj)?;
    d.set_item("e_coulomb", f.e_coulomb)?;
    d.set_item("potential", f.potential())?;
    Ok(d)
}

fn energies_dict<'py>(py: Python<'py>, e: &StepEnergies) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("step", e.step)?;
    d.set_item("kinetic", e.kinetic)?;
    d.set_item("potential", e.potential)?;
    d.set_item("total", e.total())?;
    d.set_item("temperature", e.temperature)?;
    d.set_item("max_drift", e.max_drift)?;
    Ok(d)
}

/// Reference O(N²) forces and energies.
#[pyfunction]
#[pyo3(signature = (system, r_cut=0.9, r_list=1.0, shift=true))]
fn brute_force<'py>(py: Python<'py>, system: &PySystem, r_cut: f64, r_list: f64, shift: bool) -> PyResult<Bound<'py, PyDict>> {
    let p = params(system, r_cut, r_list, shift);
    let f = brute_force_nonbonded(&system.file.system, &p).map_err(err)?;
    forces_dict(py, &f)
}

/// Forces from the cluster-pair kernel, in the original particle order.
#[pyfunction]
#[pyo3(signature = (system, r_cut=0.9, r_list=1.0, shift=true, layout=(4, 4), supercluster=1, prune=false))]
#[allow(clippy::too_many_arguments)]
fn cluster_forces<'py>(
    py: Python<'py>,
    system: &PySystem,
    r_cut: f64,
    r_list: f64,
    shift: bool,
    layout: (usize, usize),
    supercluster: usize,
    prune: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let layout = layout_of(layout)?;
    let p = params(system, r_cut, r_list, shift);
    let s = &system.file.system;
    let grid = build_cluster_grid(s, layout.m, CellSizing::default()).map_err(err)?;
    let mut list = build_pair_list(&grid, &s.sim_box, r_list, layout.n_lane, supercluster).map_err(err)?;
    if prune {
        list = prune_pair_list(&list, &grid.clustered_positions, &s.sim_box);
    }
    let attrs = ClusterAttributes::gather(&grid, s);
    let f = compute_nonbonded(&list, &grid, &grid.clustered_positions, &attrs, &p, &s.sim_box, layout)
        .and_then(|f| f.to_original(&grid))
        .map_err(err)?;
    forces_dict(py, &f)
}

/// Cluster-pair result against the oracle.
#[pyfunction]
#[pyo3(signature = (system, r_cut=0.9, r_list=1.0, shift=true, layout=(4, 4), supercluster=1, prune=true))]
#[allow(clippy::too_many_arguments)]
fn verify<'py>(
    py: Python<'py>,
    system: &PySystem,
    r_cut: f64,
    r_list: f64,
    shift: bool,
    layout: (usize, usize),
    supercluster: usize,
    prune: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params(system, r_cut, r_list, shift);
    let r = verify_system(&system.file, &p, layout_of(layout)?, supercluster, prune, false, None).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("n_particles", r.n_particles)?;
    d.set_item("max_force_error", r.max_force_error)?;
    d.set_item("lj_energy_error", r.lj_energy_error)?;
    d.set_item("coulomb_energy_error", r.coulomb_energy_error)?;
    d.set_item("total_energy_error", r.total_energy_error)?;
    d.set_item("missing_pairs", r.missing_pairs)?;
    d.set_item("passed", r.passed())?;
    Ok(d)
}

/// Velocity Verlet MD driven by buffered cluster-pair lists.
#[pyclass(name = "Simulation", module = "cpmd_py", unsendable)]
struct PySimulation {
    sim: cpmd::engine::Simulation,
    lj_table: cpmd::LjTable,
}

#[pymethods]
impl PySimulation {
    #[new]
    #[pyo3(signature = (system, r_cut=0.9, r_list=1.0, shift=true, layout=(4, 4), supercluster=1, dt=2e-3, rebuild_interval=10, prune=true, workers=1, slabs=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        system: &PySystem,
        r_cut: f64,
        r_list: f64,
        shift: bool,
        layout: (usize, usize),
        supercluster: usize,
        dt: f64,
        rebuild_interval: u64,
        prune: bool,
        workers: usize,
        slabs: bool,
    ) -> PyResult<Self> {
        let mut config = EngineConfig::new(params(system, r_cut, r_list, shift), layout_of(layout)?, dt);
        config.supercluster_size = supercluster;
        config.policy = ListPolicy {
            rebuild_interval,
            prune_on_build: prune,
        };
        config.workers = workers;
        config.slabs = slabs.then(SlabConfig::default);
        let sim = cpmd::engine::Simulation::new(system.file.system.clone(), config).map_err(err)?;
        Ok(PySimulation {
            sim,
            lj_table: system.file.lj_table.clone(),
        })
    }

    /// Advances `n` steps and returns the energies after each.
    #[pyo3(signature = (n=1))]
    fn step<'py>(&mut self, py: Python<'py>, n: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let mut out = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let e = self.sim.velocity_verlet_step().map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
            out.push(energies_dict(py, &e)?);
        }
        Ok(out)
    }

    /// Runs with the text log and returns `(summary, log)`.
    #[pyo3(signature = (n_steps, report_interval=100))]
    fn run<'py>(&mut self, py: Python<'py>, n_steps: u64, report_interval: u64) -> PyResult<(Bound<'py, PyDict>, String)> {
        let mut log = Vec::new();
        let s = self
            .sim
            .run(n_steps, report_interval, &mut log)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let d = PyDict::new(py);
        d.set_item("steps", s.steps)?;
        d.set_item("initial", energies_dict(py, &s.initial)?)?;
        d.set_item("last", energies_dict(py, &s.last)?)?;
        d.set_item("max_energy_drift", s.max_energy_drift)?;
        d.set_item("final_energy_drift", s.final_energy_drift)?;
        d.set_item("momentum_drift", s.momentum_drift)?;
        d.set_item("n_rebuilds", s.n_rebuilds)?;
        d.set_item("steps_per_second", s.steps_per_second())?;
        Ok((d, String::from_utf8_lossy(&log).into_owned()))
    }

    fn energies<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        energies_dict(py, &self.sim.energies())
    }

    #[getter]
    fn step_count(&self) -> u64 {
        self.sim.state.step
    }

    /// Current state as a new `System`.
    fn system(&self) -> PySystem {
        PySystem {
            file: SystemFile {
                system: self.sim.state.system.clone(),
                lj_table: self.lj_table.clone(),
            },
        }
    }
}

#[pymodule]
fn cpmd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(brute_force, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_forces, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
