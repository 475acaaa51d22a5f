//! Reproducible fluid generation: a jittered cubic lattice with
//! Maxwell-Boltzmann velocities, driven by a seeded ChaCha8 generator.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{
    minimum_image, norm2, sub, wrap_position, LjTable, NonbondedParams, ParticleSystem, SimBox,
    SystemFile, BOLTZMANN,
};

pub const ARGON_SIGMA: f64 = 0.34;
pub const ARGON_EPSILON: f64 = 0.996;
pub const ARGON_MASS: f64 = 39.948;
pub const FLUID_CHARGE: f64 = 0.2;

/// Default state point, close to saturated liquid argon at 120 K.
pub const STANDARD_DENSITY: f64 = 18.0;
pub const STANDARD_TEMPERATURE: f64 = 120.0;

/// Minimum allowed pair distance in a generated system, in units of sigma.
pub const MIN_SEPARATION: f64 = 0.8;

const JITTER: f64 = 0.1;
const MAX_ATTEMPTS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FluidKind {
    LjFluid,
    ChargedFluid,
}

impl std::str::FromStr for FluidKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lj_fluid" => Ok(FluidKind::LjFluid),
            "charged_fluid" => Ok(FluidKind::ChargedFluid),
            other => Err(Error::param(format!(
                "unknown fluid kind {other:?}, expected lj_fluid or charged_fluid"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidSpec {
    pub kind: FluidKind,
    pub n: usize,
    /// particles per nm³
    pub density: f64,
    /// kelvin
    pub temperature: f64,
    pub seed: u64,
}

fn min_pair_distance(system: &ParticleSystem, r: f64) -> f64 {
    // cell binning with cells no smaller than r; only distances below r matter
    let l = system.sim_box.lengths;
    let dims: [usize; 3] = std::array::from_fn(|d| ((l[d] / r).floor() as usize).max(1));
    let cell_of = |p: [f64; 3]| -> [usize; 3] {
        std::array::from_fn(|d| ((p[d] / l[d] * dims[d] as f64) as usize).min(dims[d] - 1))
    };
    let index = |c: [usize; 3]| (c[0] * dims[1] + c[1]) * dims[2] + c[2];
    let mut cells = vec![Vec::new(); dims.iter().product()];
    for (i, &p) in system.positions.iter().enumerate() {
        cells[index(cell_of(p))].push(i);
    }
    let mut best = f64::INFINITY;
    for (i, &p) in system.positions.iter().enumerate() {
        let c = cell_of(p);
        let mut seen = Vec::with_capacity(27);
        for dx in [dims[0] - 1, 0, 1] {
            for dy in [dims[1] - 1, 0, 1] {
                for dz in [dims[2] - 1, 0, 1] {
                    let nc = [
                        (c[0] + dx) % dims[0],
                        (c[1] + dy) % dims[1],
                        (c[2] + dz) % dims[2],
                    ];
                    let k = index(nc);
                    if seen.contains(&k) {
                        continue;
                    }
                    seen.push(k);
                    for &j in &cells[k] {
                        if j > i {
                            let d2 = norm2(minimum_image(sub(system.positions[j], p), &system.sim_box));
                            best = best.min(d2);
                        }
                    }
                }
            }
        }
    }
    best.sqrt()
}

/// Generates an argon-like fluid. The charged variant alternates `±0.2 e`
/// by particle index.
pub fn generate_fluid(spec: &FluidSpec) -> Result<SystemFile> {
    if spec.n == 0 {
        return Err(Error::param("particle count must be positive"));
    }
    if !(spec.density > 0.0 && spec.density.is_finite()) {
        return Err(Error::param(format!("density must be positive, got {}", spec.density)));
    }
    if !(spec.temperature >= 0.0) {
        return Err(Error::param(format!(
            "temperature must be non-negative, got {}",
            spec.temperature
        )));
    }
    let n = spec.n;
    let edge = (n as f64 / spec.density).cbrt();
    let sim_box = SimBox::cubic(edge);
    let per_side = (n as f64).cbrt().ceil() as usize;
    let spacing = edge / per_side as f64;
    let min_sep = MIN_SEPARATION * ARGON_SIGMA;
    if n > 1 && spacing < min_sep {
        return Err(Error::Generation(format!(
            "density {} too high: lattice spacing {spacing:.4} nm below {min_sep:.4} nm",
            spec.density
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sites: Vec<[usize; 3]> = (0..per_side.pow(3))
        .map(|k| [k / (per_side * per_side), (k / per_side) % per_side, k % per_side])
        .collect();
    if n > 1 {
        sites.shuffle(&mut rng);
    }
    sites.truncate(n);
    sites.sort_unstable();

    let mut system = ParticleSystem::empty(sim_box);
    let mut jitter = if n > 1 { JITTER * spacing } else { 0.0 };
    let mut placed = false;
    for _ in 0..MAX_ATTEMPTS {
        system.positions = sites
            .iter()
            .map(|s| {
                let p = std::array::from_fn(|d| {
                    s[d] as f64 * spacing + jitter * rng.random_range(-1.0..1.0)
                });
                wrap_position(p, &sim_box)
            })
            .collect();
        if n == 1 || min_pair_distance(&system, min_sep) >= min_sep {
            placed = true;
            break;
        }
        jitter *= 0.5;
    }
    if !placed {
        return Err(Error::Generation(format!(
            "no overlap-free placement after {MAX_ATTEMPTS} attempts"
        )));
    }

    system.masses = vec![ARGON_MASS; n];
    system.lj_type = vec![0; n];
    system.charges = match spec.kind {
        FluidKind::LjFluid => vec![0.0; n],
        FluidKind::ChargedFluid => (0..n)
            .map(|i| if i % 2 == 0 { FLUID_CHARGE } else { -FLUID_CHARGE })
            .collect(),
    };

    let sd = (BOLTZMANN * spec.temperature / ARGON_MASS).sqrt();
    let mut velocities: Vec<[f64; 3]> = (0..n)
        .map(|_| std::array::from_fn(|_| sd * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let mut mean = [0.0; 3];
    for v in &velocities {
        for d in 0..3 {
            mean[d] += v[d] / n as f64;
        }
    }
    for v in velocities.iter_mut() {
        for d in 0..3 {
            v[d] -= mean[d];
        }
    }
    system.velocities = velocities;
    let t = system.temperature();
    if t > 0.0 && spec.temperature > 0.0 {
        let scale = (spec.temperature / t).sqrt();
        for v in system.velocities.iter_mut() {
            for c in v.iter_mut() {
                *c *= scale;
            }
        }
    }
    if n == 1 {
        system.velocities = vec![[0.0; 3]];
    }

    let lj_table = LjTable::single(ARGON_EPSILON, ARGON_SIGMA);
    let half_edge = 0.5 * edge;
    let report = crate::model::validate_system(
        &system,
        &NonbondedParams::new(half_edge, half_edge, lj_table.clone()),
    );
    if let Some(v) = report.first() {
        return Err(Error::Generation(v.to_string()));
    }
    Ok(SystemFile { system, lj_table })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_particle_at_origin() {
        let f = generate_fluid(&FluidSpec {
            kind: FluidKind::LjFluid,
            n: 1,
            density: 10.0,
            temperature: 300.0,
            seed: 1,
        })
        .unwrap();
        assert_eq!(f.system.positions, vec![[0.0; 3]]);
        assert_eq!(f.system.momentum(), [0.0; 3]);
    }

    #[test]
    fn thousand_particle_fluid() {
        let f = generate_fluid(&FluidSpec {
            kind: FluidKind::ChargedFluid,
            n: 1000,
            density: 21.0,
            temperature: 120.0,
            seed: 3,
        })
        .unwrap();
        let s = &f.system;
        let p = s.momentum();
        // natural units: momentum per particle in u·nm/ps
        for c in p {
            assert!((c / s.len() as f64).abs() < 1e-12, "{p:?}");
        }
        let mut dmin = f64::INFINITY;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                dmin = dmin.min(norm2(minimum_image(sub(s.positions[j], s.positions[i]), &s.sim_box)));
            }
        }
        assert!(dmin.sqrt() >= MIN_SEPARATION * ARGON_SIGMA);
        assert!((s.temperature() - 120.0).abs() < 1e-9);
        assert_eq!(s.charges.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = FluidSpec {
            kind: FluidKind::LjFluid,
            n: 300,
            density: 20.0,
            temperature: 100.0,
            seed: 9,
        };
        let a = generate_fluid(&spec).unwrap().to_json().unwrap();
        let b = generate_fluid(&spec).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let c = generate_fluid(&FluidSpec { seed: 10, ..spec }).unwrap().to_json().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_dense_fails() {
        let err = generate_fluid(&FluidSpec {
            kind: FluidKind::LjFluid,
            n: 1000,
            density: 100.0,
            temperature: 100.0,
            seed: 1,
        })
        .unwrap_err();
        assert!(matches!(err, Error::Generation(_)));
        assert!(generate_fluid(&FluidSpec {
            kind: FluidKind::LjFluid,
            n: 0,
            density: 1.0,
            temperature: 1.0,
            seed: 1
        })
        .is_err());
    }
}
