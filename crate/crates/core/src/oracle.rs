//! Brute-force references. Nothing here touches clusters or pair lists: the
//! force reference is a plain O(N²) double loop over original indices.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::kernels::pair_interaction;
use crate::model::{
    minimum_image, norm2, sub, within_radius, CompensatedSum, ForcesEnergies, NonbondedParams,
    ParticleSystem, SimBox, Vec3,
};

/// Forces and energies from every pair within `r_cut`, original ordering.
pub fn brute_force_nonbonded(
    system: &ParticleSystem,
    params: &NonbondedParams,
) -> Result<ForcesEnergies> {
    let n = system.len();
    let sim_box = &system.sim_box;
    let mut forces = vec![[0.0; 3]; n];
    let mut e_lj = CompensatedSum::default();
    let mut e_coulomb = CompensatedSum::default();
    for i in 0..n {
        for j in i + 1..n {
            let dr = minimum_image(sub(system.positions[i], system.positions[j]), sim_box);
            let r2 = norm2(dr);
            if !within_radius(r2, params.r_cut) {
                continue;
            }
            if r2 == 0.0 {
                return Err(Error::Singularity { i, j });
            }
            let terms = pair_interaction(
                r2,
                system.lj_type[i] as usize,
                system.lj_type[j] as usize,
                system.charges[i],
                system.charges[j],
                params,
            )?;
            e_lj.add(terms.e_lj);
            e_coulomb.add(terms.e_coulomb);
            for d in 0..3 {
                let f = terms.f_over_r * dr[d];
                forces[i][d] += f;
                forces[j][d] -= f;
            }
        }
    }
    Ok(ForcesEnergies {
        forces,
        e_lj: e_lj.value(),
        e_coulomb: e_coulomb.value(),
    })
}

/// All unordered pairs `(i, j)`, `i < j`, at minimum-image distance `<= r`.
pub fn brute_force_pairs(positions: &[Vec3], sim_box: &SimBox, r: f64) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let dr = minimum_image(sub(positions[j], positions[i]), sim_box);
            if within_radius(norm2(dr), r) {
                out.insert((i, j));
            }
        }
    }
    out
}

/// Largest per-particle deviation `|f - f_ref|` over the largest reference
/// force magnitude. Plain absolute deviation when every reference force is
/// zero.
pub fn max_relative_force_error(forces: &[Vec3], reference: &[Vec3]) -> f64 {
    let scale = reference.iter().map(|f| norm2(*f)).fold(0.0, f64::max).sqrt();
    let worst = forces
        .iter()
        .zip(reference)
        .map(|(a, b)| norm2(sub(*a, *b)).sqrt())
        .fold(0.0, f64::max);
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

/// `|value - reference| / |reference|`, or the absolute difference when the
/// reference is zero.
pub fn relative_error(value: f64, reference: f64) -> f64 {
    if reference != 0.0 {
        ((value - reference) / reference).abs()
    } else {
        (value - reference).abs()
    }
}

/// Largest per-particle displacement since the last list build.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftTracker {
    pub reference_positions: Vec<Vec3>,
    pub max_displacement: f64,
}

impl DriftTracker {
    pub fn new(reference_positions: Vec<Vec3>) -> Self {
        DriftTracker {
            reference_positions,
            max_displacement: 0.0,
        }
    }

    pub fn reset(&mut self, positions: &[Vec3]) {
        self.reference_positions.clear();
        self.reference_positions.extend_from_slice(positions);
        self.max_displacement = 0.0;
    }
}

pub fn update_drift(
    tracker: &DriftTracker,
    current_positions: &[Vec3],
    sim_box: &SimBox,
) -> Result<DriftTracker> {
    let mut next = tracker.clone();
    update_drift_in_place(&mut next, current_positions, sim_box)?;
    Ok(next)
}

pub fn update_drift_in_place(
    tracker: &mut DriftTracker,
    current_positions: &[Vec3],
    sim_box: &SimBox,
) -> Result<()> {
    if current_positions.len() != tracker.reference_positions.len() {
        return Err(Error::param(format!(
            "drift update with {} positions, snapshot has {}",
            current_positions.len(),
            tracker.reference_positions.len()
        )));
    }
    let max2 = tracker
        .reference_positions
        .iter()
        .zip(current_positions)
        .map(|(&r, &c)| norm2(minimum_image(sub(c, r), sim_box)))
        .fold(0.0, f64::max);
    tracker.max_displacement = tracker.max_displacement.max(max2.sqrt());
    Ok(())
}
