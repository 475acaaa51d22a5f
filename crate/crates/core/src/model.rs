//! Domain types shared by every other module: the periodic box, the particle
//! system, nonbonded parameters and force/energy results.
//!
//! Units follow the usual MD convention: nm, ps, u, e and kJ/mol.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Electrostatic prefactor 1/(4πε₀) in kJ·mol⁻¹·nm·e⁻².
pub const COULOMB_CONSTANT: f64 = 138.935458;

/// Boltzmann constant in kJ·mol⁻¹·K⁻¹.
pub const BOLTZMANN: f64 = 0.0083144626;

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn norm2(a: Vec3) -> f64 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

/// Closed-ball membership test used by the oracle, the list builder and the
/// kernels alike: a pair at squared distance `r2` is inside radius `r` iff
/// `r2 <= r * r`.
#[inline]
pub fn within_radius(r2: f64, r: f64) -> bool {
    r2 <= r * r
}

/// Orthorhombic box, periodic in all three dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimBox {
    pub lengths: Vec3,
}

impl SimBox {
    pub fn new(lengths: Vec3) -> Self {
        SimBox { lengths }
    }

    pub fn cubic(edge: f64) -> Self {
        SimBox { lengths: [edge; 3] }
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn is_valid(&self) -> bool {
        self.lengths.iter().all(|&l| l > 0.0 && l.is_finite())
    }

    /// True when every edge is at least `2 * r`, so minimum-image distances
    /// up to `r` are unambiguous.
    pub fn supports_radius(&self, r: f64) -> bool {
        self.lengths.iter().all(|&l| l >= 2.0 * r)
    }
}

#[inline]
fn wrap_component(c: f64, l: f64) -> f64 {
    let w = c - l * (c / l).floor();
    // `floor` can land one ulp short for tiny negative inputs
    if w >= l || w < 0.0 {
        0.0
    } else {
        w
    }
}

/// Maps a point into the primary cell `[0, L)` in every dimension.
pub fn wrap_position(p: Vec3, sim_box: &SimBox) -> Vec3 {
    let l = sim_box.lengths;
    [
        wrap_component(p[0], l[0]),
        wrap_component(p[1], l[1]),
        wrap_component(p[2], l[2]),
    ]
}

#[inline]
pub(crate) fn minimum_image_component(d: f64, l: f64) -> f64 {
    let mut c = d - l * (d / l + 0.5).floor();
    let half = 0.5 * l;
    if c >= half {
        c -= l;
    } else if c < -half {
        c += l;
    }
    c
}

/// Shortest periodic image of a displacement. Each component lands in the
/// half-open interval `[-L/2, L/2)`, so an exact half-box tie resolves to
/// `-L/2`.
#[inline]
pub fn minimum_image(dr: Vec3, sim_box: &SimBox) -> Vec3 {
    let l = sim_box.lengths;
    [
        minimum_image_component(dr[0], l[0]),
        minimum_image_component(dr[1], l[1]),
        minimum_image_component(dr[2], l[2]),
    ]
}

/// Symmetric table of Lennard-Jones `(epsilon, sigma)` per type pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<[f64; 2]>>", into = "Vec<Vec<[f64; 2]>>")]
pub struct LjTable {
    n_types: usize,
    entries: Vec<(f64, f64)>,
}

impl LjTable {
    /// Table for a single particle type.
    pub fn single(epsilon: f64, sigma: f64) -> Self {
        LjTable {
            n_types: 1,
            entries: vec![(epsilon, sigma)],
        }
    }

    /// Builds a table from a row-major `t x t` matrix of `(epsilon, sigma)`.
    /// Symmetry is not enforced here; `validate_system` reports it.
    pub fn from_rows(rows: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        let n_types = rows.len();
        let mut entries = Vec::with_capacity(n_types * n_types);
        for (a, row) in rows.into_iter().enumerate() {
            if row.len() != n_types {
                return Err(Error::param(format!(
                    "lj_table row {a} has {} entries, expected {n_types}",
                    row.len()
                )));
            }
            entries.extend(row);
        }
        Ok(LjTable { n_types, entries })
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    /// `(epsilon, sigma)` for the type pair `(a, b)`.
    #[inline]
    pub fn get(&self, a: usize, b: usize) -> (f64, f64) {
        self.entries[a * self.n_types + b]
    }
}

impl TryFrom<Vec<Vec<[f64; 2]>>> for LjTable {
    type Error = Error;

    fn try_from(rows: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        LjTable::from_rows(
            rows.into_iter()
                .map(|r| r.into_iter().map(|[e, s]| (e, s)).collect())
                .collect(),
        )
    }
}

impl From<LjTable> for Vec<Vec<[f64; 2]>> {
    fn from(t: LjTable) -> Self {
        t.entries
            .chunks(t.n_types.max(1))
            .take(t.n_types)
            .map(|row| row.iter().map(|&(e, s)| [e, s]).collect())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonbondedParams {
    pub r_cut: f64,
    pub r_list: f64,
    pub lj_table: LjTable,
    pub coulomb_scale: f64,
    /// Subtract each term's value at `r_cut` so the energy is continuous.
    pub shift_potential: bool,
}

impl NonbondedParams {
    pub fn new(r_cut: f64, r_list: f64, lj_table: LjTable) -> Self {
        NonbondedParams {
            r_cut,
            r_list,
            lj_table,
            coulomb_scale: COULOMB_CONSTANT,
            shift_potential: false,
        }
    }

    pub fn shifted(mut self, shift: bool) -> Self {
        self.shift_potential = shift;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleSystem {
    #[serde(rename = "box")]
    pub sim_box: SimBox,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub masses: Vec<f64>,
    pub charges: Vec<f64>,
    pub lj_type: Vec<u32>,
}

impl ParticleSystem {
    pub fn empty(sim_box: SimBox) -> Self {
        ParticleSystem {
            sim_box,
            positions: Vec::new(),
            velocities: Vec::new(),
            masses: Vec::new(),
            charges: Vec::new(),
            lj_type: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.masses
            .iter()
            .zip(&self.velocities)
            .map(|(&m, v)| 0.5 * m * norm2(*v))
            .sum()
    }

    pub fn momentum(&self) -> Vec3 {
        let mut p = [0.0; 3];
        for (&m, v) in self.masses.iter().zip(&self.velocities) {
            for d in 0..3 {
                p[d] += m * v[d];
            }
        }
        p
    }

    /// Instantaneous temperature with the centre-of-mass degrees of freedom
    /// removed.
    pub fn temperature(&self) -> f64 {
        let dof = (3 * self.len()).saturating_sub(3);
        if dof == 0 {
            return 0.0;
        }
        2.0 * self.kinetic_energy() / (dof as f64 * BOLTZMANN)
    }
}

/// Per-particle forces plus accumulated potential energies.
#[derive(Clone, Debug, PartialEq)]
pub struct ForcesEnergies {
    pub forces: Vec<Vec3>,
    pub e_lj: f64,
    pub e_coulomb: f64,
}

impl ForcesEnergies {
    pub fn zeros(n: usize) -> Self {
        ForcesEnergies {
            forces: vec![[0.0; 3]; n],
            e_lj: 0.0,
            e_coulomb: 0.0,
        }
    }

    pub fn potential(&self) -> f64 {
        self.e_lj + self.e_coulomb
    }

    pub fn net_force(&self) -> Vec3 {
        let mut s = [0.0; 3];
        for f in &self.forces {
            for d in 0..3 {
                s[d] += f[d];
            }
        }
        s
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    LengthMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    BoxEdge { dim: usize, length: f64 },
    MinimumImage { dim: usize, length: f64, r_list: f64 },
    CutoffOrder { r_cut: f64, r_list: f64 },
    NonPositiveMass { index: usize, mass: f64 },
    NonFinite { field: &'static str, index: usize },
    LjTypeOutOfRange { index: usize, lj_type: u32, n_types: usize },
    LjTableAsymmetric { a: usize, b: usize },
    LjParameter { a: usize, b: usize, epsilon: f64, sigma: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::LengthMismatch {
                field,
                expected,
                found,
            } => write!(f, "length mismatch: {field} has {found} entries, expected {expected}"),
            Violation::BoxEdge { dim, length } => {
                write!(f, "box edge {dim} must be positive and finite, got {length}")
            }
            Violation::MinimumImage {
                dim,
                length,
                r_list,
            } => write!(
                f,
                "minimum image violated: box edge {dim} = {length} < 2 * r_list = {}",
                2.0 * r_list
            ),
            Violation::CutoffOrder { r_cut, r_list } => {
                write!(f, "cutoff order violated: need 0 < r_cut ({r_cut}) <= r_list ({r_list})")
            }
            Violation::NonPositiveMass { index, mass } => {
                write!(f, "particle {index} has non-positive mass {mass}")
            }
            Violation::NonFinite { field, index } => {
                write!(f, "{field}[{index}] is not finite")
            }
            Violation::LjTypeOutOfRange {
                index,
                lj_type,
                n_types,
            } => write!(
                f,
                "particle {index} has lj_type {lj_type}, table has {n_types} types"
            ),
            Violation::LjTableAsymmetric { a, b } => {
                write!(f, "lj_table not symmetric at ({a}, {b})")
            }
            Violation::LjParameter {
                a,
                b,
                epsilon,
                sigma,
            } => write!(
                f,
                "lj_table ({a}, {b}) needs sigma > 0 and epsilon >= 0, got ({epsilon}, {sigma})"
            ),
        }
    }
}

/// Checks every structural invariant of a system against its parameters.
/// Violations are returned as data; an empty report means the system is
/// usable with these parameters.
pub fn validate_system(system: &ParticleSystem, params: &NonbondedParams) -> Vec<Violation> {
    let mut report = Vec::new();
    let n = system.positions.len();

    for (field, len) in [
        ("velocities", system.velocities.len()),
        ("masses", system.masses.len()),
        ("charges", system.charges.len()),
        ("lj_type", system.lj_type.len()),
    ] {
        if len != n {
            report.push(Violation::LengthMismatch {
                field,
                expected: n,
                found: len,
            });
        }
    }

    for (dim, &length) in system.sim_box.lengths.iter().enumerate() {
        if !(length > 0.0 && length.is_finite()) {
            report.push(Violation::BoxEdge { dim, length });
        } else if length < 2.0 * params.r_list {
            report.push(Violation::MinimumImage {
                dim,
                length,
                r_list: params.r_list,
            });
        }
    }

    if !(params.r_cut > 0.0 && params.r_cut <= params.r_list) {
        report.push(Violation::CutoffOrder {
            r_cut: params.r_cut,
            r_list: params.r_list,
        });
    }

    for (index, &mass) in system.masses.iter().enumerate() {
        if !(mass > 0.0) {
            report.push(Violation::NonPositiveMass { index, mass });
        }
    }

    for (field, values) in [
        ("positions", &system.positions),
        ("velocities", &system.velocities),
    ] {
        if let Some(index) = values.iter().position(|v| v.iter().any(|c| !c.is_finite())) {
            report.push(Violation::NonFinite { field, index });
        }
    }
    if let Some(index) = system.charges.iter().position(|q| !q.is_finite()) {
        report.push(Violation::NonFinite {
            field: "charges",
            index,
        });
    }

    let table = &params.lj_table;
    let n_types = table.n_types();
    for (index, &lj_type) in system.lj_type.iter().enumerate() {
        if lj_type as usize >= n_types {
            report.push(Violation::LjTypeOutOfRange {
                index,
                lj_type,
                n_types,
            });
        }
    }
    for a in 0..n_types {
        for b in 0..n_types {
            let (epsilon, sigma) = table.get(a, b);
            if b > a && table.get(b, a) != (epsilon, sigma) {
                report.push(Violation::LjTableAsymmetric { a, b });
            }
            if !(sigma > 0.0 && epsilon >= 0.0 && sigma.is_finite() && epsilon.is_finite()) {
                report.push(Violation::LjParameter {
                    a,
                    b,
                    epsilon,
                    sigma,
                });
            }
        }
    }

    report
}

/// On-disk system document: the particle system plus its LJ table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    #[serde(flatten)]
    pub system: ParticleSystem,
    pub lj_table: LjTable,
}

impl SystemFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
