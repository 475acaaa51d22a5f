//! Nonbonded force kernels over the cluster-pair list.
//!
//! Each listed block is evaluated as `m x n_lane` interactions per inner
//! step: the i-cluster's `m` positions are held in fixed-size arrays and
//! `n_lane` j-slots are streamed per step. With `n_lane < m` a j-cluster is
//! split over several steps; with `n_lane > m` consecutive listed
//! j-clusters share one step (`j_unroll = n_lane / m`) and unused lanes are
//! padded out. Every lane is computed and then weighted by its mask and
//! cutoff bit, so padding, fillers and out-of-range pairs add exactly zero.

use crate::error::{Error, Result};
use crate::gridder::ClusterGrid;
use crate::model::{
    minimum_image_component, CompensatedSum, ForcesEnergies, NonbondedParams, ParticleSystem,
    SimBox, Vec3,
};
use crate::pairlist::{ClusterPairList, JEntry, SUPERCLUSTER_GROUP};

pub const SUPPORTED_LANE_WIDTHS: [usize; 4] = [1, 2, 4, 8];

/// Flop model for one lane evaluation: minimum-image displacement (12),
/// squared distance (5), inverse powers (5), LJ energy and force (7),
/// Coulomb with square root (6) and force projection (3).
pub const FLOPS_PER_PAIR: u64 = 38;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KernelLayout {
    pub m: usize,
    pub n_lane: usize,
    pub j_unroll: usize,
}

impl KernelLayout {
    pub fn new(m: usize, n_lane: usize) -> Result<Self> {
        if !crate::gridder::SUPPORTED_CLUSTER_SIZES.contains(&m) {
            return Err(Error::param(format!("unsupported cluster size {m}")));
        }
        if !SUPPORTED_LANE_WIDTHS.contains(&n_lane) {
            return Err(Error::param(format!("unsupported lane width {n_lane}")));
        }
        if m == 8 && n_lane == 8 {
            return Err(Error::param("layout 8x8 exceeds 32 interactions per step"));
        }
        Ok(KernelLayout {
            m,
            n_lane,
            j_unroll: (n_lane / m).max(1),
        })
    }

    /// Inner steps needed for a block of `n_entries` consecutive j-clusters,
    /// with `n_entries <= j_unroll`.
    fn steps_per_block(&self) -> usize {
        (self.m / self.n_lane).max(1)
    }
}

impl std::fmt::Display for KernelLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.m, self.n_lane)
    }
}

/// Every layout exercised by the test suites:
/// `{1, 4, 8} x {1, 2, 4, 8}` with at most 32 interactions per step.
pub fn standard_layouts() -> Vec<KernelLayout> {
    let mut out = Vec::new();
    for m in [1, 4, 8] {
        for n in SUPPORTED_LANE_WIDTHS {
            if m * n <= 32 {
                out.push(KernelLayout::new(m, n).expect("valid layout"));
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairTerms {
    pub e_lj: f64,
    pub e_coulomb: f64,
    pub f_over_r: f64,
}

impl PairTerms {
    pub fn energy(&self) -> f64 {
        self.e_lj + self.e_coulomb
    }
}

/// Lennard-Jones 12-6 plus plain-cutoff Coulomb for one pair at squared
/// distance `r2`. The force on `i` is `f_over_r` times the displacement
/// `i - j`. Pairs beyond `r_cut` give zero.
pub fn pair_interaction(
    r2: f64,
    type_i: usize,
    type_j: usize,
    q_i: f64,
    q_j: f64,
    params: &NonbondedParams,
) -> Result<PairTerms> {
    if r2 == 0.0 {
        return Err(Error::ZeroDistance);
    }
    let zero = PairTerms {
        e_lj: 0.0,
        e_coulomb: 0.0,
        f_over_r: 0.0,
    };
    if r2 > params.r_cut * params.r_cut {
        return Ok(zero);
    }
    let (eps, sigma) = params.lj_table.get(type_i, type_j);
    let s2 = sigma * sigma / r2;
    let s6 = s2 * s2 * s2;
    let s12 = s6 * s6;
    let mut e_lj = 4.0 * eps * (s12 - s6);
    let f_lj = 48.0 * eps / r2 * (s12 - 0.5 * s6);

    let r = r2.sqrt();
    let qq = params.coulomb_scale * q_i * q_j;
    let mut e_coulomb = qq / r;
    let f_coulomb = qq / (r2 * r);

    if params.shift_potential {
        let sc2 = sigma * sigma / (params.r_cut * params.r_cut);
        let sc6 = sc2 * sc2 * sc2;
        e_lj -= 4.0 * eps * (sc6 * sc6 - sc6);
        e_coulomb -= qq / params.r_cut;
    }
    Ok(PairTerms {
        e_lj,
        e_coulomb,
        f_over_r: f_lj + f_coulomb,
    })
}

/// Per-particle attributes in clustered slot order.
#[derive(Clone, Debug)]
pub struct ClusterAttributes {
    pub charges: Vec<f64>,
    pub lj_type: Vec<u32>,
}

impl ClusterAttributes {
    pub fn gather(grid: &ClusterGrid, system: &ParticleSystem) -> Self {
        ClusterAttributes {
            charges: grid.gather(&system.charges),
            lj_type: grid.gather(&system.lj_type),
        }
    }
}

/// Per type-pair constants used inside the kernels.
#[derive(Clone, Debug)]
pub struct PairTable {
    n_types: usize,
    /// `(4 eps sigma^6, 4 eps sigma^12, energy shift)` per type pair
    lj: Vec<[f64; 3]>,
    coulomb_scale: f64,
    coulomb_shift: f64,
    r_cut2: f64,
}

impl PairTable {
    pub fn new(params: &NonbondedParams) -> Self {
        let n_types = params.lj_table.n_types();
        let rc = params.r_cut;
        let lj = (0..n_types * n_types)
            .map(|k| {
                let (eps, sigma) = params.lj_table.get(k / n_types, k % n_types);
                let s6 = sigma.powi(6);
                let c6 = 4.0 * eps * s6;
                let c12 = 4.0 * eps * s6 * s6;
                let shift = if params.shift_potential {
                    let ir6 = 1.0 / rc.powi(6);
                    c12 * ir6 * ir6 - c6 * ir6
                } else {
                    0.0
                };
                [c6, c12, shift]
            })
            .collect();
        PairTable {
            n_types,
            lj,
            coulomb_scale: params.coulomb_scale,
            coulomb_shift: if params.shift_potential { 1.0 / rc } else { 0.0 },
            r_cut2: rc * rc,
        }
    }
}

/// Clustered-order output of one kernel pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterForces {
    pub forces: Vec<Vec3>,
    pub e_lj: f64,
    pub e_coulomb: f64,
}

impl ClusterForces {
    pub fn zeros(n_slots: usize) -> Self {
        ClusterForces {
            forces: vec![[0.0; 3]; n_slots],
            e_lj: 0.0,
            e_coulomb: 0.0,
        }
    }

    pub fn to_original(&self, grid: &ClusterGrid) -> Result<ForcesEnergies> {
        Ok(ForcesEnergies {
            forces: crate::gridder::scatter_to_original(grid, &self.forces)?,
            e_lj: self.e_lj,
            e_coulomb: self.e_coulomb,
        })
    }
}

/// Borrowed inputs shared by every block evaluation.
pub struct KernelInput<'a> {
    pub list: &'a ClusterPairList,
    pub grid: &'a ClusterGrid,
    pub positions: &'a [Vec3],
    pub attrs: &'a ClusterAttributes,
    pub table: &'a PairTable,
    pub sim_box: &'a SimBox,
    pub layout: KernelLayout,
}

impl KernelInput<'_> {
    /// Number of work units: i-clusters, or super-cluster groups when the
    /// list carries that layout.
    pub fn n_units(&self) -> usize {
        if self.list.supercluster_size == SUPERCLUSTER_GROUP {
            self.list.superclusters.len()
        } else {
            self.list.entries.len()
        }
    }

    /// Admitted pair count of a work unit, used for load balancing.
    pub fn unit_cost(&self, unit: usize) -> usize {
        if self.list.supercluster_size == SUPERCLUSTER_GROUP {
            let g = &self.list.superclusters[unit];
            (g.first_i..g.first_i + g.n_members)
                .map(|i| self.list.admitted_count(i))
                .sum()
        } else {
            self.list.admitted_count(unit)
        }
    }

    /// i-clusters belonging to a work unit.
    pub fn unit_clusters(&self, unit: usize) -> std::ops::Range<usize> {
        if self.list.supercluster_size == SUPERCLUSTER_GROUP {
            let g = &self.list.superclusters[unit];
            g.first_i..g.first_i + g.n_members
        } else {
            unit..unit + 1
        }
    }
}

struct Accum<'a> {
    forces: &'a mut [Vec3],
    e_lj: CompensatedSum,
    e_coulomb: CompensatedSum,
}

/// Evaluates one block of up to `j_unroll` j-clusters against i-cluster
/// `ci`, accumulating i-forces into `fi` and j-forces directly into `acc`.
#[inline(always)]
fn eval_block<const M: usize, const N: usize>(
    inp: &KernelInput<'_>,
    ci: usize,
    js: &[JEntry],
    xi: &[Vec3; M],
    qi: &[f64; M],
    ti: &[usize; M],
    fi: &mut [Vec3; M],
    acc: &mut Accum<'_>,
) -> Result<()> {
    let l = inp.sim_box.lengths;
    let table = inp.table;
    let m = M;
    let steps = (M / N).max(1);
    for step in 0..steps {
        // gather lanes
        let mut jslot = [0usize; N];
        let mut lane_mask = [0u64; N];
        for lane in 0..N {
            let (entry, b) = if N <= M {
                (0, step * N + lane)
            } else {
                (lane / M, lane % M)
            };
            if entry < js.len() {
                let e = js[entry];
                jslot[lane] = e.j as usize * m + b;
                let mut bits = 0u64;
                for a in 0..M {
                    bits |= ((e.mask >> (a * m + b)) & 1) << a;
                }
                lane_mask[lane] = bits;
            } else {
                jslot[lane] = js[0].j as usize * m;
            }
        }
        let mut xj = [[0.0; 3]; N];
        let mut qj = [0.0; N];
        let mut tj = [0usize; N];
        for lane in 0..N {
            xj[lane] = inp.positions[jslot[lane]];
            qj[lane] = inp.attrs.charges[jslot[lane]];
            tj[lane] = inp.attrs.lj_type[jslot[lane]] as usize;
        }

        let mut fj = [[0.0; 3]; N];
        let mut blk_lj = 0.0;
        let mut blk_coul = 0.0;
        for a in 0..M {
            for lane in 0..N {
                let dx = minimum_image_component(xi[a][0] - xj[lane][0], l[0]);
                let dy = minimum_image_component(xi[a][1] - xj[lane][1], l[1]);
                let dz = minimum_image_component(xi[a][2] - xj[lane][2], l[2]);
                let r2 = dx * dx + dy * dy + dz * dz;
                let admitted = (lane_mask[lane] >> a) & 1 == 1;
                if admitted && r2 == 0.0 {
                    return Err(Error::Singularity {
                        i: inp.grid.perm[ci * m + a],
                        j: inp.grid.perm[jslot[lane]],
                    });
                }
                let inside = admitted && r2 <= table.r_cut2;
                let w = if inside { 1.0 } else { 0.0 };
                let r2s = if inside { r2 } else { 1.0 };

                let [c6, c12, lj_shift] = table.lj[ti[a] * table.n_types + tj[lane]];
                let rinv2 = 1.0 / r2s;
                let rinv6 = rinv2 * rinv2 * rinv2;
                let vlj = c12 * rinv6 * rinv6 - c6 * rinv6;
                let flj = (12.0 * c12 * rinv6 * rinv6 - 6.0 * c6 * rinv6) * rinv2;

                let rinv = rinv2.sqrt();
                let qq = table.coulomb_scale * qi[a] * qj[lane];
                let vc = qq * (rinv - table.coulomb_shift);
                let fc = qq * rinv * rinv2;

                blk_lj += w * (vlj - lj_shift);
                blk_coul += w * vc;
                let f = w * (flj + fc);
                let (fx, fy, fz) = (f * dx, f * dy, f * dz);
                fi[a][0] += fx;
                fi[a][1] += fy;
                fi[a][2] += fz;
                fj[lane][0] -= fx;
                fj[lane][1] -= fy;
                fj[lane][2] -= fz;
            }
        }
        for lane in 0..N {
            if lane_mask[lane] != 0 {
                let f = &mut acc.forces[jslot[lane]];
                f[0] += fj[lane][0];
                f[1] += fj[lane][1];
                f[2] += fj[lane][2];
            }
        }
        acc.e_lj.add(blk_lj);
        acc.e_coulomb.add(blk_coul);
    }
    Ok(())
}

/// Positions, charges and LJ types of one i-cluster.
type ICluster<const M: usize> = ([Vec3; M], [f64; M], [usize; M]);

fn load_i<const M: usize>(inp: &KernelInput<'_>, ci: usize) -> ICluster<M> {
    let base = ci * M;
    let xi = std::array::from_fn(|a| inp.positions[base + a]);
    let qi = std::array::from_fn(|a| inp.attrs.charges[base + a]);
    let ti = std::array::from_fn(|a| inp.attrs.lj_type[base + a] as usize);
    (xi, qi, ti)
}

fn flush_i<const M: usize>(acc: &mut Accum<'_>, ci: usize, fi: &[Vec3; M]) {
    for a in 0..M {
        let f = &mut acc.forces[ci * M + a];
        f[0] += fi[a][0];
        f[1] += fi[a][1];
        f[2] += fi[a][2];
    }
}

fn run_units<const M: usize, const N: usize>(
    inp: &KernelInput<'_>,
    units: &[usize],
    acc: &mut Accum<'_>,
) -> Result<()> {
    let unroll = inp.layout.j_unroll;
    if inp.list.supercluster_size == SUPERCLUSTER_GROUP {
        let mut buf = [JEntry { j: 0, mask: 0 }; 8];
        for &g in units {
            let group = &inp.list.superclusters[g];
            let mut fis = [[[0.0; 3]; M]; SUPERCLUSTER_GROUP];
            let mut loaded: [Option<ICluster<M>>; SUPERCLUSTER_GROUP] =
                [None; SUPERCLUSTER_GROUP];
            for chunk in group.entries.chunks(unroll) {
                let flags = chunk.iter().fold(0u8, |f, e| f | e.members);
                for k in 0..group.n_members {
                    if flags & (1 << k) == 0 {
                        continue;
                    }
                    let ci = group.first_i + k;
                    for (slot, e) in buf.iter_mut().zip(chunk) {
                        *slot = JEntry {
                            j: e.j,
                            mask: e.masks[k],
                        };
                    }
                    let (xi, qi, ti) = *loaded[k].get_or_insert_with(|| load_i::<M>(inp, ci));
                    eval_block::<M, N>(inp, ci, &buf[..chunk.len()], &xi, &qi, &ti, &mut fis[k], acc)?;
                }
            }
            for k in 0..group.n_members {
                flush_i::<M>(acc, group.first_i + k, &fis[k]);
            }
        }
    } else {
        for &ci in units {
            let js = &inp.list.entries[ci];
            if js.is_empty() {
                continue;
            }
            let (xi, qi, ti) = load_i::<M>(inp, ci);
            let mut fi = [[0.0; 3]; M];
            for chunk in js.chunks(unroll) {
                eval_block::<M, N>(inp, ci, chunk, &xi, &qi, &ti, &mut fi, acc)?;
            }
            flush_i::<M>(acc, ci, &fi);
        }
    }
    Ok(())
}

/// Runs the kernel over the given work units, adding into `forces`
/// (clustered order) and returning the `(lj, coulomb)` energy of those units.
pub fn compute_units(
    inp: &KernelInput<'_>,
    units: &[usize],
    forces: &mut [Vec3],
) -> Result<(f64, f64)> {
    if inp.layout.m != inp.grid.m || inp.list.m != inp.grid.m {
        return Err(Error::param(format!(
            "layout m = {} does not match grid m = {}",
            inp.layout.m, inp.grid.m
        )));
    }
    if inp.positions.len() != inp.grid.n_slots() || forces.len() != inp.grid.n_slots() {
        return Err(Error::param("clustered buffers do not match the grid"));
    }
    let mut acc = Accum {
        forces,
        e_lj: CompensatedSum::default(),
        e_coulomb: CompensatedSum::default(),
    };
    macro_rules! dispatch {
        ($(($m:literal, $n:literal)),*) => {
            match (inp.layout.m, inp.layout.n_lane) {
                $(($m, $n) => run_units::<$m, $n>(inp, units, &mut acc)?,)*
                (m, n) => return Err(Error::param(format!("unsupported layout {m}x{n}"))),
            }
        };
    }
    dispatch!(
        (1, 1), (1, 2), (1, 4), (1, 8),
        (2, 1), (2, 2), (2, 4), (2, 8),
        (4, 1), (4, 2), (4, 4), (4, 8),
        (8, 1), (8, 2), (8, 4)
    );
    Ok((acc.e_lj.value(), acc.e_coulomb.value()))
}

/// Full kernel pass in clustered ordering.
pub fn compute_nonbonded(
    list: &ClusterPairList,
    grid: &ClusterGrid,
    positions: &[Vec3],
    attrs: &ClusterAttributes,
    params: &NonbondedParams,
    sim_box: &SimBox,
    layout: KernelLayout,
) -> Result<ClusterForces> {
    let table = PairTable::new(params);
    let inp = KernelInput {
        list,
        grid,
        positions,
        attrs,
        table: &table,
        sim_box,
        layout,
    };
    let units: Vec<usize> = (0..inp.n_units()).collect();
    let mut out = ClusterForces::zeros(grid.n_slots());
    let (e_lj, e_coulomb) = compute_units(&inp, &units, &mut out.forces)?;
    out.e_lj = e_lj;
    out.e_coulomb = e_coulomb;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlopCount {
    pub useful_flops: u64,
    pub total_flops: u64,
}

impl FlopCount {
    pub fn ratio(&self) -> f64 {
        if self.total_flops == 0 {
            0.0
        } else {
            self.useful_flops as f64 / self.total_flops as f64
        }
    }
}

/// Flops under the `FLOPS_PER_PAIR` model. `total` counts every lane of
/// every inner step the kernel executes; `useful` only admitted pairs
/// within `r_cut` at the given clustered positions.
pub fn flop_count(
    list: &ClusterPairList,
    grid: &ClusterGrid,
    layout: KernelLayout,
    positions: &[Vec3],
    sim_box: &SimBox,
    r_cut: f64,
) -> FlopCount {
    let unroll = layout.j_unroll;
    let per_block = (layout.steps_per_block() * layout.m * layout.n_lane) as u64;
    let mut blocks = 0u64;
    if list.supercluster_size == SUPERCLUSTER_GROUP {
        for group in &list.superclusters {
            for chunk in group.entries.chunks(unroll) {
                let flags = chunk.iter().fold(0u8, |f, e| f | e.members);
                blocks += flags.count_ones() as u64;
            }
        }
    } else {
        for js in &list.entries {
            blocks += js.len().div_ceil(unroll) as u64;
        }
    }
    let stats = crate::pairlist::interaction_stats(list, grid, positions, sim_box, r_cut);
    FlopCount {
        useful_flops: stats.n_within_cutoff as u64 * FLOPS_PER_PAIR,
        total_flops: blocks * per_block * FLOPS_PER_PAIR,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridder::{build_cluster_grid, CellSizing};
    use crate::model::{LjTable, COULOMB_CONSTANT};
    use crate::pairlist::build_pair_list;

    fn params(eps: f64, sigma: f64) -> NonbondedParams {
        NonbondedParams::new(1.0, 1.0, LjTable::single(eps, sigma))
    }

    #[test]
    fn lj_minimum_and_zero_crossing() {
        let (eps, sigma) = (0.996, 0.34);
        let p = params(eps, sigma);
        let rmin = 2f64.powf(1.0 / 6.0) * sigma;
        let t = pair_interaction(rmin * rmin, 0, 0, 0.0, 0.0, &p).unwrap();
        assert!((t.energy() + eps).abs() < 1e-12);
        assert!(t.f_over_r.abs() < 1e-10);
        let t = pair_interaction(sigma * sigma, 0, 0, 0.0, 0.0, &p).unwrap();
        assert!(t.energy().abs() < 1e-12);
        assert!((t.f_over_r - 24.0 * eps / (sigma * sigma)).abs() < 1e-9);
    }

    #[test]
    fn coulomb_pair_energy() {
        let p = params(0.0, 0.3);
        let t = pair_interaction(0.25, 0, 0, 1.0, 1.0, &p).unwrap();
        assert!((t.e_coulomb - 277.870916).abs() < 1e-9);
        assert!((t.f_over_r - COULOMB_CONSTANT / 0.125).abs() < 1e-9);
    }

    #[test]
    fn shifted_potential_vanishes_at_cutoff() {
        let p = NonbondedParams::new(0.9, 1.0, LjTable::single(1.0, 0.34)).shifted(true);
        let t = pair_interaction(0.81, 0, 0, 0.5, -0.5, &p).unwrap();
        assert!(t.energy().abs() < 1e-14);
        assert!(t.f_over_r != 0.0);
        let beyond = pair_interaction(0.82, 0, 0, 0.5, -0.5, &p).unwrap();
        assert_eq!(beyond.energy(), 0.0);
    }

    #[test]
    fn zero_distance_is_an_error() {
        assert!(matches!(
            pair_interaction(0.0, 0, 0, 0.0, 0.0, &params(1.0, 0.3)),
            Err(Error::ZeroDistance)
        ));
    }

    #[test]
    fn layout_validation() {
        assert!(KernelLayout::new(8, 8).is_err());
        assert!(KernelLayout::new(3, 4).is_err());
        assert_eq!(KernelLayout::new(4, 8).unwrap().j_unroll, 2);
        assert_eq!(KernelLayout::new(8, 2).unwrap().j_unroll, 1);
        assert_eq!(standard_layouts().len(), 11);
    }

    fn two_particle_system(r: f64) -> ParticleSystem {
        ParticleSystem {
            sim_box: SimBox::cubic(3.0),
            positions: vec![[1.0, 1.0, 1.0], [1.0 + r, 1.1, 0.9]],
            velocities: vec![[0.0; 3]; 2],
            masses: vec![1.0; 2],
            charges: vec![0.3, -0.4],
            lj_type: vec![0; 2],
        }
    }

    #[test]
    fn two_particles_every_layout() {
        let s = two_particle_system(0.35);
        let p = params(0.9, 0.32);
        let dr = [-0.35, -0.1, 0.1];
        let r2 = crate::model::norm2(dr);
        let t = pair_interaction(r2, 0, 0, 0.3, -0.4, &p).unwrap();
        for layout in standard_layouts() {
            for sc in [1, 8] {
                let g = build_cluster_grid(&s, layout.m, CellSizing::default()).unwrap();
                let list = build_pair_list(&g, &s.sim_box, 1.0, layout.n_lane, sc).unwrap();
                let attrs = ClusterAttributes::gather(&g, &s);
                let out = compute_nonbonded(&list, &g, &g.clustered_positions, &attrs, &p, &s.sim_box, layout)
                    .unwrap()
                    .to_original(&g)
                    .unwrap();
                assert!((out.potential() - t.energy()).abs() < 1e-12, "{layout}");
                for d in 0..3 {
                    assert!((out.forces[0][d] - t.f_over_r * dr[d]).abs() < 1e-10);
                    assert_eq!(out.forces[0][d], -out.forces[1][d]);
                }
            }
        }
    }

    #[test]
    fn empty_list_gives_zero() {
        let s = two_particle_system(1.5);
        let p = params(0.9, 0.32);
        let g = build_cluster_grid(&s, 4, CellSizing::default()).unwrap();
        let list = build_pair_list(&g, &s.sim_box, 0.5, 4, 1).unwrap();
        // both particles share one cluster; mask admits their pair but it is beyond r_cut
        let attrs = ClusterAttributes::gather(&g, &s);
        let out = compute_nonbonded(&list, &g, &g.clustered_positions, &attrs, &p, &s.sim_box, KernelLayout::new(4, 4).unwrap()).unwrap();
        assert!(out.forces.iter().all(|f| *f == [0.0; 3]));
        assert_eq!(out.e_lj + out.e_coulomb, 0.0);

        let g1 = build_cluster_grid(&s, 1, CellSizing::default()).unwrap();
        let list1 = build_pair_list(&g1, &s.sim_box, 0.5, 1, 1).unwrap();
        assert!(list1.is_empty());
        let fc = flop_count(&list1, &g1, KernelLayout::new(1, 1).unwrap(), &g1.clustered_positions, &s.sim_box, 0.5);
        assert_eq!(fc, FlopCount { useful_flops: 0, total_flops: 0 });
    }

    #[test]
    fn overlap_reports_original_indices() {
        let mut s = two_particle_system(0.3);
        s.positions.push(s.positions[0]);
        s.velocities.push([0.0; 3]);
        s.masses.push(1.0);
        s.charges.push(0.0);
        s.lj_type.push(0);
        let p = params(0.9, 0.32);
        let g = build_cluster_grid(&s, 4, CellSizing::default()).unwrap();
        let list = build_pair_list(&g, &s.sim_box, 1.0, 4, 1).unwrap();
        let attrs = ClusterAttributes::gather(&g, &s);
        let err = compute_nonbonded(&list, &g, &g.clustered_positions, &attrs, &p, &s.sim_box, KernelLayout::new(4, 4).unwrap())
            .unwrap_err();
        match err {
            Error::Singularity { i, j } => assert_eq!((i.min(j), i.max(j)), (0, 2)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn full_block_flops() {
        let mut s = ParticleSystem::empty(SimBox::cubic(4.0));
        for k in 0..8 {
            s.positions.push([0.1, 0.1, 0.1 + 0.05 * k as f64]);
            s.velocities.push([0.0; 3]);
            s.masses.push(1.0);
            s.charges.push(0.0);
            s.lj_type.push(0);
        }
        let g = build_cluster_grid(&s, 4, CellSizing::ColumnOccupancy(8.0)).unwrap();
        let mut list = build_pair_list(&g, &s.sim_box, 1.0, 4, 1).unwrap();
        list.entries[0].retain(|e| e.j == 1);
        list.entries[1].clear();
        let fc = flop_count(&list, &g, KernelLayout::new(4, 4).unwrap(), &g.clustered_positions, &s.sim_box, 1.0);
        assert_eq!(fc.useful_flops, 16 * FLOPS_PER_PAIR);
        assert_eq!(fc.total_flops, 16 * FLOPS_PER_PAIR);
    }
}
