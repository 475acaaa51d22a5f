//! Buffered cluster-pair list: construction from bounding boxes, pruning by
//! exact distances, and the optional super-cluster layout in which eight
//! consecutive i-clusters share one j-list.
//!
//! Interaction masks have one bit per `(i-slot, j-slot)` pair, bit
//! `a * m + b`; a set bit means the pair is evaluated. Diagonal blocks keep
//! only `a < b`, and filler slots are always cleared.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gridder::{bbox_distance2, ClusterGrid};
use crate::model::{minimum_image, norm2, sub, within_radius, SimBox, Vec3};

pub const SUPERCLUSTER_GROUP: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JEntry {
    pub j: u32,
    pub mask: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuperEntry {
    pub j: u32,
    /// bit `k` set when member `first_i + k` interacts with `j`
    pub members: u8,
    pub masks: [u64; SUPERCLUSTER_GROUP],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuperGroup {
    pub first_i: usize,
    pub n_members: usize,
    pub entries: Vec<SuperEntry>,
}

#[derive(Clone, Debug)]
pub struct ClusterPairList {
    pub m: usize,
    pub n_lane: usize,
    pub r_list: f64,
    pub build_positions: Vec<Vec3>,
    pub build_step: u64,
    pub supercluster_size: usize,
    /// per i-cluster, ascending j-clusters with `j >= i`
    pub entries: Vec<Vec<JEntry>>,
    /// populated only when `supercluster_size == 8`
    pub superclusters: Vec<SuperGroup>,
}

impl ClusterPairList {
    pub fn n_cluster_pairs(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(Vec::is_empty)
    }

    /// Number of admitted particle pairs listed for i-cluster `i`.
    pub fn admitted_count(&self, i: usize) -> usize {
        self.entries[i]
            .iter()
            .map(|e| e.mask.count_ones() as usize)
            .sum()
    }

    /// Removes one cluster pair. Used to inject faults in verification tests.
    pub fn remove_pair(&mut self, i: usize, j: u32) -> bool {
        let before = self.entries[i].len();
        self.entries[i].retain(|e| e.j != j);
        let removed = self.entries[i].len() != before;
        if removed && self.supercluster_size == SUPERCLUSTER_GROUP {
            self.superclusters = group_superclusters(&self.entries);
        }
        removed
    }

    pub fn with_build_step(mut self, step: u64) -> Self {
        self.build_step = step;
        self
    }
}

/// Interaction mask for the block `(ci, cj)`.
pub fn pair_mask(grid: &ClusterGrid, ci: usize, cj: usize) -> u64 {
    let m = grid.m;
    let mut mask = 0u64;
    for a in 0..m {
        if grid.fill_mask[ci * m + a] {
            continue;
        }
        let b_start = if ci == cj { a + 1 } else { 0 };
        for b in b_start..m {
            if !grid.fill_mask[cj * m + b] {
                mask |= 1u64 << (a * m + b);
            }
        }
    }
    mask
}

fn neighbor_columns(grid: &ClusterGrid, column: usize, r: f64) -> Vec<usize> {
    let [nx, ny] = grid.cell_counts;
    let cx = column / ny;
    let cy = column % ny;
    let offsets = |n: usize, width: f64, c: usize| -> Vec<usize> {
        let k = (r / width).floor() as usize + 1;
        if 2 * k + 1 >= n {
            (0..n).collect()
        } else {
            (0..=2 * k).map(|o| (c + n + o - k) % n).collect()
        }
    };
    let xs = offsets(nx, grid.cell_size[0], cx);
    let ys = offsets(ny, grid.cell_size[1], cy);
    let mut cols = Vec::with_capacity(xs.len() * ys.len());
    for &x in &xs {
        for &y in &ys {
            cols.push(x * ny + y);
        }
    }
    cols
}

/// Builds the list with the conservative bounding-box criterion: the pair
/// `(ci, cj)`, `ci <= cj`, is listed when the bbox distance is within
/// `r_list` and its mask is not empty.
pub fn build_pair_list(
    grid: &ClusterGrid,
    sim_box: &SimBox,
    r_list: f64,
    n_lane: usize,
    supercluster_size: usize,
) -> Result<ClusterPairList> {
    if !(r_list > 0.0) {
        return Err(Error::param(format!("r_list must be positive, got {r_list}")));
    }
    if !sim_box.supports_radius(r_list) {
        return Err(Error::param(format!(
            "box {:?} too small for minimum image at r_list = {r_list}",
            sim_box.lengths
        )));
    }
    if supercluster_size != 1 && supercluster_size != SUPERCLUSTER_GROUP {
        return Err(Error::param(format!(
            "supercluster size must be 1 or {SUPERCLUSTER_GROUP}, got {supercluster_size}"
        )));
    }
    if !crate::kernels::SUPPORTED_LANE_WIDTHS.contains(&n_lane) {
        return Err(Error::param(format!("unsupported lane width {n_lane}")));
    }

    let entries: Vec<Vec<JEntry>> = (0..grid.n_clusters)
        .into_par_iter()
        .map(|ci| {
            let bi = &grid.bboxes[ci];
            let mut js = Vec::new();
            for col in neighbor_columns(grid, grid.cluster_column[ci], r_list) {
                for cj in grid.column_clusters(col) {
                    if cj < ci {
                        continue;
                    }
                    if within_radius(bbox_distance2(bi, &grid.bboxes[cj], sim_box), r_list) {
                        let mask = pair_mask(grid, ci, cj);
                        if mask != 0 {
                            js.push(JEntry { j: cj as u32, mask });
                        }
                    }
                }
            }
            js.sort_unstable_by_key(|e| e.j);
            js
        })
        .collect();

    let superclusters = if supercluster_size == SUPERCLUSTER_GROUP {
        group_superclusters(&entries)
    } else {
        Vec::new()
    };

    Ok(ClusterPairList {
        m: grid.m,
        n_lane,
        r_list,
        build_positions: grid.clustered_positions.clone(),
        build_step: 0,
        supercluster_size,
        entries,
        superclusters,
    })
}

/// Merges per-cluster j-lists into groups of eight consecutive i-clusters.
pub fn group_superclusters(entries: &[Vec<JEntry>]) -> Vec<SuperGroup> {
    entries
        .chunks(SUPERCLUSTER_GROUP)
        .enumerate()
        .map(|(g, members)| {
            let mut merged: Vec<SuperEntry> = Vec::new();
            let mut all: Vec<(u32, usize, u64)> = members
                .iter()
                .enumerate()
                .flat_map(|(k, list)| list.iter().map(move |e| (e.j, k, e.mask)))
                .collect();
            all.sort_unstable_by_key(|&(j, k, _)| (j, k));
            for (j, k, mask) in all {
                match merged.last_mut() {
                    Some(last) if last.j == j => {
                        last.members |= 1 << k;
                        last.masks[k] = mask;
                    }
                    _ => {
                        let mut masks = [0; SUPERCLUSTER_GROUP];
                        masks[k] = mask;
                        merged.push(SuperEntry {
                            j,
                            members: 1 << k,
                            masks,
                        });
                    }
                }
            }
            SuperGroup {
                first_i: g * SUPERCLUSTER_GROUP,
                n_members: members.len(),
                entries: merged,
            }
        })
        .collect()
}

/// Exact minimum distance over the pairs admitted by `mask`, squared.
fn masked_min_distance2(
    positions: &[Vec3],
    m: usize,
    ci: usize,
    cj: usize,
    mask: u64,
    sim_box: &SimBox,
) -> f64 {
    let mut best = f64::INFINITY;
    let mut bits = mask;
    while bits != 0 {
        let bit = bits.trailing_zeros() as usize;
        bits &= bits - 1;
        let (a, b) = (bit / m, bit % m);
        let dr = sub(positions[cj * m + b], positions[ci * m + a]);
        best = best.min(norm2(minimum_image(dr, sim_box)));
    }
    best
}

/// Drops every listed cluster pair whose closest admitted particle pair, at
/// the given clustered positions, lies beyond `r_list`. Masks of the
/// surviving pairs are unchanged.
pub fn prune_pair_list(
    list: &ClusterPairList,
    positions: &[Vec3],
    sim_box: &SimBox,
) -> ClusterPairList {
    let m = list.m;
    let r_list = list.r_list;
    let entries: Vec<Vec<JEntry>> = list
        .entries
        .par_iter()
        .enumerate()
        .map(|(ci, js)| {
            js.iter()
                .copied()
                .filter(|e| {
                    let d2 = masked_min_distance2(positions, m, ci, e.j as usize, e.mask, sim_box);
                    within_radius(d2, r_list)
                })
                .collect()
        })
        .collect();
    let superclusters = if list.supercluster_size == SUPERCLUSTER_GROUP {
        group_superclusters(&entries)
    } else {
        Vec::new()
    };
    ClusterPairList {
        m,
        n_lane: list.n_lane,
        r_list,
        build_positions: list.build_positions.clone(),
        build_step: list.build_step,
        supercluster_size: list.supercluster_size,
        entries,
        superclusters,
    }
}

/// Invokes `f(ci, cj, mask)` for every block the kernels will evaluate, in
/// kernel traversal order.
pub fn for_each_block(list: &ClusterPairList, mut f: impl FnMut(usize, usize, u64)) {
    if list.supercluster_size == SUPERCLUSTER_GROUP {
        for group in &list.superclusters {
            for e in &group.entries {
                for k in 0..group.n_members {
                    if e.members & (1 << k) != 0 {
                        f(group.first_i + k, e.j as usize, e.masks[k]);
                    }
                }
            }
        }
    } else {
        for (ci, js) in list.entries.iter().enumerate() {
            for e in js {
                f(ci, e.j as usize, e.mask);
            }
        }
    }
}

/// Every particle pair a kernel pass would evaluate, as `(min, max)`
/// original indices.
pub fn admitted_pairs(list: &ClusterPairList, grid: &ClusterGrid) -> BTreeSet<(usize, usize)> {
    let m = list.m;
    let mut out = BTreeSet::new();
    for_each_block(list, |ci, cj, mask| {
        let mut bits = mask;
        while bits != 0 {
            let bit = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let pa = grid.perm[ci * m + bit / m];
            let pb = grid.perm[cj * m + bit % m];
            out.insert((pa.min(pb), pa.max(pb)));
        }
    });
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InteractionStats {
    pub n_admitted: usize,
    pub n_within_cutoff: usize,
    pub ratio: f64,
}

/// Counts admitted pairs and those of them inside `r_cut` at the given
/// clustered positions.
pub fn interaction_stats(
    list: &ClusterPairList,
    grid: &ClusterGrid,
    positions: &[Vec3],
    sim_box: &SimBox,
    r_cut: f64,
) -> InteractionStats {
    let m = grid.m;
    let mut n_admitted = 0;
    let mut n_within_cutoff = 0;
    for_each_block(list, |ci, cj, mask| {
        let mut bits = mask;
        while bits != 0 {
            let bit = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            n_admitted += 1;
            let dr = sub(positions[cj * m + bit % m], positions[ci * m + bit / m]);
            if within_radius(norm2(minimum_image(dr, sim_box)), r_cut) {
                n_within_cutoff += 1;
            }
        }
    });
    InteractionStats {
        n_admitted,
        n_within_cutoff,
        ratio: n_admitted as f64 / n_within_cutoff.max(1) as f64,
    }
}

/// Writes one CSV row per listed cluster pair with its bbox distance and
/// exact minimum admitted-pair distance at the current positions.
pub fn write_diagnostics<W: Write>(
    list: &ClusterPairList,
    grid: &ClusterGrid,
    positions: &[Vec3],
    sim_box: &SimBox,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i_cluster", "j_cluster", "bbox_distance_nm", "exact_min_distance_nm"])?;
    for (ci, js) in list.entries.iter().enumerate() {
        for e in js {
            let cj = e.j as usize;
            let bbox = if ci == cj {
                0.0
            } else {
                bbox_distance2(&grid.bboxes[ci], &grid.bboxes[cj], sim_box).sqrt()
            };
            let exact = masked_min_distance2(positions, grid.m, ci, cj, e.mask, sim_box).sqrt();
            w.write_record([
                ci.to_string(),
                cj.to_string(),
                format!("{bbox}"),
                format!("{exact}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridder::{build_cluster_grid, CellSizing};
    use crate::model::ParticleSystem;
    use crate::oracle::brute_force_pairs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_system(n: usize, edge: f64, seed: u64) -> ParticleSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParticleSystem::empty(SimBox::cubic(edge));
        for _ in 0..n {
            s.positions.push(std::array::from_fn(|_| rng.random::<f64>() * edge));
            s.velocities.push([0.0; 3]);
            s.masses.push(1.0);
            s.charges.push(0.0);
            s.lj_type.push(0);
        }
        s
    }

    /// Mask walk done slot by slot, independent of the bit tricks above.
    fn mask_walk_pairs(list: &ClusterPairList, grid: &ClusterGrid) -> BTreeSet<(usize, usize)> {
        let m = grid.m;
        let mut out = BTreeSet::new();
        for (ci, js) in list.entries.iter().enumerate() {
            for e in js {
                for a in 0..m {
                    for b in 0..m {
                        if (e.mask >> (a * m + b)) & 1 == 1 {
                            let sa = ci * m + a;
                            let sb = e.j as usize * m + b;
                            assert!(!grid.fill_mask[sa] && !grid.fill_mask[sb]);
                            let (x, y) = (grid.perm[sa], grid.perm[sb]);
                            assert!(out.insert((x.min(y), x.max(y))), "duplicate pair");
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn distant_pair_gives_empty_list() {
        let mut s = random_system(0, 4.0, 0);
        for p in [[0.5, 0.5, 0.5], [2.0, 0.5, 0.5]] {
            s.positions.push(p);
            s.velocities.push([0.0; 3]);
            s.masses.push(1.0);
            s.charges.push(0.0);
            s.lj_type.push(0);
        }
        let g = build_cluster_grid(&s, 1, CellSizing::default()).unwrap();
        let list = build_pair_list(&g, &s.sim_box, 1.0, 1, 1).unwrap();
        assert!(list.is_empty());
        assert!(admitted_pairs(&list, &g).is_empty());
    }

    #[test]
    fn parameter_errors() {
        let s = random_system(10, 1.5, 1);
        let g = build_cluster_grid(&s, 4, CellSizing::default()).unwrap();
        assert!(build_pair_list(&g, &s.sim_box, 0.9, 4, 1).is_err());
        assert!(build_pair_list(&g, &s.sim_box, 0.5, 4, 2).is_err());
        assert!(build_pair_list(&g, &s.sim_box, 0.5, 3, 1).is_err());
        assert!(build_pair_list(&g, &s.sim_box, -1.0, 4, 1).is_err());
    }

    #[test]
    fn full_off_diagonal_block_has_16_pairs() {
        let g = {
            let mut s = random_system(0, 4.0, 0);
            for k in 0..8 {
                s.positions.push([0.1, 0.1, 0.1 + 0.05 * k as f64]);
                s.velocities.push([0.0; 3]);
                s.masses.push(1.0);
                s.charges.push(0.0);
                s.lj_type.push(0);
            }
            build_cluster_grid(&s, 4, CellSizing::ColumnOccupancy(8.0)).unwrap()
        };
        assert_eq!(g.n_clusters, 2);
        let list = ClusterPairList {
            m: 4,
            n_lane: 4,
            r_list: 1.0,
            build_positions: g.clustered_positions.clone(),
            build_step: 0,
            supercluster_size: 1,
            entries: vec![vec![JEntry { j: 1, mask: pair_mask(&g, 0, 1) }], vec![]],
            superclusters: vec![],
        };
        assert_eq!(pair_mask(&g, 0, 1), 0xFFFF);
        assert_eq!(admitted_pairs(&list, &g).len(), 16);
    }

    #[test]
    fn diagonal_mask_is_upper_triangle() {
        let s = random_system(6, 3.0, 2);
        let g = build_cluster_grid(&s, 8, CellSizing::default()).unwrap();
        assert_eq!(g.n_clusters, 1);
        let mask = pair_mask(&g, 0, 0);
        // 6 real slots -> 15 unordered pairs, no self pairs
        assert_eq!(mask.count_ones(), 15);
        for a in 0..8 {
            assert_eq!((mask >> (a * 8 + a)) & 1, 0);
        }
    }

    #[test]
    fn m1_recovers_verlet_list() {
        for seed in 0..5 {
            let s = random_system(400, 3.0, seed);
            let g = build_cluster_grid(&s, 1, CellSizing::default()).unwrap();
            let list = build_pair_list(&g, &s.sim_box, 0.8, 1, 1).unwrap();
            let expected = brute_force_pairs(&s.positions, &s.sim_box, 0.8);
            assert_eq!(admitted_pairs(&list, &g), expected);
        }
    }

    #[test]
    fn coverage_superset_and_mask_walk() {
        for seed in 0..5 {
            let s = random_system(1000, 4.0, 100 + seed);
            let g = build_cluster_grid(&s, 4, CellSizing::default()).unwrap();
            let list = build_pair_list(&g, &s.sim_box, 0.9, 4, 1).unwrap();
            let admitted = admitted_pairs(&list, &g);
            let expected = brute_force_pairs(&s.positions, &s.sim_box, 0.9);
            assert!(expected.is_subset(&admitted));
            assert_eq!(mask_walk_pairs(&list, &g), admitted);
            for (ci, js) in list.entries.iter().enumerate() {
                assert!(js.windows(2).all(|w| w[0].j < w[1].j));
                assert!(js.iter().all(|e| e.j as usize >= ci));
            }
        }
    }

    #[test]
    fn supercluster_layout_admits_same_pairs() {
        let s = random_system(700, 3.5, 7);
        for m in [1, 2, 4, 8] {
            let g = build_cluster_grid(&s, m, CellSizing::default()).unwrap();
            let flat = build_pair_list(&g, &s.sim_box, 0.9, 4, 1).unwrap();
            let grouped = build_pair_list(&g, &s.sim_box, 0.9, 4, 8).unwrap();
            assert_eq!(admitted_pairs(&flat, &g), admitted_pairs(&grouped, &g));
            let pruned = prune_pair_list(&grouped, &g.clustered_positions, &s.sim_box);
            assert_eq!(
                admitted_pairs(&pruned, &g),
                admitted_pairs(&prune_pair_list(&flat, &g.clustered_positions, &s.sim_box), &g)
            );
        }
    }

    #[test]
    fn prune_keeps_exactly_close_pairs() {
        let s = random_system(800, 3.5, 9);
        let g = build_cluster_grid(&s, 4, CellSizing::default()).unwrap();
        let list = build_pair_list(&g, &s.sim_box, 0.8, 4, 1).unwrap();
        let pruned = prune_pair_list(&list, &g.clustered_positions, &s.sim_box);
        assert!(pruned.n_cluster_pairs() <= list.n_cluster_pairs());
        let expected = brute_force_pairs(&s.positions, &s.sim_box, 0.8);
        assert!(expected.is_subset(&admitted_pairs(&pruned, &g)));
        for (ci, js) in pruned.entries.iter().enumerate() {
            for e in js {
                assert!(list.entries[ci].contains(e));
            }
        }
    }

    #[test]
    fn interaction_stats_two_particles() {
        let mut s = random_system(0, 3.0, 0);
        for p in [[0.5, 0.5, 0.5], [0.9, 0.5, 0.5]] {
            s.positions.push(p);
            s.velocities.push([0.0; 3]);
            s.masses.push(1.0);
            s.charges.push(0.0);
            s.lj_type.push(0);
        }
        let g = build_cluster_grid(&s, 1, CellSizing::default()).unwrap();
        let list = build_pair_list(&g, &s.sim_box, 1.0, 1, 1).unwrap();
        let st = interaction_stats(&list, &g, &g.clustered_positions, &s.sim_box, 0.9);
        assert_eq!(st, InteractionStats { n_admitted: 1, n_within_cutoff: 1, ratio: 1.0 });
    }

    #[test]
    fn diagnostics_csv_shape() {
        let s = random_system(200, 2.5, 3);
        let g = build_cluster_grid(&s, 4, CellSizing::default()).unwrap();
        let list = build_pair_list(&g, &s.sim_box, 0.8, 4, 1).unwrap();
        let mut buf = Vec::new();
        write_diagnostics(&list, &g, &g.clustered_positions, &s.sim_box, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "i_cluster,j_cluster,bbox_distance_nm,exact_min_distance_nm"
        );
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), list.n_cluster_pairs());
        assert!(rows.iter().all(|r| r[2] <= r[3] + 1e-12));
    }
}
