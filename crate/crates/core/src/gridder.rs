//! Spatial sort of particles into fixed-size clusters.
//!
//! Particles are binned on an x/y grid of columns, sorted by z inside each
//! column and cut into clusters of exactly `m` slots. Only the last cluster
//! of a column can hold filler slots; a filler duplicates the coordinates of
//! the last real particle of its cluster and is excluded through
//! `fill_mask`, never through its coordinates.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::{minimum_image_component, wrap_position, ParticleSystem, SimBox, Vec3};

pub const SUPPORTED_CLUSTER_SIZES: [usize; 4] = [1, 2, 4, 8];

/// How the number of x/y columns is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
#[derive(Default)]
pub enum CellSizing {
    /// Column edge `(m / density)^(1/3)`, so one cluster fills a roughly
    /// cubic volume at the mean density. Columns are counted per dimension.
    #[default]
    CubicClusters,
    /// `cells_x = cells_y = round(sqrt(n / target))`, i.e. a mean of
    /// `target` particles per column.
    ColumnOccupancy(f64),
}


#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub lower: Vec3,
    pub upper: Vec3,
}

impl BoundingBox {
    pub fn center(&self) -> Vec3 {
        std::array::from_fn(|d| 0.5 * (self.lower[d] + self.upper[d]))
    }

    pub fn half_extent(&self) -> Vec3 {
        std::array::from_fn(|d| 0.5 * (self.upper[d] - self.lower[d]))
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|d| p[d] >= self.lower[d] && p[d] <= self.upper[d])
    }
}

#[derive(Clone, Debug)]
pub struct ClusterGrid {
    pub m: usize,
    pub n_clusters: usize,
    pub n_particles: usize,
    /// clustered slot -> original particle index (fillers point at the
    /// particle they duplicate)
    pub perm: Vec<usize>,
    /// original particle index -> clustered slot
    pub inverse_perm: Vec<usize>,
    /// true for filler slots
    pub fill_mask: Vec<bool>,
    pub cell_counts: [usize; 2],
    pub cell_size: [f64; 2],
    pub clustered_positions: Vec<Vec3>,
    pub bboxes: Vec<BoundingBox>,
    /// x/y column of each cluster, `cx * cell_counts[1] + cy`
    pub cluster_column: Vec<usize>,
    /// first cluster of each column, plus a trailing end marker
    pub column_starts: Vec<usize>,
}

impl ClusterGrid {
    pub fn n_slots(&self) -> usize {
        self.n_clusters * self.m
    }

    pub fn slots(&self, cluster: usize) -> Range<usize> {
        cluster * self.m..(cluster + 1) * self.m
    }

    pub fn column_clusters(&self, column: usize) -> Range<usize> {
        self.column_starts[column]..self.column_starts[column + 1]
    }

    pub fn n_columns(&self) -> usize {
        self.cell_counts[0] * self.cell_counts[1]
    }

    pub fn n_fillers(&self) -> usize {
        self.fill_mask.iter().filter(|&&f| f).count()
    }

    /// Reorders a per-particle quantity into clustered slot order.
    pub fn gather<T: Copy>(&self, values: &[T]) -> Vec<T> {
        self.perm.iter().map(|&p| values[p]).collect()
    }

    /// Refreshes clustered positions from original-order positions, wrapping
    /// them into the primary cell. Bounding boxes are left untouched.
    pub fn update_positions(&mut self, positions: &[Vec3], sim_box: &SimBox) {
        for (slot, &p) in self.perm.iter().enumerate() {
            self.clustered_positions[slot] = wrap_position(positions[p], sim_box);
        }
    }
}

fn column_counts(system: &ParticleSystem, m: usize, sizing: CellSizing) -> [usize; 2] {
    let n = system.len();
    let l = system.sim_box.lengths;
    match sizing {
        CellSizing::CubicClusters => {
            let density = n as f64 / system.sim_box.volume();
            let edge = (m as f64 / density).cbrt();
            [
                ((l[0] / edge).round() as usize).max(1),
                ((l[1] / edge).round() as usize).max(1),
            ]
        }
        CellSizing::ColumnOccupancy(target) => {
            let c = ((n as f64 / target).sqrt().round() as usize).max(1);
            [c, c]
        }
    }
}

/// Sorts particles onto the x/y grid and packs each z-column into clusters
/// of exactly `m` slots.
pub fn build_cluster_grid(
    system: &ParticleSystem,
    m: usize,
    sizing: CellSizing,
) -> Result<ClusterGrid> {
    if !SUPPORTED_CLUSTER_SIZES.contains(&m) {
        return Err(Error::param(format!(
            "cluster size {m} not supported, expected one of {SUPPORTED_CLUSTER_SIZES:?}"
        )));
    }
    if let CellSizing::ColumnOccupancy(t) = sizing {
        if !(t > 0.0) {
            return Err(Error::param(format!("column occupancy target must be > 0, got {t}")));
        }
    }
    let sim_box = &system.sim_box;
    if !sim_box.is_valid() {
        return Err(Error::param(format!("invalid box {:?}", sim_box.lengths)));
    }
    let n = system.len();
    let cell_counts = if n == 0 { [1, 1] } else { column_counts(system, m, sizing) };
    let cell_size = [
        sim_box.lengths[0] / cell_counts[0] as f64,
        sim_box.lengths[1] / cell_counts[1] as f64,
    ];
    let n_columns = cell_counts[0] * cell_counts[1];

    let wrapped: Vec<Vec3> = system
        .positions
        .iter()
        .map(|&p| wrap_position(p, sim_box))
        .collect();
    let column_of: Vec<usize> = wrapped
        .iter()
        .map(|p| {
            let cx = ((p[0] / cell_size[0]) as usize).min(cell_counts[0] - 1);
            let cy = ((p[1] / cell_size[1]) as usize).min(cell_counts[1] - 1);
            cx * cell_counts[1] + cy
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        column_of[a]
            .cmp(&column_of[b])
            .then(wrapped[a][2].total_cmp(&wrapped[b][2]))
            .then(a.cmp(&b))
    });

    let mut perm = Vec::with_capacity(n + n_columns * m);
    let mut fill_mask = Vec::with_capacity(perm.capacity());
    let mut cluster_column = Vec::new();
    let mut column_starts = Vec::with_capacity(n_columns + 1);

    let mut cursor = 0;
    for column in 0..n_columns {
        column_starts.push(cluster_column.len());
        let begin = cursor;
        while cursor < n && column_of[order[cursor]] == column {
            cursor += 1;
        }
        for chunk in order[begin..cursor].chunks(m) {
            perm.extend_from_slice(chunk);
            fill_mask.extend(std::iter::repeat_n(false, chunk.len()));
            let last = *chunk.last().expect("chunks are non-empty");
            for _ in chunk.len()..m {
                perm.push(last);
                fill_mask.push(true);
            }
            cluster_column.push(column);
        }
    }
    column_starts.push(cluster_column.len());
    let n_clusters = cluster_column.len();

    let mut inverse_perm = vec![0; n];
    for (slot, (&p, &filler)) in perm.iter().zip(&fill_mask).enumerate() {
        if !filler {
            inverse_perm[p] = slot;
        }
    }

    let clustered_positions: Vec<Vec3> = perm.iter().map(|&p| wrapped[p]).collect();
    let bboxes = (0..n_clusters)
        .map(|c| {
            let mut lower = [f64::INFINITY; 3];
            let mut upper = [f64::NEG_INFINITY; 3];
            for slot in c * m..(c + 1) * m {
                if fill_mask[slot] {
                    continue;
                }
                let p = clustered_positions[slot];
                for d in 0..3 {
                    lower[d] = lower[d].min(p[d]);
                    upper[d] = upper[d].max(p[d]);
                }
            }
            BoundingBox { lower, upper }
        })
        .collect();

    Ok(ClusterGrid {
        m,
        n_clusters,
        n_particles: n,
        perm,
        inverse_perm,
        fill_mask,
        cell_counts,
        cell_size,
        clustered_positions,
        bboxes,
        cluster_column,
        column_starts,
    })
}

/// Sends clustered-order values back to original order, dropping fillers.
pub fn scatter_to_original(grid: &ClusterGrid, clustered_values: &[Vec3]) -> Result<Vec<Vec3>> {
    if clustered_values.len() != grid.n_slots() {
        return Err(Error::param(format!(
            "expected {} clustered values, got {}",
            grid.n_slots(),
            clustered_values.len()
        )));
    }
    let mut out = vec![[0.0; 3]; grid.n_particles];
    for (slot, value) in clustered_values.iter().enumerate() {
        if !grid.fill_mask[slot] {
            out[grid.perm[slot]] = *value;
        }
    }
    Ok(out)
}

/// Squared minimum-image distance between two bounding boxes.
#[inline]
pub(crate) fn bbox_distance2(a: &BoundingBox, b: &BoundingBox, sim_box: &SimBox) -> f64 {
    let mut r2 = 0.0;
    for d in 0..3 {
        let ca = 0.5 * (a.lower[d] + a.upper[d]);
        let cb = 0.5 * (b.lower[d] + b.upper[d]);
        let ha = 0.5 * (a.upper[d] - a.lower[d]);
        let hb = 0.5 * (b.upper[d] - b.lower[d]);
        let sep = minimum_image_component(cb - ca, sim_box.lengths[d]).abs();
        let gap = sep - ha - hb;
        if gap > 0.0 {
            r2 += gap * gap;
        }
    }
    r2
}

/// Lower bound on the distance between any two real particles of clusters
/// `i` and `j`, from their bounding boxes under the minimum image.
pub fn cluster_min_distance(grid: &ClusterGrid, i: usize, j: usize, sim_box: &SimBox) -> Result<f64> {
    if i >= grid.n_clusters || j >= grid.n_clusters {
        return Err(Error::param(format!(
            "cluster index ({i}, {j}) out of range for {} clusters",
            grid.n_clusters
        )));
    }
    if i == j {
        return Ok(0.0);
    }
    Ok(bbox_distance2(&grid.bboxes[i], &grid.bboxes[j], sim_box).sqrt())
}
