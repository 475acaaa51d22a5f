//! One-dimensional slab decomposition along x with time-driven widths.
//!
//! Each slab's next width is `width * mean_time / time`, renormalised to
//! span the box, floored at `min_width` and blended with the previous
//! width by the relaxation factor.

use crate::error::{Error, Result};

pub const DEFAULT_RELAXATION: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct SlabPartition {
    /// `n_slabs + 1` ascending x coordinates from 0 to the box length
    pub boundaries: Vec<f64>,
    pub min_width: f64,
    pub relaxation: f64,
    /// work unit -> slab, filled by [`SlabPartition::assign`]
    pub assignments: Vec<usize>,
    pub last_timings: Vec<f64>,
}

impl SlabPartition {
    pub fn uniform(n_slabs: usize, length: f64, min_width: f64) -> Result<Self> {
        if n_slabs == 0 {
            return Err(Error::param("need at least one slab"));
        }
        if !(length > 0.0) || min_width < 0.0 || n_slabs as f64 * min_width > length {
            return Err(Error::param(format!(
                "{n_slabs} slabs of minimum width {min_width} do not fit in {length}"
            )));
        }
        let boundaries = (0..=n_slabs)
            .map(|k| length * k as f64 / n_slabs as f64)
            .collect();
        Ok(SlabPartition {
            boundaries,
            min_width,
            relaxation: DEFAULT_RELAXATION,
            assignments: Vec::new(),
            last_timings: Vec::new(),
        })
    }

    pub fn with_relaxation(mut self, relaxation: f64) -> Self {
        self.relaxation = relaxation;
        self
    }

    pub fn n_slabs(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn length(&self) -> f64 {
        *self.boundaries.last().expect("at least two boundaries")
    }

    pub fn widths(&self) -> Vec<f64> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Slab containing coordinate `x`, wrapped into `[0, length)`.
    pub fn slab_of(&self, x: f64) -> usize {
        let len = self.length();
        let x = x.rem_euclid(len);
        let k = self.boundaries.partition_point(|&b| b <= x);
        k.clamp(1, self.n_slabs()) - 1
    }

    /// Assigns each work unit to a slab from its centre x coordinate.
    pub fn assign(&mut self, centers_x: &[f64]) {
        self.assignments = centers_x.iter().map(|&x| self.slab_of(x)).collect();
    }

    /// Work units of each slab, ascending.
    pub fn units_per_slab(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_slabs()];
        for (unit, &slab) in self.assignments.iter().enumerate() {
            out[slab].push(unit);
        }
        out
    }

    fn boundaries_for(&self, widths: &[f64]) -> Vec<f64> {
        let mut b = Vec::with_capacity(widths.len() + 1);
        let mut x = 0.0;
        b.push(0.0);
        for w in &widths[..widths.len() - 1] {
            x += w;
            b.push(x);
        }
        b.push(self.length());
        b
    }
}

/// Scales widths to sum to `length` while keeping each at least `min_width`.
fn normalise_with_floor(mut widths: Vec<f64>, length: f64, min_width: f64) -> Vec<f64> {
    let n = widths.len();
    let mut clamped = vec![false; n];
    loop {
        let fixed: f64 = clamped.iter().filter(|&&c| c).count() as f64 * min_width;
        let free: f64 = widths
            .iter()
            .zip(&clamped)
            .filter(|(_, &c)| !c)
            .map(|(w, _)| w)
            .sum();
        let scale = (length - fixed) / free;
        let mut changed = false;
        for k in 0..n {
            if clamped[k] {
                widths[k] = min_width;
            } else {
                widths[k] *= scale;
                if widths[k] < min_width {
                    clamped[k] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return widths;
        }
    }
}

/// Computes the next partition from one positive timing per slab.
pub fn rebalance_slabs(partition: &SlabPartition, timings: &[f64]) -> Result<SlabPartition> {
    let n = partition.n_slabs();
    if timings.len() != n {
        return Err(Error::param(format!(
            "{} timings for {n} slabs",
            timings.len()
        )));
    }
    if let Some(t) = timings.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::param(format!("slab timings must be positive, got {t}")));
    }
    let old = partition.widths();
    let mean = timings.iter().sum::<f64>() / n as f64;
    let proposed: Vec<f64> = old.iter().zip(timings).map(|(w, t)| w * mean / t).collect();
    let proposed = normalise_with_floor(proposed, partition.length(), partition.min_width);
    let alpha = partition.relaxation;
    let blended: Vec<f64> = proposed
        .iter()
        .zip(&old)
        .map(|(p, o)| alpha * p + (1.0 - alpha) * o)
        .collect();
    Ok(SlabPartition {
        boundaries: partition.boundaries_for(&blended),
        min_width: partition.min_width,
        relaxation: alpha,
        assignments: partition.assignments.clone(),
        last_timings: timings.to_vec(),
    })
}

/// `(max - min) / mean` of a set of slab costs.
pub fn relative_spread(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    (max - min) / mean
}
