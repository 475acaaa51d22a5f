//! Short-range molecular dynamics built around cluster-pair neighbor lists.
//!
//! Particles are packed into fixed-size spatial clusters ([`gridder`]), a
//! buffered list of interacting cluster pairs is built and pruned
//! ([`pairlist`]), and forces are evaluated in `m x n_lane` blocks
//! ([`kernels`]). [`engine`] drives velocity-Verlet integration, list reuse,
//! multi-worker force evaluation with slab load balancing and section
//! timing. [`oracle`] holds the brute-force references everything is
//! checked against.

// `!(x > 0.0)` is used on purpose to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]
pub mod cli;
pub mod engine;
pub mod error;
pub mod generate;
pub mod gridder;
pub mod kernels;
pub mod model;
pub mod oracle;
pub mod pairlist;

pub use error::{Error, Result};
pub use model::{ForcesEnergies, LjTable, NonbondedParams, ParticleSystem, SimBox, Vec3};
