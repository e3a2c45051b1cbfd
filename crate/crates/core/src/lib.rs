//! Landmark visibility analysis over geotagged street-level panoramas.
//!
//! The crate locates landmarks in equirectangular frames ([`geo`]), scores
//! zoomed crops with a pluggable detector ([`detect`]), provides a voxel
//! line-of-sight baseline ([`voxel`]), builds a heterogeneous visibility
//! graph with walk-based path analysis ([`graph`]) and evaluates the
//! results ([`metrics`]). [`project`] ties the stages together on disk.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detect;
pub mod error;
pub mod geo;
pub mod graph;
pub mod metrics;
pub mod project;
pub mod roads;
pub mod voxel;

pub use error::{Error, Result};
