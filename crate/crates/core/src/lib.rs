//! Interactive level-set segmentation with seed constraints.
//!
//! An image is turned into an edge-stopping map, a level set evolves by
//! edge-weighted curvature flow, and user seeds pin the sign of the level set
//! on marked nodes through lower and upper obstacles solved with projected SOR.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembler;
pub mod contour;
pub mod edgemap;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod ingest;
pub mod io;
pub mod solver;

pub use engine::{Segmentation, SegmentationParams, Snapshot};
pub use error::{Error, Result};
pub use grid::{GridField, GridSpec};
