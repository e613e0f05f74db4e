//! Persistence atlas: spatial trends of critical point layouts in ensembles
//! of scalar fields.
//!
//! The pipeline computes extremum persistence diagrams per member, turns
//! them into persistence maps (persistence-weighted Gaussian densities of
//! extrema), embeds the members with a Laplacian eigenmap of the map
//! distances, clusters them, and extracts mandatory critical points per
//! cluster.

pub mod atlas;
pub mod baseline;
pub mod error;
pub mod grid;
pub mod hull;
pub mod io;
pub mod linalg;
pub mod mandatory;
pub mod map_space;
pub mod pmap;
pub mod rng;
pub mod synth;
pub mod topology;
mod union_find;

pub use error::{Error, Result};
pub use grid::{Ensemble, GridTopology, ScalarFieldGrid};
