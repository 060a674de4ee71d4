//! Numerical laboratory for wave trains, source defects, their spectra, and
//! the pointwise Green's function structure of 1D reaction-diffusion systems.
//!
//! The crate is organized around a pipeline:
//! model -> evolve -> wavetrain/bloch -> defect -> linspec -> greens ->
//! bounds/stability, with `fit`, `linalg`, and `spectral` as shared numerics.

pub mod bloch;
pub mod bounds;
pub mod defect;
pub mod error;
pub mod evolve;
pub mod fit;
pub mod greens;
pub mod grid;
pub mod linalg;
pub mod linspec;
pub mod model;
pub mod stability;
pub mod wavetrain;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Boundary, Field, Grid1D};
pub use model::{build_builtin, BuiltinModelId, ReactionDiffusionModel};
