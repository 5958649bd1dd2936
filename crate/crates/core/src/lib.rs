//! Parametric surface finite elements for mean curvature flow of closed
//! surfaces: Dziuk, BGN and minimal-deformation-rate (MDR) schemes with an
//! L2-projected averaged normal, plus convergence and pinch-off harnesses.

pub mod analysis;
pub mod assembly;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod mesh;
pub mod refelem;
pub mod schemes;
pub mod sparse;
pub mod vec3;

pub use error::{Error, Result};
pub use mesh::{NodalField, SurfaceMesh};
pub use sparse::SparseMatrix;
