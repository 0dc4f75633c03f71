//! Numerical laboratory for thin perforated interfaces with Neumann data.

pub mod capacity;
pub mod corrector;
pub mod eigen;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod sparse;
