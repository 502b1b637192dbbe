//! Constructive machinery for compactness of immersions with bounded curvature
//! integrals: graph patches, atlases, graph systems, limit gluing, projection
//! and measure diagnostics.

pub mod error;
pub mod grid;
pub mod linalg;
pub mod mesh;
pub mod patch;
pub mod atlas;
pub mod config;
pub mod scenario;
pub mod system;
pub mod limit;
pub mod measures;
pub mod pipeline;
pub mod projector;

pub use error::{GeomError, GraphFailure, Result};
