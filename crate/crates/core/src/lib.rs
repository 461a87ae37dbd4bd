//! Anatomy-aware human mask synthesis from diffusion attention.
//!
//! The pipeline runs in three stages over per-step cross-attention maps:
//!
//! 1. [`localization`]: star token maps are calibrated onto pose keypoints
//!    and radially constrained, fleshy token maps are anchored in the pose
//!    frame.
//! 2. [`aggregation`]: thresholded averaging across tokens per step, then a
//!    phase-weighted sliding-window consensus across steps.
//! 3. [`refinement`] and [`maskpost`]: cross/self attention merge, Canny
//!    edge selection, gap bridging, flood fill and smoothing.
//!
//! All map arithmetic is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod aggregation;
pub mod anatomy;
pub mod canny;
pub mod error;
pub mod grid;
pub mod imgproc;
pub mod instruction;
pub mod localization;
pub mod maskpost;
pub mod pipeline;
pub mod refinement;
pub mod scalar;
pub mod synthgen;
pub mod tensorio;

pub use error::{Error, Result};
pub use grid::Grid;
pub use scalar::Scalar;

/// Single-precision attention map.
pub type Map = Grid<f32>;
/// Double-precision attention map.
pub type Map64 = Grid<f64>;
/// Binary image (edges or mask).
pub type BinaryGrid = Grid<bool>;
