//! Multi-camera track fusion on a shared warehouse floor plane.
//!
//! Per-camera tracklets are projected onto the floor through per-camera
//! homographies (using either the bounding-box center or an estimated foot
//! point), duplicates from overlapping views are merged, each frame keeps the
//! observation closest to its camera's image center, and temporally
//! fragmented tracks are joined with a constant-velocity Kalman filter.
//!
//! The crate also ships a synthetic warehouse simulator and HOTA/IDF1/MOTA
//! metrics for point-valued tracks so the whole pipeline can be exercised
//! without any video.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ablation;
pub mod appearance;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod simulator;

pub use error::{Error, Result};
