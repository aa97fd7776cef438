//! Multi-robot localization from local visual-inertial odometry and
//! inter-robot UWB ranges.
//!
//! The pipeline filters ranges, estimates per-step world poses, and at
//! anchor epochs recovers the range-only structure of the group, aligns it
//! to the world with adaptive weights and uses the resulting anchor nodes to
//! correct drift and per-axis scale of each robot's odometry.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod correction;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod global;
pub mod range;
pub mod sim;
pub mod structure;
pub mod weights;

pub use error::{Error, Result};
pub use geometry::{RigidPose, Timestamp, Trajectory, Vec3};
