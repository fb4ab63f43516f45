//! Radar-only maritime odometry.
//!
//! Rotation between consecutive Cartesian radar frames is estimated densely
//! from a radial-integration descriptor ([`lodestar`]); marine-specific sparse
//! features ([`features`]) are then registered with a Cauchy-weighted
//! point-to-point objective ([`registration`]) to recover the remaining
//! motion. [`pipeline`] strings the stages together, [`synth`] produces
//! ground-truth sequences and [`eval`] scores trajectories.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod frame;
pub mod geometry;
pub mod lodestar;
pub mod features;
pub mod pipeline;
pub mod registration;
pub mod synth;

pub use error::{Error, Result};
pub use frame::{image_to_cloud, transform_cloud, PointCloud2D, RadarFrame, RadarPoint};
pub use geometry::{wrap_angle, Pose2, StampedPose, Trajectory};
