//! Planar rigid transforms and timestamped pose sequences.

use std::f64::consts::{PI, TAU};
use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let mut a = theta.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

/// SE(2) transform: rotation by `theta` followed by translation `(x, y)`.
///
/// Applied to a point `p` it yields `R(theta) p + (x, y)`. The angle is kept
/// wrapped to `(-π, π]` after every operation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub theta: f64,
    pub x: f64,
    pub y: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        theta: 0.0,
        x: 0.0,
        y: 0.0,
    };

    pub fn new(theta: f64, x: f64, y: f64) -> Self {
        Pose2 {
            theta: wrap_angle(theta),
            x,
            y,
        }
    }

    pub fn rotation(theta: f64) -> Self {
        Pose2::new(theta, 0.0, 0.0)
    }

    pub fn translation(x: f64, y: f64) -> Self {
        Pose2::new(0.0, x, y)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.theta + other.theta,
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
        )
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            -self.theta,
            -(c * self.x + s * self.y),
            -(-s * self.x + c * self.y),
        )
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [
            c * p[0] - s * p[1] + self.x,
            s * p[0] + c * p[1] + self.y,
        ]
    }

    pub fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }

    /// Row-major homogeneous 3×3 matrix.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let (s, c) = self.theta.sin_cos();
        [[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]]
    }

    pub fn translation_norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Linear interpolation of translation and shortest-arc interpolation of heading.
    pub fn interpolate(&self, other: &Pose2, s: f64) -> Pose2 {
        let dtheta = wrap_angle(other.theta - self.theta);
        Pose2::new(
            self.theta + s * dtheta,
            self.x + s * (other.x - self.x),
            self.y + s * (other.y - self.y),
        )
    }
}

impl Mul for Pose2 {
    type Output = Pose2;

    fn mul(self, rhs: Pose2) -> Pose2 {
        self.compose(&rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StampedPose {
    pub timestamp: f64,
    pub pose: Pose2,
}

/// Poses ordered by strictly increasing timestamp.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    poses: Vec<StampedPose>,
}

impl Trajectory {
    pub fn new() -> Self {
        Trajectory::default()
    }

    pub fn from_poses(poses: Vec<StampedPose>) -> Result<Self> {
        for (i, w) in poses.windows(2).enumerate() {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(Error::InvalidTrajectory(format!(
                    "timestamp at index {} ({}) does not exceed its predecessor ({})",
                    i + 1,
                    w[1].timestamp,
                    w[0].timestamp
                )));
            }
        }
        if let Some(p) = poses.iter().find(|p| !p.timestamp.is_finite()) {
            return Err(Error::InvalidTrajectory(format!(
                "non-finite timestamp {}",
                p.timestamp
            )));
        }
        Ok(Trajectory { poses })
    }

    pub fn push(&mut self, timestamp: f64, pose: Pose2) -> Result<()> {
        if let Some(last) = self.poses.last() {
            if !(timestamp > last.timestamp) {
                return Err(Error::InvalidTrajectory(format!(
                    "timestamp {timestamp} does not exceed previous {}",
                    last.timestamp
                )));
            }
        }
        self.poses.push(StampedPose { timestamp, pose });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> &[StampedPose] {
        &self.poses
    }

    pub fn iter(&self) -> impl Iterator<Item = &StampedPose> {
        self.poses.iter()
    }

    pub fn time_range(&self) -> Option<(f64, f64)> {
        Some((self.poses.first()?.timestamp, self.poses.last()?.timestamp))
    }

    /// Sum of translation increments between consecutive poses.
    pub fn path_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| (w[1].pose.x - w[0].pose.x).hypot(w[1].pose.y - w[0].pose.y))
            .sum()
    }

    /// Pose at time `t`, interpolated between neighbours and clamped at both ends.
    pub fn pose_at(&self, t: f64) -> Option<Pose2> {
        let first = self.poses.first()?;
        let last = self.poses.last()?;
        if t <= first.timestamp {
            return Some(first.pose);
        }
        if t >= last.timestamp {
            return Some(last.pose);
        }
        let idx = self.poses.partition_point(|p| p.timestamp <= t);
        let a = &self.poses[idx - 1];
        let b = &self.poses[idx];
        let s = (t - a.timestamp) / (b.timestamp - a.timestamp);
        Some(a.pose.interpolate(&b.pose, s))
    }
}
