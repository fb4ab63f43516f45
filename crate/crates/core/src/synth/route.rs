use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose2, StampedPose, Trajectory};

/// Constant-speed route built from legs of constant turn rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub start: RouteStart,
    /// Meters per second.
    pub speed: f64,
    /// Seconds between published frames.
    pub frame_period: f64,
    #[serde(default)]
    pub start_time: f64,
    #[serde(rename = "leg")]
    pub legs: Vec<Leg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteStart {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leg {
    /// Seconds.
    pub duration: f64,
    /// Counter-clockwise, degrees per second.
    #[serde(default)]
    pub turn_rate_deg: f64,
}

impl RouteSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("route spec serializes")
    }

    pub fn duration(&self) -> f64 {
        self.legs.iter().map(|l| l.duration).sum()
    }

    /// Pose after travelling for `t` seconds from the start.
    pub fn pose_at(&self, t: f64) -> Pose2 {
        let mut pose = Pose2::new(
            self.start.heading_deg.to_radians(),
            self.start.x,
            self.start.y,
        );
        let mut remaining = t.max(0.0);
        let last = self.legs.len().saturating_sub(1);
        for (i, leg) in self.legs.iter().enumerate() {
            let dt = if i == last { remaining } else { remaining.min(leg.duration) };
            pose = pose.compose(&self.leg_increment(leg, dt));
            remaining -= dt;
            if remaining <= 0.0 {
                break;
            }
        }
        pose
    }

    fn leg_increment(&self, leg: &Leg, dt: f64) -> Pose2 {
        let omega = leg.turn_rate_deg.to_radians();
        let dist = self.speed * dt;
        let dtheta = omega * dt;
        if dtheta.abs() < 1e-12 {
            Pose2::new(0.0, dist, 0.0)
        } else {
            let radius = self.speed / omega;
            Pose2::new(dtheta, radius * dtheta.sin(), radius * (1.0 - dtheta.cos()))
        }
    }

    /// Route sampled every `frame_period` seconds over its full duration.
    pub fn to_trajectory(&self) -> Result<Trajectory> {
        if !(self.frame_period > 0.0) || self.legs.is_empty() {
            return Err(Error::Config(
                "route needs a positive frame_period and at least one leg".into(),
            ));
        }
        let frames = (self.duration() / self.frame_period + 1e-9).floor() as usize + 1;
        Trajectory::from_poses(
            (0..frames)
                .map(|i| {
                    let t = i as f64 * self.frame_period;
                    StampedPose {
                        timestamp: self.start_time + t,
                        pose: self.pose_at(t),
                    }
                })
                .collect(),
        )
    }
}
