//! Absolute pose error and trajectory files.
//!
//! Trajectory files hold one pose per line, `timestamp x y theta`, written
//! with nine decimals. Blank lines and lines starting with `#` are skipped.
//! Eight-field lines `timestamp x y z qx qy qz qw` are also accepted and
//! projected onto the plane (z dropped, yaw taken from the quaternion).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2, StampedPose, Trajectory};

/// Default association window in seconds.
pub const DEFAULT_MAX_DT: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignMode {
    /// Map the first estimated pose onto the first reference pose.
    FirstPose,
    /// Closed-form rigid fit over all matched positions.
    #[default]
    LeastSquares,
}

impl std::str::FromStr for AlignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first-pose" => Ok(AlignMode::FirstPose),
            "least-squares" => Ok(AlignMode::LeastSquares),
            _ => Err(Error::InvalidParameter(format!(
                "unknown alignment '{s}' (expected first-pose or least-squares)"
            ))),
        }
    }
}

impl std::fmt::Display for AlignMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlignMode::FirstPose => "first-pose",
            AlignMode::LeastSquares => "least-squares",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApeResult {
    pub mode: AlignMode,
    /// Meters.
    pub trans_rmse: f64,
    pub trans_mean: f64,
    pub trans_max: f64,
    /// Degrees.
    pub rot_rmse: f64,
    pub rot_mean: f64,
    pub rot_max: f64,
    /// Applied to the estimate before scoring.
    pub alignment: Pose2,
    /// `(est index, gt index)` of every scored pose.
    pub pairs: Vec<(usize, usize)>,
    /// Reference timestamp of every scored pose.
    pub timestamps: Vec<f64>,
    pub trans_errors: Vec<f64>,
    pub rot_errors: Vec<f64>,
}

impl ApeResult {
    /// `trans_rmse/rot_rmse` with three decimals.
    pub fn summary(&self) -> String {
        format!("{:.3}/{:.3}", self.trans_rmse, self.rot_rmse)
    }
}

/// Greedy nearest-timestamp matching: candidate pairs within `max_dt` are
/// taken in order of increasing `|dt|`, each pose used at most once. Pairs
/// are returned sorted by estimate index.
pub fn associate(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<Vec<(usize, usize)>> {
    if !(max_dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "max_dt must be positive, got {max_dt}"
        )));
    }
    let gt_times: Vec<f64> = gt.iter().map(|p| p.timestamp).collect();
    let mut candidates = Vec::new();
    for (i, e) in est.iter().enumerate() {
        let lo = gt_times.partition_point(|&t| t < e.timestamp - max_dt);
        for (j, &t) in gt_times.iter().enumerate().skip(lo) {
            let dt = (t - e.timestamp).abs();
            if t > e.timestamp + max_dt {
                break;
            }
            if dt <= max_dt {
                candidates.push((dt, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut est_used = vec![false; est.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !est_used[i] && !gt_used[j] {
            est_used[i] = true;
            gt_used[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoAssociation {
            max_dt,
            est_range: est.time_range(),
            gt_range: gt.time_range(),
        });
    }
    pairs.sort_unstable();
    Ok(pairs)
}

/// Rigid transform minimizing `Σ ‖g_i − A e_i‖²` over positions.
fn least_squares_alignment(est: &[[f64; 2]], gt: &[[f64; 2]]) -> Pose2 {
    let n = est.len() as f64;
    let mean = |v: &[[f64; 2]]| {
        let s = v.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / n, s[1] / n]
    };
    let (me, mg) = (mean(est), mean(gt));
    let (mut sc, mut ss) = (0.0, 0.0);
    for (e, g) in est.iter().zip(gt) {
        let (ex, ey) = (e[0] - me[0], e[1] - me[1]);
        let (gx, gy) = (g[0] - mg[0], g[1] - mg[1]);
        sc += ex * gx + ey * gy;
        ss += ex * gy - ey * gx;
    }
    let theta = if sc == 0.0 && ss == 0.0 { 0.0 } else { ss.atan2(sc) };
    let r = Pose2::rotation(theta);
    let rm = r.apply(me);
    Pose2::new(theta, mg[0] - rm[0], mg[1] - rm[1])
}

pub fn compute_ape(est: &Trajectory, gt: &Trajectory, mode: AlignMode) -> Result<ApeResult> {
    compute_ape_with(est, gt, mode, DEFAULT_MAX_DT)
}

pub fn compute_ape_with(
    est: &Trajectory,
    gt: &Trajectory,
    mode: AlignMode,
    max_dt: f64,
) -> Result<ApeResult> {
    let pairs = associate(est, gt, max_dt)?;
    if pairs.len() < 2 {
        return Err(Error::InvalidTrajectory(format!(
            "APE needs at least 2 matched poses, got {}",
            pairs.len()
        )));
    }
    let e: Vec<StampedPose> = pairs.iter().map(|&(i, _)| est.poses()[i]).collect();
    let g: Vec<StampedPose> = pairs.iter().map(|&(_, j)| gt.poses()[j]).collect();
    let alignment = match mode {
        AlignMode::FirstPose => g[0].pose.compose(&e[0].pose.inverse()),
        AlignMode::LeastSquares => {
            let ep: Vec<[f64; 2]> = e.iter().map(|p| [p.pose.x, p.pose.y]).collect();
            let gp: Vec<[f64; 2]> = g.iter().map(|p| [p.pose.x, p.pose.y]).collect();
            least_squares_alignment(&ep, &gp)
        }
    };
    let mut trans_errors = Vec::with_capacity(e.len());
    let mut rot_errors = Vec::with_capacity(e.len());
    for (ep, gp) in e.iter().zip(&g) {
        let a = alignment.compose(&ep.pose);
        trans_errors.push((a.x - gp.pose.x).hypot(a.y - gp.pose.y));
        rot_errors.push(wrap_angle(a.theta - gp.pose.theta).abs().to_degrees());
    }
    let n = trans_errors.len() as f64;
    let rmse = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(ApeResult {
        mode,
        trans_rmse: rmse(&trans_errors),
        trans_mean: mean(&trans_errors),
        trans_max: max(&trans_errors),
        rot_rmse: rmse(&rot_errors),
        rot_mean: mean(&rot_errors),
        rot_max: max(&rot_errors),
        alignment,
        timestamps: g.iter().map(|p| p.timestamp).collect(),
        pairs,
        trans_errors,
        rot_errors,
    })
}

pub fn format_trajectory(trajectory: &Trajectory) -> String {
    let mut out = String::new();
    for p in trajectory.iter() {
        writeln!(
            out,
            "{:.9} {:.9} {:.9} {:.9}",
            p.timestamp, p.pose.x, p.pose.y, p.pose.theta
        )
        .expect("writing to a string");
    }
    out
}

/// A written π reads back as 3.141592654; keep it at π instead of wrapping.
fn snap_pi(theta: f64) -> f64 {
    if theta > std::f64::consts::PI && theta - std::f64::consts::PI <= 1e-9 {
        std::f64::consts::PI
    } else {
        theta
    }
}

fn yaw_from_quaternion(qx: f64, qy: f64, qz: f64, qw: f64) -> f64 {
    (2.0 * (qw * qz + qx * qy)).atan2(1.0 - 2.0 * (qy * qy + qz * qz))
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory> {
    let mut traj = Trajectory::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("'{f}' is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(bad) = fields.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("non-finite value {bad}"),
            });
        }
        let (t, pose) = match fields.as_slice() {
            &[t, x, y, theta] => (t, Pose2::new(snap_pi(theta), x, y)),
            &[t, x, y, _z, qx, qy, qz, qw] => (t, Pose2::new(yaw_from_quaternion(qx, qy, qz, qw), x, y)),
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!(
                        "expected 4 fields (t x y theta) or 8 (t x y z qx qy qz qw), got {}",
                        other.len()
                    ),
                })
            }
        };
        traj.push(t, pose).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
    }
    Ok(traj)
}

pub fn write_trajectory(path: impl AsRef<Path>, trajectory: &Trajectory) -> Result<()> {
    std::fs::write(path, format_trajectory(trajectory))?;
    Ok(())
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    parse_trajectory(&std::fs::read_to_string(path)?)
}
