//! Semi-direct odometry: dense rotation from the LodeStar descriptor, then
//! sparse registration of rotation-corrected surface features.
//!
//! For a pair (prev, curr) the current frame's features are first rotated by
//! `θ_L` and registered onto the previous frame's features. The registration
//! result `T_P` is a small residual motion, and the step is
//! `T_P ∘ R(θ_L)` with heading change `θ_L + θ_P`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    apply_overlap_dropout, eliminate_overlap, eliminate_overlap_by_timestamps, extract_contour,
    select_features, FeatureCloud, FilterKind, OverlapReport, Selection,
};
use crate::frame::{transform_cloud, RadarFrame};
use crate::geometry::{wrap_angle, Pose2, StampedPose, Trajectory};
use crate::lodestar::{compute_descriptor, estimate_rotation, LodeStarDescriptor, PeakRefinement};
use crate::registration::{build_surfaces, register, RegistrationParams, SurfaceFeature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapMode {
    #[default]
    Off,
    /// Stale bins from the mean absolute image difference.
    ImageDiff,
    /// Stale bins from per-sector scan times; requires sector timestamps.
    Timestamps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationConfig {
    /// Meters; unset means three pixels.
    pub max_correspondence_distance: Option<f64>,
    /// Neighborhood radius for surface fitting in meters; unset means five pixels.
    pub surface_radius: Option<f64>,
    pub min_neighbors: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub lambda_init: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        let p = RegistrationParams::default();
        RegistrationConfig {
            max_correspondence_distance: None,
            surface_radius: None,
            min_neighbors: 3,
            max_iterations: p.max_iterations,
            tolerance: p.tolerance,
            lambda_init: p.lambda_init,
        }
    }
}

impl RegistrationConfig {
    pub fn gate(&self, resolution: f64) -> f64 {
        self.max_correspondence_distance.unwrap_or(3.0 * resolution)
    }

    pub fn radius(&self, resolution: f64) -> f64 {
        self.surface_radius.unwrap_or(5.0 * resolution)
    }

    pub fn params(&self, resolution: f64) -> RegistrationParams {
        RegistrationParams {
            max_correspondence_distance: self.gate(resolution),
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            lambda_init: self.lambda_init,
        }
    }
}

/// Pipeline settings, read from and written to TOML.
///
/// ```toml
/// bins = 360
/// k = 10
/// selection = "k-nearest"        # k-strongest | contour
/// filter_kind = "high-pass"      # low-pass
/// grad_threshold = 0.25
/// intensity_threshold = 0.3
/// change_threshold = 0.02
/// overlap_mode = "off"           # image-diff | timestamps
/// dense_gate = 1.2               # inf disables the dense stage
/// refinement = "parabolic"       # off
/// baseline_correction = true
///
/// [registration]
/// max_correspondence_distance = 6.0   # default: 3 pixels
/// surface_radius = 10.0               # default: 5 pixels
/// min_neighbors = 3
/// max_iterations = 50
/// tolerance = 1e-6
/// lambda_init = 1e-3
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub bins: usize,
    pub k: usize,
    pub selection: Selection,
    pub filter_kind: FilterKind,
    pub grad_threshold: f64,
    /// Contour pixels dimmer than this are ignored.
    pub intensity_threshold: f64,
    pub change_threshold: f64,
    pub overlap_mode: OverlapMode,
    /// Minimum correlation peak ratio for `θ_L` to be used.
    pub dense_gate: f64,
    pub refinement: PeakRefinement,
    /// With overlap elimination on, rescale each step from the revolution
    /// baseline of the compared scans to the frame interval.
    pub baseline_correction: bool,
    pub registration: RegistrationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            bins: crate::lodestar::DEFAULT_BINS,
            k: 10,
            selection: Selection::KNearest,
            filter_kind: FilterKind::HighPass,
            grad_threshold: 0.25,
            intensity_threshold: 0.3,
            change_threshold: 0.02,
            overlap_mode: OverlapMode::Off,
            dense_gate: 1.2,
            refinement: PeakRefinement::Parabolic,
            baseline_correction: true,
            registration: RegistrationConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Preset for sparse scenes.
    pub fn preset_k10() -> Self {
        PipelineConfig::default()
    }

    /// Preset for feature-rich scenes.
    pub fn preset_k50() -> Self {
        PipelineConfig {
            k: 50,
            ..PipelineConfig::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "k10" => Ok(Self::preset_k10()),
            "k50" => Ok(Self::preset_k50()),
            _ => Err(Error::Config(format!(
                "unknown preset '{name}' (expected k10 or k50)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.bins < crate::lodestar::MIN_BINS {
            return bad(format!("bins must be at least {}", crate::lodestar::MIN_BINS));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.grad_threshold > 0.0 && self.grad_threshold <= 1.0) {
            return bad(format!("grad_threshold must be in (0, 1], got {}", self.grad_threshold));
        }
        for (name, v) in [
            ("intensity_threshold", self.intensity_threshold),
            ("change_threshold", self.change_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if self.dense_gate.is_nan() || self.dense_gate < 1.0 {
            return bad(format!("dense_gate must be at least 1, got {}", self.dense_gate));
        }
        let r = &self.registration;
        for (name, v) in [
            ("max_correspondence_distance", r.max_correspondence_distance),
            ("surface_radius", r.surface_radius),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("registration.{name} must be positive, got {v}"));
                }
            }
        }
        if r.min_neighbors < 2 {
            return bad("registration.min_neighbors must be at least 2".into());
        }
        if r.max_iterations == 0 {
            return bad("registration.max_iterations must be at least 1".into());
        }
        if !(r.tolerance > 0.0) || !(r.lambda_init > 0.0) {
            return bad("registration.tolerance and lambda_init must be positive".into());
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Copy with resolution-dependent defaults filled in.
    pub fn resolved(&self, resolution: f64) -> Self {
        let mut out = *self;
        out.registration.max_correspondence_distance = Some(self.registration.gate(resolution));
        out.registration.surface_radius = Some(self.registration.radius(resolution));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StepDiagnostics {
    pub peak_ratio: f64,
    /// Whether `θ_L` passed the dense gate.
    pub dense_used: bool,
    pub prev_features: usize,
    pub curr_features: usize,
    pub prev_surfaces: usize,
    pub curr_surfaces: usize,
    pub stale_fraction: f64,
    /// Factor applied to the measured motion; see `baseline_correction`.
    pub baseline_scale: f64,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub inlier_fraction: f64,
    pub converged: bool,
    /// Registration failed and the step is the dense rotation alone.
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryStep {
    pub prev_frame_id: u64,
    pub curr_frame_id: u64,
    pub timestamp: f64,
    pub theta_l: f64,
    pub theta_p: f64,
    /// Current sensor pose in the previous sensor frame.
    pub pose_delta: Pose2,
    pub diagnostics: StepDiagnostics,
}

/// Per-frame products that do not depend on the partner frame.
struct FrameProducts {
    descriptor: LodeStarDescriptor,
    features: FeatureCloud,
}

fn frame_products(frame: &RadarFrame, config: &PipelineConfig) -> Result<FrameProducts> {
    let descriptor = compute_descriptor(frame, config.bins)?;
    let mut contour = extract_contour(frame, config.filter_kind, config.grad_threshold)?;
    contour.restrict_to_intensity(frame, config.intensity_threshold);
    let features = select_features(frame, &contour, config.selection, config.k, config.bins)?;
    Ok(FrameProducts { descriptor, features })
}

fn overlap_report(
    prev: &RadarFrame,
    curr: &RadarFrame,
    config: &PipelineConfig,
) -> Result<OverlapReport> {
    match config.overlap_mode {
        OverlapMode::Off => Ok(OverlapReport::empty(config.bins)),
        OverlapMode::ImageDiff => eliminate_overlap(prev, curr, config.change_threshold, config.bins),
        OverlapMode::Timestamps => {
            let (Some(a), Some(b)) = (prev.sector_times(), curr.sector_times()) else {
                return Err(Error::InvalidFrame(format!(
                    "overlap_mode = timestamps needs sector times on frames {} and {}",
                    prev.frame_id(),
                    curr.frame_id()
                )));
            };
            if a.len() != config.bins {
                return Err(Error::Incongruent(format!(
                    "frame {} has {} sector times, config uses {} bins",
                    prev.frame_id(),
                    a.len(),
                    config.bins
                )));
            }
            eliminate_overlap_by_timestamps(a, b)
        }
    }
}

/// Stale bins take the mean of the fresh ones, so the mask contributes
/// nothing once the correlation's DC term is removed.
fn masked_descriptor(d: &LodeStarDescriptor, report: &OverlapReport) -> Result<LodeStarDescriptor> {
    let fresh: Vec<f64> = d
        .values()
        .iter()
        .enumerate()
        .filter(|&(b, _)| !report.is_stale(b))
        .map(|(_, &v)| v)
        .collect();
    let fill = if fresh.is_empty() {
        0.0
    } else {
        fresh.iter().sum::<f64>() / fresh.len() as f64
    };
    let values = d
        .values()
        .iter()
        .enumerate()
        .map(|(b, &v)| if report.is_stale(b) { fill } else { v })
        .collect();
    LodeStarDescriptor::from_values(values)
}

fn surfaces(cloud: &FeatureCloud, config: &PipelineConfig, resolution: f64) -> Result<Vec<SurfaceFeature>> {
    build_surfaces(
        cloud,
        config.registration.radius(resolution),
        config.registration.min_neighbors,
    )
}

fn check_pair(prev: &RadarFrame, curr: &RadarFrame) -> Result<()> {
    prev.check_congruent(curr)?;
    if !(prev.timestamp() < curr.timestamp()) {
        return Err(Error::InvalidFrame(format!(
            "frame {} (t = {}) does not follow frame {} (t = {})",
            curr.frame_id(),
            curr.timestamp(),
            prev.frame_id(),
            prev.timestamp()
        )));
    }
    Ok(())
}

fn pair_step(
    prev: &RadarFrame,
    curr: &RadarFrame,
    prev_products: &FrameProducts,
    curr_products: &FrameProducts,
    config: &PipelineConfig,
) -> Result<OdometryStep> {
    check_pair(prev, curr)?;
    let resolution = curr.resolution();
    let report = overlap_report(prev, curr, config)?;

    // Stale bins hold the previous frame's content verbatim and would pull
    // the correlation toward zero shift; both sides drop them so the two
    // descriptors keep a common support.
    let (prev_descriptor, curr_descriptor) = if config.overlap_mode == OverlapMode::Off {
        (prev_products.descriptor.clone(), curr_products.descriptor.clone())
    } else {
        (
            masked_descriptor(&prev_products.descriptor, &report)?,
            masked_descriptor(&curr_products.descriptor, &report)?,
        )
    };
    let rotation = estimate_rotation(&prev_descriptor, &curr_descriptor, config.refinement)?;
    let dense_used = config.dense_gate.is_finite() && rotation.peak_ratio >= config.dense_gate;
    let theta_l = if dense_used { rotation.theta_l } else { 0.0 };

    let curr_features = apply_overlap_dropout(&curr_products.features, &report);
    let rotated = FeatureCloud {
        points: transform_cloud(&curr_features.points, &Pose2::rotation(theta_l)),
        ..curr_features.clone()
    };
    let src = surfaces(&rotated, config, resolution)?;
    let dst = surfaces(&prev_products.features, config, resolution)?;

    let mut diagnostics = StepDiagnostics {
        peak_ratio: rotation.peak_ratio,
        dense_used,
        prev_features: prev_products.features.len(),
        curr_features: curr_features.len(),
        prev_surfaces: dst.len(),
        curr_surfaces: src.len(),
        stale_fraction: report.dropped_fraction,
        ..StepDiagnostics::default()
    };

    let residual = match register(&src, &dst, Pose2::IDENTITY, &config.registration.params(resolution)) {
        Ok(r) => {
            diagnostics.initial_cost = r.cost_trace.first().map_or(r.final_cost, |c| c.0);
            diagnostics.final_cost = r.final_cost;
            diagnostics.iterations = r.iterations;
            diagnostics.inlier_fraction = r.inlier_fraction;
            diagnostics.converged = r.converged;
            r.pose
        }
        Err(Error::NoCorrespondences | Error::EmptyInput) => {
            log::warn!(
                "frames {} -> {}: no correspondences, using dense rotation only",
                prev.frame_id(),
                curr.frame_id()
            );
            diagnostics.degraded = true;
            Pose2::IDENTITY
        }
        Err(e) => return Err(e),
    };

    let scale = if config.baseline_correction {
        baseline_scale(prev, curr, &report, config.overlap_mode)
    } else {
        1.0
    };
    diagnostics.baseline_scale = scale;
    let theta_l = scale * theta_l;
    let theta_p = scale * wrap_angle(residual.theta);
    Ok(OdometryStep {
        prev_frame_id: prev.frame_id(),
        curr_frame_id: curr.frame_id(),
        timestamp: curr.timestamp(),
        theta_l,
        theta_p,
        pose_delta: Pose2 {
            theta: wrap_angle(theta_l + theta_p),
            x: scale * residual.x,
            y: scale * residual.y,
        },
        diagnostics,
    })
}

/// Ratio of the frame interval to the time between the two scans that are
/// actually compared.
///
/// A bin that is fresh in the current frame is compared with that bin's
/// previous sweep, one full revolution earlier. When frames are published
/// faster than the antenna turns, the measured motion therefore spans more
/// than one frame interval. With sector times the revolution is measured
/// directly; from image differences it follows from the fresh fraction,
/// which equals frame period over sweep period for a uniformly turning
/// antenna.
fn baseline_scale(prev: &RadarFrame, curr: &RadarFrame, report: &OverlapReport, mode: OverlapMode) -> f64 {
    let fresh = 1.0 - report.dropped_fraction;
    let scale = match mode {
        OverlapMode::Off => return 1.0,
        OverlapMode::ImageDiff => fresh,
        OverlapMode::Timestamps => {
            let (Some(a), Some(b)) = (prev.sector_times(), curr.sector_times()) else {
                return 1.0;
            };
            let gaps: Vec<f64> = a
                .iter()
                .zip(b)
                .enumerate()
                .filter(|&(bin, _)| !report.is_stale(bin))
                .map(|(_, (ta, tb))| tb - ta)
                .collect();
            if gaps.is_empty() {
                return 1.0;
            }
            let baseline = gaps.iter().sum::<f64>() / gaps.len() as f64;
            (curr.timestamp() - prev.timestamp()) / baseline
        }
    };
    if scale > 0.0 && scale.is_finite() {
        scale.min(1.0)
    } else {
        1.0
    }
}

/// Motion of the sensor from `prev` to `curr`.
pub fn process_pair(prev: &RadarFrame, curr: &RadarFrame, config: &PipelineConfig) -> Result<OdometryStep> {
    config.validate()?;
    check_pair(prev, curr)?;
    let a = frame_products(prev, config)?;
    let b = frame_products(curr, config)?;
    pair_step(prev, curr, &a, &b, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdometryRun {
    pub trajectory: Trajectory,
    pub steps: Vec<OdometryStep>,
}

/// Odometry over a frame sequence, starting at the identity.
///
/// Frames and pairs are processed in parallel; composition is sequential, so
/// the result does not depend on the thread count.
pub fn run_sequence(frames: &[RadarFrame], config: &PipelineConfig) -> Result<OdometryRun> {
    config.validate()?;
    if frames.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "odometry needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    for w in frames.windows(2) {
        check_pair(&w[0], &w[1])?;
    }
    let products = frames
        .par_iter()
        .map(|f| frame_products(f, config))
        .collect::<Result<Vec<_>>>()?;
    let steps = (1..frames.len())
        .into_par_iter()
        .map(|i| pair_step(&frames[i - 1], &frames[i], &products[i - 1], &products[i], config))
        .collect::<Result<Vec<_>>>()?;

    let mut pose = Pose2::IDENTITY;
    let mut poses = vec![StampedPose {
        timestamp: frames[0].timestamp(),
        pose,
    }];
    for s in &steps {
        pose = pose.compose(&s.pose_delta);
        poses.push(StampedPose {
            timestamp: s.timestamp,
            pose,
        });
    }
    Ok(OdometryRun {
        trajectory: Trajectory::from_poses(poses)?,
        steps,
    })
}
