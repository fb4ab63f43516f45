//! Deterministic synthetic maritime radar simulator.
//!
//! Scenes are sets of closed coastline polygons with discrete reflectivity.
//! Frames are rendered by casting rays from the vessel: the first polygon hit
//! along each ray paints a band of pixels starting at the shoreline, modelling
//! the radar shadow behind it. Speckle and single-pixel false alarms come
//! from a per-frame seeded generator so sequences are bit-reproducible.
//!
//! In partial-sector mode each published frame only refreshes the azimuth
//! sectors swept since the previous publication; every sector is rendered at
//! the vessel pose of its own sweep time and the rest of the image is carried
//! over from the previous frame.

mod route;
mod scene_file;
pub mod scenes;

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{azimuth_of, PolarLayout, RadarFrame};
use crate::geometry::{Pose2, Trajectory};

pub use route::{Leg, RouteSpec};
pub use scene_file::{parse_scene_file, SceneFile, SensorSection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
    pub rcs: f64,
}

impl Polygon {
    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                    return false;
                }
            }
        }
        true
    }

    /// Distance from `p` to the nearest polygon edge.
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = cross(sub(q2, q1), sub(p1, q1));
    let d2 = cross(sub(q2, q1), sub(p2, q1));
    let d3 = cross(sub(p2, p1), sub(q1, p1));
    let d4 = cross(sub(p2, p1), sub(q2, p1));
    ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0)) && d1 != 0.0 && d2 != 0.0
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    d[0].hypot(d[1])
}

/// Coastline geometry plus the radar noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub polygons: Vec<Polygon>,
    /// Sorted ascending and containing 0.
    pub rcs_levels: Vec<f64>,
    /// Probability per pixel of a spurious return at the highest level.
    pub false_alarm_rate: f64,
    /// Std-dev of Gaussian intensity noise on lit pixels.
    pub speckle_sigma: f64,
    /// Radial extent of the return behind the shoreline, meters.
    pub return_depth: f64,
    pub seed: u64,
    /// Region the vessel may occupy, `[min_x, min_y, max_x, max_y]`. Defaults to
    /// the polygon bounding box grown by the sensor range.
    #[serde(default)]
    pub bounds: Option<[f64; 4]>,
}

impl Default for Scene {
    fn default() -> Self {
        Scene {
            polygons: Vec::new(),
            rcs_levels: vec![0.0, 0.5, 1.0],
            false_alarm_rate: 0.0,
            speckle_sigma: 0.0,
            return_depth: 0.0,
            seed: 0,
            bounds: None,
        }
    }
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.rcs_levels.first() != Some(&0.0)
            || self.rcs_levels.windows(2).any(|w| w[0] >= w[1])
            || self.rcs_levels.iter().any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::InvalidParameter(format!(
                "rcs_levels must be strictly ascending in [0, 1] starting at 0, got {:?}",
                self.rcs_levels
            )));
        }
        if !(0.0..=1.0).contains(&self.false_alarm_rate) {
            return Err(Error::InvalidParameter(format!(
                "false_alarm_rate {} outside [0, 1]",
                self.false_alarm_rate
            )));
        }
        if !(self.speckle_sigma >= 0.0) || !(self.return_depth >= 0.0) {
            return Err(Error::InvalidParameter(
                "speckle_sigma and return_depth must be non-negative".into(),
            ));
        }
        for (i, poly) in self.polygons.iter().enumerate() {
            if !poly.is_simple() {
                return Err(Error::InvalidParameter(format!(
                    "polygon {i} has fewer than 3 vertices or self-intersects"
                )));
            }
        }
        Ok(())
    }

    /// `[min_x, min_y, max_x, max_y]` over all polygon vertices.
    pub fn polygon_bounds(&self) -> Option<[f64; 4]> {
        let mut it = self.polygons.iter().flat_map(|p| p.vertices.iter());
        let first = it.next()?;
        Some(it.fold([first[0], first[1], first[0], first[1]], |b, v| {
            [b[0].min(v[0]), b[1].min(v[1]), b[2].max(v[0]), b[3].max(v[1])]
        }))
    }

    pub fn max_level(&self) -> f64 {
        *self.rcs_levels.last().unwrap_or(&1.0)
    }

    /// Nearest configured level.
    pub fn quantize(&self, rcs: f64) -> f64 {
        self.rcs_levels
            .iter()
            .copied()
            .min_by(|a, b| (a - rcs).abs().total_cmp(&(b - rcs).abs()))
            .unwrap_or(rcs)
    }

    /// Explicit bounds, else the polygon bounding box grown by `margin`.
    pub fn navigable_bounds(&self, margin: f64) -> Option<[f64; 4]> {
        self.bounds.or_else(|| {
            self.polygon_bounds()
                .map(|[x0, y0, x1, y1]| [x0 - margin, y0 - margin, x1 + margin, y1 + margin])
        })
    }

    pub fn check_pose(&self, pose: &Pose2, margin: f64) -> Result<()> {
        if let Some([x0, y0, x1, y1]) = self.navigable_bounds(margin) {
            if !(x0..=x1).contains(&pose.x) || !(y0..=y1).contains(&pose.y) {
                return Err(Error::PoseOutsideScene { x: pose.x, y: pose.y });
            }
        }
        Ok(())
    }

    /// Distance from `p` to the nearest shoreline.
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        self.polygons
            .iter()
            .map(|poly| poly.boundary_distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    /// Square image side in pixels.
    pub width: usize,
    /// Meters per pixel.
    pub resolution: f64,
    /// Azimuth bins the ray fan is aligned with.
    pub bins: usize,
}

impl FrameSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 3 || !(self.resolution > 0.0) || self.bins < 8 {
            return Err(Error::InvalidParameter(format!(
                "invalid frame spec {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMode {
    /// Each frame is a complete revolution at the frame pose.
    #[default]
    FullRotation,
    /// Each frame refreshes only the sectors swept since the previous frame.
    PartialSector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSchedule {
    pub frame_period: f64,
    pub sweep_period: f64,
    pub mode: ScanMode,
}

impl ScanSchedule {
    pub fn full_rotation(frame_period: f64) -> Self {
        ScanSchedule {
            frame_period,
            sweep_period: frame_period,
            mode: ScanMode::FullRotation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_period > 0.0) || !(self.sweep_period > 0.0) {
            return Err(Error::InvalidParameter(
                "frame_period and sweep_period must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Most recent sweep time of `bin` at or before `t`.
    pub fn last_scan_time(&self, bin: usize, bins: usize, t: f64) -> f64 {
        let phase = bin as f64 / bins as f64;
        let cycles = (t / self.sweep_period - phase).floor();
        (cycles + phase) * self.sweep_period
    }
}

/// Frames rendered along a trajectory, with the trajectory as ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub frames: Vec<RadarFrame>,
    pub ground_truth: Trajectory,
}

struct FlatEdge {
    a: [f64; 2],
    d: [f64; 2],
    rcs: f64,
}

#[derive(Clone, Copy)]
struct RayHit {
    range_px: f64,
    level: f32,
}

pub struct Simulator {
    scene: Scene,
    spec: FrameSpec,
    schedule: ScanSchedule,
    edges: Vec<FlatEdge>,
    layout: PolarLayout,
    corridors: Vec<Vec<usize>>,
    rays_per_bin: usize,
    pixel_ray: Vec<u32>,
}

impl Simulator {
    pub fn new(scene: Scene, spec: FrameSpec, schedule: ScanSchedule) -> Result<Self> {
        scene.validate()?;
        spec.validate()?;
        schedule.validate()?;
        let edges = scene
            .polygons
            .iter()
            .flat_map(|p| {
                let rcs = scene.quantize(p.rcs);
                p.edges().map(move |(a, b)| FlatEdge { a, d: sub(b, a), rcs })
            })
            .collect();

        // Enough rays per bin that neighbouring rays are at most half a pixel
        // apart at r_max.
        let c = (spec.width / 2) as f64;
        let rays_per_bin = ((TAU * c) / (0.5 * spec.bins as f64)).ceil().max(1.0) as usize;
        let total_rays = spec.bins * rays_per_bin;
        let layout = PolarLayout::new(spec.width, spec.bins);
        let bin_width = TAU / spec.bins as f64;
        let mut pixel_ray = Vec::with_capacity(spec.width * spec.width);
        for row in 0..spec.width {
            for col in 0..spec.width {
                let theta = azimuth_of(c - row as f64, col as f64 - c).rem_euclid(TAU);
                let u = theta / bin_width + 0.5;
                let j = ((u * rays_per_bin as f64).floor() as usize) % total_rays;
                pixel_ray.push(j as u32);
            }
        }
        let corridors = layout.corridors();
        Ok(Simulator {
            scene,
            spec,
            schedule,
            edges,
            layout,
            corridors,
            rays_per_bin,
            pixel_ray,
        })
    }

    fn r_max(&self) -> f64 {
        (self.spec.width / 2) as f64 * self.spec.resolution
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn frame_spec(&self) -> &FrameSpec {
        &self.spec
    }

    pub fn schedule(&self) -> &ScanSchedule {
        &self.schedule
    }

    fn ray_azimuth(&self, ray: usize) -> f64 {
        let bin_width = TAU / self.spec.bins as f64;
        (ray as f64 + 0.5) / self.rays_per_bin as f64 * bin_width - 0.5 * bin_width
    }

    fn cast(&self, pose: &Pose2, ray: usize) -> Option<RayHit> {
        let theta = self.ray_azimuth(ray);
        let dir = pose.rotate([theta.sin(), theta.cos()]);
        let origin = [pose.x, pose.y];
        let mut best: Option<(f64, f64)> = None;
        for e in &self.edges {
            let denom = cross(dir, e.d);
            if denom.abs() < 1e-15 {
                continue;
            }
            let ao = sub(e.a, origin);
            let t = cross(ao, e.d) / denom;
            let u = cross(ao, dir) / denom;
            if t > 1e-9 && (0.0..=1.0).contains(&u) && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, e.rcs));
            }
        }
        best.and_then(|(t, rcs)| {
            (rcs > 0.0).then_some(RayHit {
                range_px: t / self.spec.resolution,
                level: rcs as f32,
            })
        })
    }

    fn cast_bin(&self, pose: &Pose2, bin: usize) -> Vec<Option<RayHit>> {
        (bin * self.rays_per_bin..(bin + 1) * self.rays_per_bin)
            .map(|j| self.cast(pose, j))
            .collect()
    }

    fn noise_rng(&self, frame_id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.scene.seed);
        rng.set_stream(frame_id);
        rng
    }

    /// Paints the corridor of `bin` from its ray hits, overwriting previous content.
    fn paint_corridor(&self, image: &mut [f32], bin: usize, hits: &[Option<RayHit>]) {
        let depth_px = self.scene.return_depth / self.spec.resolution;
        let first_ray = bin * self.rays_per_bin;
        for &idx in &self.corridors[bin] {
            let ray = self.pixel_ray[idx] as usize;
            let local = ray.wrapping_sub(first_ray);
            let hit = if local < self.rays_per_bin {
                hits[local]
            } else {
                None
            };
            let r = f64::from(self.layout.range_px(idx));
            image[idx] = match hit {
                Some(h) if r >= h.range_px - 0.5 && r < h.range_px + depth_px + 0.5 => h.level,
                _ => 0.0,
            };
        }
    }

    fn apply_noise(&self, image: &mut [f32], bins: &[usize], rng: &mut ChaCha8Rng) {
        let sigma = self.scene.speckle_sigma;
        let rate = self.scene.false_alarm_rate;
        let speckle = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma is positive"));
        let alarm = self.scene.max_level() as f32;
        for &bin in bins {
            for &idx in &self.corridors[bin] {
                if image[idx] > 0.0 {
                    if let Some(n) = &speckle {
                        // folded back into [0, 1] so bright returns keep their spread
                        let v = f64::from(image[idx]) + n.sample(rng);
                        let v = if v > 1.0 { 2.0 - v } else { v };
                        image[idx] = v.abs().clamp(0.0, 1.0) as f32;
                    }
                } else if rate > 0.0 && rng.random::<f64>() < rate {
                    image[idx] = alarm;
                }
            }
        }
    }

    /// Complete revolution rendered at a single pose.
    pub fn render_frame(&self, pose: &Pose2, t: f64, frame_id: u64) -> Result<RadarFrame> {
        self.scene.check_pose(pose, self.r_max())?;
        let w = self.spec.width;
        let mut image = vec![0.0f32; w * w];
        for bin in 0..self.spec.bins {
            let hits = self.cast_bin(pose, bin);
            self.paint_corridor(&mut image, bin, &hits);
        }
        let all: Vec<usize> = (0..self.spec.bins).collect();
        self.apply_noise(&mut image, &all, &mut self.noise_rng(frame_id));
        Ok(RadarFrame::new(image, w, self.spec.resolution, t, frame_id)?
            .with_sector_times(vec![t; self.spec.bins]))
    }

    fn check_timing(&self, trajectory: &Trajectory) -> Result<()> {
        let fp = self.schedule.frame_period;
        for w in trajectory.poses().windows(2) {
            let dt = w[1].timestamp - w[0].timestamp;
            if (dt - fp).abs() > 1e-6 + 1e-3 * fp {
                return Err(Error::InvalidTrajectory(format!(
                    "timestamp step {dt} at t={} does not match frame period {fp}",
                    w[1].timestamp
                )));
            }
        }
        Ok(())
    }

    /// One frame per trajectory pose.
    pub fn generate_sequence(&self, trajectory: &Trajectory) -> Result<SyntheticSequence> {
        self.check_timing(trajectory)?;
        let frames = match self.schedule.mode {
            ScanMode::FullRotation => trajectory
                .poses()
                .par_iter()
                .enumerate()
                .map(|(i, sp)| self.render_frame(&sp.pose, sp.timestamp, i as u64))
                .collect::<Result<Vec<_>>>()?,
            ScanMode::PartialSector => self.render_partial(trajectory)?,
        };
        Ok(SyntheticSequence {
            frames,
            ground_truth: trajectory.clone(),
        })
    }

    fn render_partial(&self, trajectory: &Trajectory) -> Result<Vec<RadarFrame>> {
        let w = self.spec.width;
        let bins = self.spec.bins;
        let mut image = vec![0.0f32; w * w];
        let mut sector_times = vec![f64::NEG_INFINITY; bins];
        let mut frames = Vec::with_capacity(trajectory.len());
        let mut window_start = trajectory
            .poses()
            .first()
            .map(|p| p.timestamp - self.schedule.sweep_period)
            .unwrap_or(0.0);
        for (i, sp) in trajectory.poses().iter().enumerate() {
            self.scene.check_pose(&sp.pose, self.r_max())?;
            let mut refreshed = Vec::new();
            for (bin, slot) in sector_times.iter_mut().enumerate() {
                let tau = self.schedule.last_scan_time(bin, bins, sp.timestamp);
                if tau > window_start {
                    let pose = trajectory.pose_at(tau).expect("trajectory is non-empty");
                    self.scene.check_pose(&pose, self.r_max())?;
                    let hits = self.cast_bin(&pose, bin);
                    self.paint_corridor(&mut image, bin, &hits);
                    *slot = tau;
                    refreshed.push(bin);
                }
            }
            self.apply_noise(&mut image, &refreshed, &mut self.noise_rng(i as u64));
            frames.push(
                RadarFrame::new(image.clone(), w, self.spec.resolution, sp.timestamp, i as u64)?
                    .with_sector_times(sector_times.clone()),
            );
            window_start = sp.timestamp;
        }
        Ok(frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::image_to_cloud;
    use crate::geometry::StampedPose;
    use std::collections::HashSet;

    fn wall_scene() -> Scene {
        Scene {
            polygons: vec![Polygon {
                vertices: vec![[100.0, -40.0], [120.0, -40.0], [120.0, 40.0], [100.0, 40.0]],
                rcs: 1.0,
            }],
            ..Scene::default()
        }
    }

    fn spec() -> FrameSpec {
        FrameSpec { width: 201, resolution: 2.0, bins: 360 }
    }

    fn lit(frame: &RadarFrame) -> Vec<(usize, usize)> {
        let w = frame.width();
        frame
            .pixels()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(i, _)| (i / w, i % w))
            .collect()
    }

    #[test]
    fn empty_scene_renders_black() {
        let sim = Simulator::new(Scene::default(), spec(), ScanSchedule::full_rotation(1.0)).unwrap();
        let f = sim.render_frame(&Pose2::IDENTITY, 0.0, 0).unwrap();
        assert!(f.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wall_ahead_lights_one_row() {
        let sim = Simulator::new(wall_scene(), spec(), ScanSchedule::full_rotation(1.0)).unwrap();
        let f = sim.render_frame(&Pose2::new(0.0, 0.0, 0.0), 0.0, 0).unwrap();
        let pixels = lit(&f);
        assert!(pixels.len() > 30);
        for (row, col) in pixels {
            let [x, y] = f.pixel_to_metric(row, col);
            // near face of the wall at x = 100 m is 50 px from center
            assert!((x - 100.0).abs() <= 2.0, "lit pixel at x={x}");
            assert!(y.abs() <= 42.0);
        }
    }

    #[test]
    fn pose_outside_bounds_rejected() {
        let sim = Simulator::new(wall_scene(), spec(), ScanSchedule::full_rotation(1.0)).unwrap();
        assert!(matches!(
            sim.render_frame(&Pose2::new(0.0, -1000.0, 0.0), 0.0, 0),
            Err(Error::PoseOutsideScene { .. })
        ));
    }

    #[test]
    fn rotated_vessel_sees_rotated_frame() {
        let mut scene = scenes::random_harbor(4, 60.0, 180.0);
        // a one-pixel return band aliases at grazing incidence on small islets
        scene.return_depth = 6.0;
        let sim = Simulator::new(scene, spec(), ScanSchedule::full_rotation(1.0)).unwrap();
        let base = sim.render_frame(&Pose2::IDENTITY, 0.0, 0).unwrap();
        let turned = sim.render_frame(&Pose2::rotation(30f64.to_radians()), 0.0, 0).unwrap();
        let base_set: HashSet<_> = lit(&base).into_iter().collect();
        let rot = Pose2::rotation(30f64.to_radians());
        let mut misses = 0;
        let pixels = lit(&turned);
        for &(row, col) in &pixels {
            // back into the unrotated sensor frame
            let p = rot.apply(turned.pixel_to_metric(row, col));
            let (r0, c0) = base.metric_to_pixel(p).unwrap();
            let near = (-1i64..=1).any(|dr| {
                (-1i64..=1).any(|dc| {
                    base_set.contains(&((r0 as i64 + dr) as usize, (c0 as i64 + dc) as usize))
                })
            });
            if !near {
                misses += 1;
            }
        }
        assert!(!pixels.is_empty());
        assert_eq!(misses, 0);
    }

    #[test]
    fn noise_free_pixels_sit_on_shorelines() {
        let scene = scenes::random_harbor(9, 60.0, 180.0);
        let sim = Simulator::new(scene.clone(), spec(), ScanSchedule::full_rotation(1.0)).unwrap();
        let pose = Pose2::new(0.4, 5.0, -3.0);
        let f = sim.render_frame(&pose, 0.0, 0).unwrap();
        for (row, col) in lit(&f) {
            let world = pose.apply(f.pixel_to_metric(row, col));
            assert!(scene.boundary_distance(world) <= f.resolution());
        }
    }

    #[test]
    fn intensities_are_quantized_without_speckle() {
        let mut scene = scenes::random_harbor(2, 60.0, 180.0);
        scene.polygons[0].rcs = 0.45;
        scene.false_alarm_rate = 1e-3;
        let sim = Simulator::new(scene.clone(), spec(), ScanSchedule::full_rotation(1.0)).unwrap();
        let f = sim.render_frame(&Pose2::IDENTITY, 0.0, 0).unwrap();
        for &v in f.pixels() {
            assert!(scene.rcs_levels.iter().any(|&l| (f64::from(v) - l).abs() < 1e-6));
        }
    }

    fn straight_run(n: usize, step: f64) -> Trajectory {
        Trajectory::from_poses(
            (0..n)
                .map(|i| StampedPose {
                    timestamp: i as f64,
                    pose: Pose2::new(0.0, i as f64 * step, 0.0),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_pose_gives_single_frame() {
        let sim = Simulator::new(wall_scene(), spec(), ScanSchedule::full_rotation(1.0)).unwrap();
        let seq = sim.generate_sequence(&straight_run(1, 0.0)).unwrap();
        assert_eq!(seq.frames.len(), 1);
    }

    #[test]
    fn straight_run_translates_coastline() {
        let scene = scenes::random_harbor(5, 80.0, 190.0);
        let sim = Simulator::new(scene, spec(), ScanSchedule::full_rotation(1.0)).unwrap();
        let traj = straight_run(10, 4.0);
        let seq = sim.generate_sequence(&traj).unwrap();
        assert_eq!(seq.frames.len(), 10);
        for pair in seq.frames.windows(2) {
            let a = image_to_cloud(&pair[0], 0.5, 360).unwrap();
            let b = image_to_cloud(&pair[1], 0.5, 360).unwrap();
            // points of frame i+1 shifted by +4 m along x land on lit pixels of frame i
            let set_a: HashSet<_> = a
                .points
                .iter()
                .map(|p| pair[0].metric_to_pixel(p.xy()).unwrap())
                .collect();
            let shifted = crate::frame::transform_cloud(&b, &Pose2::translation(4.0, 0.0));
            let mut hits = 0;
            for p in &shifted.points {
                if let Some((r, c)) = pair[0].metric_to_pixel(p.xy()) {
                    let near = (-1i64..=1).any(|dr| {
                        (-1i64..=1).any(|dc| {
                            set_a.contains(&((r as i64 + dr) as usize, (c as i64 + dc) as usize))
                        })
                    });
                    hits += near as usize;
                }
            }
            assert!(hits as f64 >= 0.9 * shifted.len() as f64);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let mut scene = scenes::random_harbor(5, 80.0, 190.0);
        scene.speckle_sigma = 0.05;
        scene.false_alarm_rate = 1e-3;
        let sim = Simulator::new(scene, spec(), ScanSchedule::full_rotation(1.0)).unwrap();
        let traj = straight_run(4, 2.0);
        let a = sim.generate_sequence(&traj).unwrap();
        let b = sim.generate_sequence(&traj).unwrap();
        assert_eq!(a.frames, b.frames);
    }

    #[test]
    fn partial_sector_carries_unswept_bins() {
        let mut scene = scenes::random_harbor(6, 80.0, 190.0);
        scene.return_depth = 20.0;
        let schedule = ScanSchedule {
            frame_period: 0.5,
            sweep_period: 1.0,
            mode: ScanMode::PartialSector,
        };
        let sim = Simulator::new(scene, spec(), schedule).unwrap();
        let traj = Trajectory::from_poses(
            (0..3)
                .map(|i| StampedPose {
                    timestamp: 0.5 * i as f64,
                    pose: Pose2::new(0.2 * i as f64, 3.0 * i as f64, 0.0),
                })
                .collect(),
        )
        .unwrap();
        let seq = sim.generate_sequence(&traj).unwrap();
        let (a, b) = (&seq.frames[1], &seq.frames[2]);
        let (ta, tb) = (a.sector_times().unwrap(), b.sector_times().unwrap());
        let stale: Vec<usize> = (0..360).filter(|&k| ta[k] == tb[k]).collect();
        assert!((170..=190).contains(&stale.len()), "{} stale", stale.len());
        let layout = PolarLayout::new(201, 360);
        for (idx, (va, vb)) in a.pixels().iter().zip(b.pixels()).enumerate() {
            if let Some(bin) = layout.corridor(idx) {
                if stale.contains(&bin) {
                    assert_eq!(va, vb);
                }
            }
        }
    }

    #[test]
    fn off_period_timestamps_rejected() {
        let sim = Simulator::new(wall_scene(), spec(), ScanSchedule::full_rotation(0.5)).unwrap();
        assert!(sim.generate_sequence(&straight_run(3, 0.0)).is_err());
    }
}
