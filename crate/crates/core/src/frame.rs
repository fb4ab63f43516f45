//! Cartesian radar frames, the pixel/metric axis convention, and point clouds.
//!
//! Axis convention, used by every module in the crate: the frame center pixel
//! `(c, c)` with `c = width / 2` is the sensor origin. Metric `+x` points to
//! image "up" (row decreasing) and metric `+y` to image "right" (column
//! increasing):
//!
//! ```text
//! x = (c - row) * resolution
//! y = (col - c) * resolution
//! ```
//!
//! Azimuth `θ` (used for descriptor bins and ray corridors) is measured from
//! `+y` toward `+x`, so the sample at range `r` along azimuth `θ` sits at pixel
//! `(row, col) = (c - r sin θ, c + r cos θ)` and at the metric point
//! `(r sin θ, r cos θ)`. A counter-clockwise sensor rotation by `ψ` therefore
//! moves scene content toward increasing azimuth by `ψ`.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geometry::Pose2;

/// One square Cartesian radar image with normalized intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarFrame {
    image: Vec<f32>,
    width: usize,
    resolution: f64,
    timestamp: f64,
    frame_id: u64,
    sector_times: Option<Vec<f64>>,
}

impl RadarFrame {
    pub fn new(
        image: Vec<f32>,
        width: usize,
        resolution: f64,
        timestamp: f64,
        frame_id: u64,
    ) -> Result<Self> {
        if width < 3 {
            return Err(Error::InvalidFrame(format!("width {width} is too small")));
        }
        if image.len() != width * width {
            return Err(Error::InvalidFrame(format!(
                "expected {} pixels for a {width}x{width} frame, got {}",
                width * width,
                image.len()
            )));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::InvalidFrame(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if !timestamp.is_finite() {
            return Err(Error::InvalidFrame("non-finite timestamp".into()));
        }
        if let Some(idx) = image.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidFrame(format!(
                "pixel {idx} has intensity {} outside [0, 1]",
                image[idx]
            )));
        }
        Ok(RadarFrame {
            image,
            width,
            resolution,
            timestamp,
            frame_id,
            sector_times: None,
        })
    }

    /// Builds a frame from 8-bit grayscale samples scaled by 1/255.
    pub fn from_u8(
        pixels: &[u8],
        width: usize,
        resolution: f64,
        timestamp: f64,
        frame_id: u64,
    ) -> Result<Self> {
        let image = pixels.iter().map(|&v| f32::from(v) / 255.0).collect();
        RadarFrame::new(image, width, resolution, timestamp, frame_id)
    }

    pub fn zeros(width: usize, resolution: f64, timestamp: f64, frame_id: u64) -> Result<Self> {
        RadarFrame::new(vec![0.0; width * width], width, resolution, timestamp, frame_id)
    }

    /// Attaches per-azimuth-bin scan times (seconds), one entry per bin.
    pub fn with_sector_times(mut self, times: Vec<f64>) -> Self {
        self.sector_times = Some(times);
        self
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.image
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.width
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn frame_id(&self) -> u64 {
        self.frame_id
    }

    pub fn sector_times(&self) -> Option<&[f64]> {
        self.sector_times.as_deref()
    }

    /// Center pixel index along either axis.
    pub fn center(&self) -> usize {
        self.width / 2
    }

    /// Maximum detection range in meters.
    pub fn r_max(&self) -> f64 {
        self.resolution * self.center() as f64
    }

    pub fn pixels(&self) -> &[f32] {
        &self.image
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.image[row * self.width + col]
    }

    /// Bilinear sample at fractional pixel coordinates, clamped to the image.
    pub fn sample_bilinear(&self, row: f64, col: f64) -> f64 {
        let max = (self.width - 1) as f64;
        let r = row.clamp(0.0, max);
        let c = col.clamp(0.0, max);
        let r0 = (r.floor() as usize).min(self.width - 2);
        let c0 = (c.floor() as usize).min(self.width - 2);
        let fr = r - r0 as f64;
        let fc = c - c0 as f64;
        let v00 = f64::from(self.get(r0, c0));
        let v01 = f64::from(self.get(r0, c0 + 1));
        let v10 = f64::from(self.get(r0 + 1, c0));
        let v11 = f64::from(self.get(r0 + 1, c0 + 1));
        (1.0 - fr) * ((1.0 - fc) * v00 + fc * v01) + fr * ((1.0 - fc) * v10 + fc * v11)
    }

    pub fn pixel_to_metric(&self, row: usize, col: usize) -> [f64; 2] {
        let c = self.center() as f64;
        [
            (c - row as f64) * self.resolution,
            (col as f64 - c) * self.resolution,
        ]
    }

    /// Nearest pixel to a metric point, if it lies inside the image.
    pub fn metric_to_pixel(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let c = self.center() as f64;
        let row = (c - p[0] / self.resolution).round();
        let col = (c + p[1] / self.resolution).round();
        let max = (self.width - 1) as f64;
        if (0.0..=max).contains(&row) && (0.0..=max).contains(&col) {
            Some((row as usize, col as usize))
        } else {
            None
        }
    }

    pub fn is_congruent(&self, other: &RadarFrame) -> bool {
        self.width == other.width && (self.resolution - other.resolution).abs() < 1e-12
    }

    pub fn check_congruent(&self, other: &RadarFrame) -> Result<()> {
        if self.is_congruent(other) {
            Ok(())
        } else {
            Err(Error::Incongruent(format!(
                "frame {} is {}px @ {} m/px, frame {} is {}px @ {} m/px",
                self.frame_id,
                self.width,
                self.resolution,
                other.frame_id,
                other.width,
                other.resolution
            )))
        }
    }
}

/// Azimuth in the frame convention for a metric point.
#[inline]
pub fn azimuth_of(x: f64, y: f64) -> f64 {
    x.atan2(y)
}

/// Bin whose center azimuth is nearest to `theta`.
#[inline]
pub fn azimuth_bin(theta: f64, bins: usize) -> usize {
    let b = (theta.rem_euclid(TAU) / (TAU / bins as f64)).round() as usize;
    b % bins
}

/// Per-pixel polar lookup: range (pixels) and azimuth corridor of every pixel.
///
/// A pixel belongs to the corridor of the bin its center azimuth rounds to.
/// Pixels beyond `r_max` belong to no corridor; the center pixel belongs to bin 0.
#[derive(Debug, Clone)]
pub struct PolarLayout {
    width: usize,
    bins: usize,
    corridor: Vec<u32>,
    range_px: Vec<f32>,
}

impl PolarLayout {
    pub const OUTSIDE: u32 = u32::MAX;

    pub fn new(width: usize, bins: usize) -> Self {
        let c = (width / 2) as f64;
        let mut corridor = Vec::with_capacity(width * width);
        let mut range_px = Vec::with_capacity(width * width);
        for row in 0..width {
            for col in 0..width {
                let x = c - row as f64;
                let y = col as f64 - c;
                let r = x.hypot(y);
                range_px.push(r as f32);
                if r > c {
                    corridor.push(Self::OUTSIDE);
                } else {
                    corridor.push(azimuth_bin(azimuth_of(x, y), bins) as u32);
                }
            }
        }
        PolarLayout {
            width,
            bins,
            corridor,
            range_px,
        }
    }

    pub fn for_frame(frame: &RadarFrame, bins: usize) -> Self {
        PolarLayout::new(frame.width(), bins)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Corridor bin of pixel index `idx`, or `None` beyond `r_max`.
    #[inline]
    pub fn corridor(&self, idx: usize) -> Option<usize> {
        let b = self.corridor[idx];
        (b != Self::OUTSIDE).then_some(b as usize)
    }

    #[inline]
    pub fn range_px(&self, idx: usize) -> f32 {
        self.range_px[idx]
    }

    /// Pixel indices grouped by corridor.
    pub fn corridors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.bins];
        for (idx, &b) in self.corridor.iter().enumerate() {
            if b != Self::OUTSIDE {
                out[b as usize].push(idx);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarPoint {
    pub x: f64,
    pub y: f64,
    pub intensity: f64,
    /// Azimuth bin in the frame the point was extracted from.
    pub azimuth_bin: u32,
}

impl RadarPoint {
    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud2D {
    pub points: Vec<RadarPoint>,
}

impl PointCloud2D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One point per pixel inside `r_max` whose intensity reaches `threshold`.
pub fn image_to_cloud(frame: &RadarFrame, threshold: f64, bins: usize) -> Result<PointCloud2D> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    let layout = PolarLayout::for_frame(frame, bins);
    let w = frame.width();
    let points = frame
        .pixels()
        .iter()
        .enumerate()
        .filter_map(|(idx, &v)| {
            let bin = layout.corridor(idx)?;
            if f64::from(v) < threshold {
                return None;
            }
            let [x, y] = frame.pixel_to_metric(idx / w, idx % w);
            Some(RadarPoint {
                x,
                y,
                intensity: f64::from(v),
                azimuth_bin: bin as u32,
            })
        })
        .collect();
    Ok(PointCloud2D { points })
}

/// Rotates every point by `pose.theta`, then translates by `(pose.x, pose.y)`.
pub fn transform_cloud(cloud: &PointCloud2D, pose: &Pose2) -> PointCloud2D {
    let points = cloud
        .points
        .iter()
        .map(|p| {
            let [x, y] = pose.apply([p.x, p.y]);
            RadarPoint { x, y, ..*p }
        })
        .collect();
    PointCloud2D { points }
}
