//! TOML scene description files.
//!
//! ```toml
//! seed = 7
//! rcs_levels = [0.0, 0.5, 1.0]
//! false_alarm_rate = 1e-4
//! speckle_sigma = 0.05
//! return_depth = 24.0
//! # bounds = [min_x, min_y, max_x, max_y]   (optional)
//!
//! [sensor]
//! width = 401
//! resolution = 2.0
//! bins = 360
//! sweep_period = 1.0
//! mode = "full-rotation"          # or "partial-sector"
//!
//! [[polygon]]
//! rcs = 1.0
//! vertices = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]]
//! ```

use serde::{Deserialize, Serialize};

use super::{FrameSpec, Polygon, ScanMode, ScanSchedule, Scene};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub width: usize,
    pub resolution: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub sweep_period: Option<f64>,
    #[serde(default)]
    pub mode: ScanMode,
}

fn default_bins() -> usize {
    crate::lodestar::DEFAULT_BINS
}

impl SensorSection {
    pub fn frame_spec(&self) -> FrameSpec {
        FrameSpec {
            width: self.width,
            resolution: self.resolution,
            bins: self.bins,
        }
    }

    /// Schedule for frames published every `frame_period` seconds. A missing
    /// sweep period means one revolution per frame.
    pub fn schedule(&self, frame_period: f64) -> ScanSchedule {
        ScanSchedule {
            frame_period,
            sweep_period: self.sweep_period.unwrap_or(frame_period),
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSceneFile {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_levels")]
    rcs_levels: Vec<f64>,
    #[serde(default)]
    false_alarm_rate: f64,
    #[serde(default)]
    speckle_sigma: f64,
    #[serde(default)]
    return_depth: f64,
    #[serde(default)]
    bounds: Option<[f64; 4]>,
    sensor: SensorSection,
    #[serde(default, rename = "polygon")]
    polygons: Vec<Polygon>,
}

fn default_levels() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub scene: Scene,
    pub sensor: SensorSection,
}

impl SceneFile {
    pub fn to_toml(&self) -> String {
        let raw = RawSceneFile {
            seed: self.scene.seed,
            rcs_levels: self.scene.rcs_levels.clone(),
            false_alarm_rate: self.scene.false_alarm_rate,
            speckle_sigma: self.scene.speckle_sigma,
            return_depth: self.scene.return_depth,
            bounds: self.scene.bounds,
            sensor: self.sensor.clone(),
            polygons: self.scene.polygons.clone(),
        };
        toml::to_string(&raw).expect("scene serializes")
    }
}

pub fn parse_scene_file(text: &str) -> Result<SceneFile> {
    let raw: RawSceneFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let scene = Scene {
        polygons: raw.polygons,
        rcs_levels: raw.rcs_levels,
        false_alarm_rate: raw.false_alarm_rate,
        speckle_sigma: raw.speckle_sigma,
        return_depth: raw.return_depth,
        seed: raw.seed,
        bounds: raw.bounds,
    };
    scene.validate()?;
    raw.sensor.frame_spec().validate()?;
    Ok(SceneFile {
        scene,
        sensor: raw.sensor,
    })
}
