//! On-disk datasets: a CSV manifest, 8-bit PNG frames, optional per-frame
//! sector-time sidecars and an optional ground-truth trajectory.
//!
//! ```text
//! # lodestar-manifest v1
//! # ground_truth = groundtruth.txt
//! image,timestamp,resolution,sector_times
//! frames/000000.png,0,2,sectors/000000.csv
//! frames/000001.png,1,2,sectors/000001.csv
//! ```
//!
//! Paths are relative to the manifest's directory. A sidecar is a CSV with a
//! `bin,time` header and one row per azimuth bin.

use std::path::{Path, PathBuf};

use lodestar_core::eval::write_trajectory;
use lodestar_core::frame::RadarFrame;
use lodestar_core::synth::SyntheticSequence;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{self, CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const GROUND_TRUTH_FILE: &str = "groundtruth.txt";
pub const MANIFEST_VERSION: u32 = 1;
const VERSION_PREFIX: &str = "# lodestar-manifest v";
const GROUND_TRUTH_KEY: &str = "ground_truth";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub image: PathBuf,
    pub timestamp: f64,
    /// Meters per pixel.
    pub resolution: f64,
    pub sector_times: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub frames: Vec<FrameEntry>,
    pub ground_truth: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct SectorRow {
    bin: usize,
    time: f64,
}

impl DatasetManifest {
    /// Reads and validates `<dir>/manifest.csv`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let root = dir.as_ref().to_path_buf();
        let path = root.join(MANIFEST_FILE);
        let text = error::read_to_string(&path)?;
        let manifest = DatasetManifest::parse(&text, root).map_err(|e| e.in_file(&path))?;
        manifest.validate().map_err(|e| e.in_file(&path))?;
        Ok(manifest)
    }

    pub fn parse(text: &str, root: PathBuf) -> Result<Self> {
        let mut lines = text.lines();
        let first = lines.next().unwrap_or_default().trim();
        let version = first
            .strip_prefix(VERSION_PREFIX)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| {
                CliError::Data(format!("line 1: expected '{VERSION_PREFIX}{MANIFEST_VERSION}'"))
            })?;
        if version != MANIFEST_VERSION {
            return Err(CliError::Data(format!(
                "manifest version {version} is not supported (expected {MANIFEST_VERSION})"
            )));
        }

        let mut ground_truth = None;
        let mut header_line = 2;
        let mut body = String::new();
        for line in lines {
            if body.is_empty() {
                if let Some(meta) = line.trim().strip_prefix('#') {
                    header_line += 1;
                    if let Some((key, value)) = meta.split_once('=') {
                        if key.trim() == GROUND_TRUTH_KEY {
                            ground_truth = Some(PathBuf::from(value.trim()));
                        }
                    }
                    continue;
                }
            }
            body.push_str(line);
            body.push('\n');
        }

        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        let mut frames = Vec::new();
        for (i, row) in reader.deserialize::<FrameEntry>().enumerate() {
            let line = header_line + 1 + i;
            frames.push(row.map_err(|e| CliError::Data(format!("line {line}: {e}")))?);
        }
        Ok(DatasetManifest {
            root,
            frames,
            ground_truth,
        })
    }

    /// Checks that every referenced file exists and timestamps increase.
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(CliError::Data("manifest lists no frames".into()));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if !(f.resolution.is_finite() && f.resolution > 0.0) {
                return Err(CliError::Data(format!(
                    "frame {i}: resolution must be positive, got {}",
                    f.resolution
                )));
            }
            if !f.timestamp.is_finite() {
                return Err(CliError::Data(format!("frame {i}: non-finite timestamp")));
            }
            if i > 0 && f.timestamp <= self.frames[i - 1].timestamp {
                return Err(CliError::Data(format!(
                    "frame {i}: timestamp {} does not increase on frame {} ({})",
                    f.timestamp,
                    i - 1,
                    self.frames[i - 1].timestamp
                )));
            }
            for p in std::iter::once(&f.image).chain(f.sector_times.as_ref()) {
                let full = self.root.join(p);
                if !full.is_file() {
                    return Err(CliError::Data(format!(
                        "frame {i}: missing file {}",
                        full.display()
                    )));
                }
            }
        }
        if let Some(gt) = &self.ground_truth {
            let full = self.root.join(gt);
            if !full.is_file() {
                return Err(CliError::Data(format!(
                    "missing ground truth file {}",
                    full.display()
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{VERSION_PREFIX}{MANIFEST_VERSION}\n");
        if let Some(gt) = &self.ground_truth {
            out.push_str(&format!("# {GROUND_TRUTH_KEY} = {}\n", gt.display()));
        }
        let mut writer = csv::Writer::from_writer(Vec::new());
        for f in &self.frames {
            writer.serialize(f).expect("in-memory csv write");
        }
        out.push_str(&String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8 csv"));
        out
    }

    pub fn ground_truth_path(&self) -> Option<PathBuf> {
        self.ground_truth.as_ref().map(|p| self.root.join(p))
    }

    /// Decodes frame `i`; its frame id is its manifest row.
    pub fn load_frame(&self, i: usize) -> Result<RadarFrame> {
        let entry = &self.frames[i];
        let path = self.root.join(&entry.image);
        let context = |msg: String| CliError::Data(format!("frame {i} ({}): {msg}", path.display()));
        let img = image::open(&path).map_err(|e| context(e.to_string()))?.to_luma8();
        if img.width() != img.height() {
            return Err(context(format!("image is {}x{}, expected square", img.width(), img.height())));
        }
        let frame = RadarFrame::from_u8(
            img.as_raw(),
            img.width() as usize,
            entry.resolution,
            entry.timestamp,
            i as u64,
        )
        .map_err(|e| context(e.to_string()))?;
        match &entry.sector_times {
            None => Ok(frame),
            Some(rel) => Ok(frame.with_sector_times(read_sector_times(&self.root.join(rel), i)?)),
        }
    }

    /// All frames, decoded in parallel. The lowest failing frame is reported.
    pub fn load_frames(&self) -> Result<Vec<RadarFrame>> {
        let decoded: Vec<Result<RadarFrame>> =
            (0..self.frames.len()).into_par_iter().map(|i| self.load_frame(i)).collect();
        decoded.into_iter().collect()
    }
}

fn read_sector_times(path: &Path, frame: usize) -> Result<Vec<f64>> {
    let context = |msg: String| CliError::Data(format!("frame {frame} ({}): {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| context(e.to_string()))?;
    let mut times = Vec::new();
    for (i, row) in reader.deserialize::<SectorRow>().enumerate() {
        let row = row.map_err(|e| context(e.to_string()))?;
        if row.bin != i {
            return Err(context(format!("line {}: expected bin {i}, got {}", i + 2, row.bin)));
        }
        times.push(row.time);
    }
    Ok(times)
}

fn write_sector_times(path: &Path, times: &[f64]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for (bin, &time) in times.iter().enumerate() {
        writer
            .serialize(SectorRow { bin, time })
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

/// Writes frames, sidecars, ground truth and the manifest under `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, seq: &SyntheticSequence) -> Result<DatasetManifest> {
    let root = dir.as_ref().to_path_buf();
    error::create_dir_all(root.join("frames"))?;
    if seq.frames.iter().any(|f| f.sector_times().is_some()) {
        error::create_dir_all(root.join("sectors"))?;
    }

    let entries = seq
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            let image = PathBuf::from(format!("frames/{i:06}.png"));
            let w = frame.width() as u32;
            let img = image::GrayImage::from_raw(w, w, frame.to_u8()).expect("square frame buffer");
            let full = root.join(&image);
            img.save(&full)
                .map_err(|e| CliError::Data(format!("{}: {e}", full.display())))?;
            let sector_times = match frame.sector_times() {
                Some(times) => {
                    let rel = PathBuf::from(format!("sectors/{i:06}.csv"));
                    write_sector_times(&root.join(&rel), times)?;
                    Some(rel)
                }
                None => None,
            };
            Ok(FrameEntry {
                image,
                timestamp: frame.timestamp(),
                resolution: frame.resolution(),
                sector_times,
            })
        })
        .collect::<Vec<Result<FrameEntry>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let gt = root.join(GROUND_TRUTH_FILE);
    write_trajectory(&gt, &seq.ground_truth).map_err(|e| CliError::from(e).in_file(&gt))?;
    let manifest = DatasetManifest {
        root: root.clone(),
        frames: entries,
        ground_truth: Some(PathBuf::from(GROUND_TRUTH_FILE)),
    };
    error::write(root.join(MANIFEST_FILE), manifest.to_csv())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "# lodestar-manifest v1\n# ground_truth = gt.txt\nimage,timestamp,resolution,sector_times\na.png,0,2,\nb.png,1.5,2,s.csv\n";

    #[test]
    fn parses_rows_and_metadata() {
        let m = DatasetManifest::parse(SAMPLE, PathBuf::from("/data")).unwrap();
        assert_eq!(m.ground_truth, Some(PathBuf::from("gt.txt")));
        assert_eq!(m.frames.len(), 2);
        assert_eq!(m.frames[0].sector_times, None);
        assert_eq!(m.frames[1].sector_times, Some(PathBuf::from("s.csv")));
        assert_eq!(m.frames[1].timestamp, 1.5);
    }

    #[test]
    fn csv_round_trip() {
        let m = DatasetManifest::parse(SAMPLE, PathBuf::from("/data")).unwrap();
        let again = DatasetManifest::parse(&m.to_csv(), PathBuf::from("/data")).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn rejects_unknown_version() {
        let text = SAMPLE.replace("v1", "v9");
        let err = DatasetManifest::parse(&text, PathBuf::new()).unwrap_err();
        assert!(err.to_string().contains("version 9"), "{err}");
        let err = DatasetManifest::parse("image,timestamp\n", PathBuf::new()).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn bad_row_names_its_line() {
        let text = SAMPLE.replace("1.5", "soon");
        let err = DatasetManifest::parse(&text, PathBuf::new()).unwrap_err();
        assert!(err.to_string().contains("line 5"), "{err}");
    }
}
