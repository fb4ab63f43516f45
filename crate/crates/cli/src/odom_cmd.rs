use std::path::{Path, PathBuf};

use clap::Args;
use lodestar_core::eval::format_trajectory;
use lodestar_core::frame::RadarFrame;
use lodestar_core::pipeline::{run_sequence, OdometryRun, PipelineConfig};
use serde::Serialize;

use crate::dataset::DatasetManifest;
use crate::error::{self, CliError, Result};

pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const STEPS_FILE: &str = "steps.csv";
pub const CONFIG_ECHO_FILE: &str = "config.toml";

#[derive(Debug, Args)]
pub struct OdomArgs {
    /// Dataset directory holding manifest.csv.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Pipeline configuration (TOML). Defaults apply to omitted keys.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration: k10 (sparse scenes) or k50 (feature-rich).
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Base configuration from a file, a preset name or the defaults.
pub fn load_config(path: Option<&Path>, preset: Option<&str>) -> Result<PipelineConfig> {
    match (path, preset) {
        (Some(p), _) => PipelineConfig::parse(&error::read_to_string(p)?)
            .map_err(|e| CliError::from(e).in_file(p)),
        (None, Some(name)) => PipelineConfig::preset(name).map_err(|e| CliError::Usage(e.to_string())),
        (None, None) => Ok(PipelineConfig::default()),
    }
}

#[derive(Serialize)]
struct StepRow {
    prev_frame: u64,
    curr_frame: u64,
    timestamp: f64,
    theta_l: f64,
    theta_p: f64,
    dx: f64,
    dy: f64,
    dtheta: f64,
    peak_ratio: f64,
    dense_used: bool,
    prev_features: usize,
    curr_features: usize,
    prev_surfaces: usize,
    curr_surfaces: usize,
    stale_fraction: f64,
    baseline_scale: f64,
    initial_cost: f64,
    final_cost: f64,
    iterations: usize,
    inlier_fraction: f64,
    converged: bool,
    degraded: bool,
}

pub fn steps_csv(run: &OdometryRun) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for s in &run.steps {
        let d = &s.diagnostics;
        writer
            .serialize(StepRow {
                prev_frame: s.prev_frame_id,
                curr_frame: s.curr_frame_id,
                timestamp: s.timestamp,
                theta_l: s.theta_l,
                theta_p: s.theta_p,
                dx: s.pose_delta.x,
                dy: s.pose_delta.y,
                dtheta: s.pose_delta.theta,
                peak_ratio: d.peak_ratio,
                dense_used: d.dense_used,
                prev_features: d.prev_features,
                curr_features: d.curr_features,
                prev_surfaces: d.prev_surfaces,
                curr_surfaces: d.curr_surfaces,
                stale_fraction: d.stale_fraction,
                baseline_scale: d.baseline_scale,
                initial_cost: d.initial_cost,
                final_cost: d.final_cost,
                iterations: d.iterations,
                inlier_fraction: d.inlier_fraction,
                converged: d.converged,
                degraded: d.degraded,
            })
            .expect("in-memory csv write");
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8 csv")
}

/// Runs odometry and checks the result is finite.
pub fn odometry(frames: &[RadarFrame], config: &PipelineConfig) -> Result<OdometryRun> {
    let run = run_sequence(frames, config)?;
    if let Some(bad) = run
        .trajectory
        .iter()
        .find(|p| !(p.pose.x.is_finite() && p.pose.y.is_finite() && p.pose.theta.is_finite()))
    {
        return Err(CliError::Numerical(format!(
            "non-finite pose at t = {}",
            bad.timestamp
        )));
    }
    Ok(run)
}

/// Writes the trajectory, step log and resolved configuration into `out`.
pub fn write_outputs(out: &Path, run: &OdometryRun, resolved: &PipelineConfig) -> Result<()> {
    error::create_dir_all(out)?;
    error::write(out.join(TRAJECTORY_FILE), format_trajectory(&run.trajectory))?;
    error::write(out.join(STEPS_FILE), steps_csv(run))?;
    error::write(out.join(CONFIG_ECHO_FILE), resolved.to_toml())?;
    Ok(())
}

pub fn run(args: &OdomArgs) -> Result<OdometryRun> {
    let config = load_config(args.config.as_deref(), args.preset.as_deref())?;
    let manifest = DatasetManifest::load(&args.dataset)?;
    let frames = manifest.load_frames()?;
    let resolved = config.resolved(frames[0].resolution());
    let run = odometry(&frames, &resolved)?;
    write_outputs(&args.out, &run, &resolved)?;
    log::info!(
        "{} steps, {} degraded",
        run.steps.len(),
        run.steps.iter().filter(|s| s.diagnostics.degraded).count()
    );
    Ok(run)
}
