use std::path::PathBuf;

use clap::{Args, ValueEnum};
use lodestar_core::eval::read_trajectory;
use lodestar_core::geometry::Trajectory;
use lodestar_core::synth::scenes::{curved_harbor, curved_harbor_partial};
use lodestar_core::synth::{parse_scene_file, RouteSpec, ScanMode, SceneFile, Simulator};

use crate::dataset::{write_dataset, DatasetManifest};
use crate::error::{self, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    /// Hooked channel with a 90° turn, full-rotation scans at 1 Hz.
    CurvedHarbor,
    /// The same harbor with a 0.6 s frame period and a 1 s sweep.
    CurvedHarborPartial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanModeArg {
    FullRotation,
    PartialSector,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Bundled scene and route.
    #[arg(long, conflicts_with_all = ["scene", "route", "trajectory"])]
    pub builtin: Option<Builtin>,
    /// Scene description (TOML).
    #[arg(long, required_unless_present = "builtin")]
    pub scene: Option<PathBuf>,
    /// Route description (TOML): start pose, speed, frame period, legs.
    #[arg(long, conflicts_with = "trajectory", required_unless_present_any = ["builtin", "trajectory"])]
    pub route: Option<PathBuf>,
    /// Explicit poses, one `timestamp x y theta` line each.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Override the route's frame period (seconds).
    #[arg(long)]
    pub frame_period: Option<f64>,
    /// Override the scene's scan mode.
    #[arg(long, value_enum)]
    pub scan_mode: Option<ScanModeArg>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn load_inputs(args: &SynthArgs) -> Result<(SceneFile, Trajectory)> {
    let (mut scene, route) = match args.builtin {
        Some(Builtin::CurvedHarbor) => {
            let (s, r) = curved_harbor();
            (s, Some(r))
        }
        Some(Builtin::CurvedHarborPartial) => {
            let (s, r) = curved_harbor_partial();
            (s, Some(r))
        }
        None => {
            let path = args.scene.as_ref().expect("clap requires --scene");
            let scene = parse_scene_file(&error::read_to_string(path)?)
                .map_err(|e| CliError::from(e).in_file(path))?;
            let route = match &args.route {
                Some(p) => Some(
                    RouteSpec::parse(&error::read_to_string(p)?)
                        .map_err(|e| CliError::from(e).in_file(p))?,
                ),
                None => None,
            };
            (scene, route)
        }
    };
    if let Some(mode) = args.scan_mode {
        scene.sensor.mode = match mode {
            ScanModeArg::FullRotation => ScanMode::FullRotation,
            ScanModeArg::PartialSector => ScanMode::PartialSector,
        };
    }
    let trajectory = match (route, &args.trajectory) {
        (Some(mut route), _) => {
            if let Some(fp) = args.frame_period {
                route.frame_period = fp;
            }
            route.to_trajectory()?
        }
        (None, Some(path)) => read_trajectory(path).map_err(|e| CliError::from(e).in_file(path))?,
        (None, None) => unreachable!("clap requires a route or trajectory"),
    };
    Ok((scene, trajectory))
}

/// Frame period implied by a trajectory: its first timestamp step.
fn frame_period(trajectory: &Trajectory, fallback: Option<f64>) -> f64 {
    match trajectory.poses() {
        [a, b, ..] => b.timestamp - a.timestamp,
        _ => fallback.unwrap_or(1.0),
    }
}

pub fn run(args: &SynthArgs) -> Result<DatasetManifest> {
    let (scene_file, trajectory) = load_inputs(args)?;
    if trajectory.is_empty() {
        return Err(CliError::Data("trajectory has no poses".into()));
    }
    let schedule = scene_file
        .sensor
        .schedule(frame_period(&trajectory, args.frame_period));
    let simulator = Simulator::new(
        scene_file.scene.clone(),
        scene_file.sensor.frame_spec(),
        schedule,
    )?;
    let seq = simulator.generate_sequence(&trajectory)?;
    error::create_dir_all(&args.out)?;
    let manifest = write_dataset(&args.out, &seq)?;
    error::write(args.out.join("scene.toml"), scene_file.to_toml())?;
    log::info!(
        "wrote {} frames to {}",
        manifest.frames.len(),
        args.out.display()
    );
    Ok(manifest)
}
