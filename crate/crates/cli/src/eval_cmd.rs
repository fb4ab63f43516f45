use std::path::PathBuf;

use clap::Args;
use lodestar_core::eval::{compute_ape_with, read_trajectory, AlignMode, ApeResult, DEFAULT_MAX_DT};
use serde::Serialize;

use crate::error::{self, CliError, Result};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Estimated trajectory.
    #[arg(long)]
    pub est: PathBuf,
    /// Reference trajectory (4-field or 8-field quaternion lines).
    #[arg(long)]
    pub gt: PathBuf,
    /// Alignment: least-squares or first-pose.
    #[arg(long, default_value_t = AlignMode::LeastSquares)]
    pub align: AlignMode,
    /// Largest timestamp difference accepted when pairing poses (seconds).
    #[arg(long, default_value_t = DEFAULT_MAX_DT)]
    pub max_dt: f64,
    /// Per-pose error series (CSV).
    #[arg(long)]
    pub errors: Option<PathBuf>,
    /// Summary metrics (CSV, one row).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Serialize)]
struct ErrorRow {
    timestamp: f64,
    trans_error: f64,
    rot_error_deg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub align: String,
    pub pairs: usize,
    pub trans_rmse: f64,
    pub trans_mean: f64,
    pub trans_max: f64,
    pub rot_rmse: f64,
    pub rot_mean: f64,
    pub rot_max: f64,
}

impl From<&ApeResult> for MetricsRow {
    fn from(r: &ApeResult) -> Self {
        MetricsRow {
            align: r.mode.to_string(),
            pairs: r.pairs.len(),
            trans_rmse: r.trans_rmse,
            trans_mean: r.trans_mean,
            trans_max: r.trans_max,
            rot_rmse: r.rot_rmse,
            rot_mean: r.rot_mean,
            rot_max: r.rot_max,
        }
    }
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).expect("in-memory csv write");
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8 csv")
}

pub fn errors_csv(r: &ApeResult) -> String {
    to_csv(
        r.timestamps
            .iter()
            .zip(&r.trans_errors)
            .zip(&r.rot_errors)
            .map(|((&timestamp, &trans_error), &rot_error_deg)| ErrorRow {
                timestamp,
                trans_error,
                rot_error_deg,
            }),
    )
}

pub fn metrics_csv(r: &ApeResult) -> String {
    to_csv([MetricsRow::from(r)])
}

pub fn run(args: &EvalArgs) -> Result<ApeResult> {
    let est = read_trajectory(&args.est).map_err(|e| CliError::from(e).in_file(&args.est))?;
    let gt = read_trajectory(&args.gt).map_err(|e| CliError::from(e).in_file(&args.gt))?;
    let result = compute_ape_with(&est, &gt, args.align, args.max_dt)?;
    if !(result.trans_rmse.is_finite() && result.rot_rmse.is_finite()) {
        return Err(CliError::Numerical("pose error is not finite".into()));
    }
    if let Some(path) = &args.errors {
        error::write(path, errors_csv(&result))?;
    }
    if let Some(path) = &args.metrics {
        error::write(path, metrics_csv(&result))?;
    }
    Ok(result)
}
