//! Configuration sweeps: one odometry + evaluation run per combination of
//! axis values.
//!
//! ```toml
//! [axes]
//! overlap_mode = ["off", "timestamps"]
//! dense_gate = [1.2, inf]               # inf: sparse-only
//! k = [10, 20, 50, 100]
//! "registration.max_iterations" = [20, 50]
//! ```
//!
//! Axis names are pipeline configuration keys, dotted for nested tables.
//! Combinations are enumerated with the last axis varying fastest.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;
use lodestar_core::eval::{compute_ape_with, read_trajectory, AlignMode, DEFAULT_MAX_DT};
use lodestar_core::frame::RadarFrame;
use lodestar_core::geometry::Trajectory;
use lodestar_core::pipeline::PipelineConfig;
use rayon::prelude::*;
use serde::Deserialize;
use toml::{Table, Value};

use crate::dataset::DatasetManifest;
use crate::error::{self, exit, CliError, Result};
use crate::eval_cmd::MetricsRow;
use crate::odom_cmd::{load_config, odometry, write_outputs};

pub const RESULTS_FILE: &str = "results.csv";

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Dataset directory holding manifest.csv.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Sweep specification (TOML with an [axes] table).
    #[arg(long)]
    pub sweep: PathBuf,
    /// Base pipeline configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference trajectory, if the manifest does not name one.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Alignment used for every cell.
    #[arg(long, default_value_t = AlignMode::LeastSquares)]
    pub align: AlignMode,
    /// Cells run concurrently (0: one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory: results.csv plus one subdirectory per cell.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    axes: Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axes: Vec<(String, Vec<Value>)>,
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawSweep = toml::from_str(text).map_err(|e| CliError::Data(e.to_string()))?;
        let known = config_keys();
        let mut axes = Vec::new();
        for (key, value) in raw.axes {
            if !known.contains(&key) {
                return Err(CliError::Data(format!("unknown configuration key '{key}'")));
            }
            let Value::Array(values) = value else {
                return Err(CliError::Data(format!("axis '{key}' must be an array")));
            };
            if values.is_empty() {
                return Err(CliError::Data(format!("axis '{key}' has no values")));
            }
            axes.push((key, values));
        }
        Ok(SweepSpec { axes })
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Value index per axis for cell `i`, last axis fastest.
    pub fn cell(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (a, (_, values)) in self.axes.iter().enumerate().rev() {
            idx[a] = i % values.len();
            i /= values.len();
        }
        idx
    }

    /// `base` with cell `i`'s axis values applied.
    pub fn configure(&self, base: &PipelineConfig, i: usize) -> Result<PipelineConfig> {
        let mut table = Table::try_from(base).expect("config serializes");
        for ((key, values), &j) in self.axes.iter().zip(&self.cell(i)) {
            set_path(&mut table, key, values[j].clone());
        }
        let config: PipelineConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Data(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

/// Dotted leaf keys of the configuration, with every optional key present.
fn config_keys() -> BTreeSet<String> {
    fn walk(prefix: &str, table: &Table, out: &mut BTreeSet<String>) {
        for (k, v) in table {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                Value::Table(t) => walk(&key, t, out),
                _ => {
                    out.insert(key);
                }
            }
        }
    }
    let full = PipelineConfig::default().resolved(1.0);
    let mut out = BTreeSet::new();
    walk("", &Table::try_from(full).expect("config serializes"), &mut out);
    out
}

fn set_path(table: &mut Table, key: &str, value: Value) {
    match key.split_once('.') {
        None => {
            table.insert(key.to_string(), value);
        }
        Some((head, rest)) => {
            let entry = table
                .entry(head.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            if let Value::Table(t) = entry {
                set_path(t, rest, value);
            }
        }
    }
}

/// Axis value as it appears in the results table.
pub fn display_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Float(f) => format!("{f}"),
        other => other.to_string(),
    }
}

#[derive(Debug)]
pub struct CellOutcome {
    pub values: Vec<String>,
    pub result: Result<CellMetrics>,
}

#[derive(Debug, Clone)]
pub struct CellMetrics {
    pub ape: MetricsRow,
    pub steps: usize,
    pub degraded_steps: usize,
    pub dense_steps: usize,
}

#[derive(Debug)]
pub struct AblationReport {
    pub axes: Vec<String>,
    pub cells: Vec<CellOutcome>,
}

impl AblationReport {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.result.is_err()).count()
    }

    /// Exit code of the worst failing cell, or success.
    pub fn exit_code(&self) -> i32 {
        self.cells
            .iter()
            .filter_map(|c| c.result.as_ref().err().map(CliError::exit_code))
            .max()
            .unwrap_or(exit::OK)
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["cell".to_string()];
        header.extend(self.axes.iter().cloned());
        header.extend(
            [
                "status", "trans_rmse", "rot_rmse", "trans_mean", "rot_mean", "trans_max", "rot_max", "pairs",
                "steps", "degraded_steps", "dense_steps",
            ]
            .map(String::from),
        );
        writer.write_record(&header).expect("in-memory csv write");
        for (i, cell) in self.cells.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(cell.values.iter().cloned());
            match &cell.result {
                Ok(m) => {
                    let a = &m.ape;
                    row.push("ok".into());
                    row.extend(
                        [a.trans_rmse, a.rot_rmse, a.trans_mean, a.rot_mean, a.trans_max, a.rot_max]
                            .map(|v| v.to_string()),
                    );
                    row.extend([a.pairs, m.steps, m.degraded_steps, m.dense_steps].map(|v| v.to_string()));
                }
                Err(e) => {
                    row.push(format!("failed: {e}"));
                    row.extend(std::iter::repeat_n(String::new(), 10));
                }
            }
            writer.write_record(&row).expect("in-memory csv write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8 csv")
    }
}

fn run_cell(
    spec: &SweepSpec,
    base: &PipelineConfig,
    i: usize,
    frames: &[RadarFrame],
    gt: &Trajectory,
    align: AlignMode,
    out: &Path,
) -> Result<CellMetrics> {
    let config = spec.configure(base, i)?.resolved(frames[0].resolution());
    let run = odometry(frames, &config)?;
    write_outputs(&out.join(format!("cell_{i:03}")), &run, &config)?;
    let ape = compute_ape_with(&run.trajectory, gt, align, DEFAULT_MAX_DT)?;
    Ok(CellMetrics {
        ape: MetricsRow::from(&ape),
        steps: run.steps.len(),
        degraded_steps: run.steps.iter().filter(|s| s.diagnostics.degraded).count(),
        dense_steps: run.steps.iter().filter(|s| s.diagnostics.dense_used).count(),
    })
}

pub fn run(args: &AblateArgs) -> Result<AblationReport> {
    let spec = SweepSpec::parse(&error::read_to_string(&args.sweep)?).map_err(|e| e.in_file(&args.sweep))?;
    let base = load_config(args.config.as_deref(), None)?;
    let manifest = DatasetManifest::load(&args.dataset)?;
    let gt_path = args
        .gt
        .clone()
        .or_else(|| manifest.ground_truth_path())
        .ok_or_else(|| CliError::Usage("no ground truth: the manifest names none and --gt is absent".into()))?;
    let gt = read_trajectory(&gt_path).map_err(|e| CliError::from(e).in_file(&gt_path))?;
    let frames = manifest.load_frames()?;
    error::create_dir_all(&args.out)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", args.jobs)))?;
    let cells = pool.install(|| {
        (0..spec.cell_count())
            .into_par_iter()
            .map(|i| {
                let values = spec
                    .axes
                    .iter()
                    .zip(spec.cell(i))
                    .map(|((_, vals), j)| display_value(&vals[j]))
                    .collect();
                let result = run_cell(&spec, &base, i, &frames, &gt, args.align, &args.out);
                if let Err(e) = &result {
                    log::warn!("cell {i} failed: {e}");
                }
                CellOutcome { values, result }
            })
            .collect()
    });
    let report = AblationReport {
        axes: spec.axes.iter().map(|(k, _)| k.clone()).collect(),
        cells,
    };
    error::write(args.out.join(RESULTS_FILE), report.to_csv())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_enumeration_is_last_axis_fastest() {
        let spec = SweepSpec::parse("[axes]\noverlap_mode = [\"off\", \"timestamps\"]\nk = [10, 20, 50]\n").unwrap();
        assert_eq!(spec.cell_count(), 6);
        assert_eq!(spec.cell(0), vec![0, 0]);
        assert_eq!(spec.cell(1), vec![0, 1]);
        assert_eq!(spec.cell(3), vec![1, 0]);
        assert_eq!(spec.cell(5), vec![1, 2]);
    }

    #[test]
    fn cells_override_base_config() {
        let spec = SweepSpec::parse(
            "[axes]\ndense_gate = [1.2, inf]\n\"registration.max_iterations\" = [7]\n",
        )
        .unwrap();
        let base = PipelineConfig::default();
        let c = spec.configure(&base, 1).unwrap();
        assert!(c.dense_gate.is_infinite());
        assert_eq!(c.registration.max_iterations, 7);
        assert_eq!(c.k, base.k);
    }

    #[test]
    fn optional_keys_are_sweepable() {
        let spec = SweepSpec::parse("[axes]\n\"registration.max_correspondence_distance\" = [4.0]\n").unwrap();
        let c = spec.configure(&PipelineConfig::default(), 0).unwrap();
        assert_eq!(c.registration.max_correspondence_distance, Some(4.0));
    }

    #[test]
    fn rejects_unknown_keys_and_scalars() {
        assert!(SweepSpec::parse("[axes]\nkk = [1]\n").unwrap_err().to_string().contains("kk"));
        assert!(SweepSpec::parse("[axes]\nk = 1\n").is_err());
        assert!(SweepSpec::parse("[axes]\nk = []\n").is_err());
    }

    #[test]
    fn invalid_cell_value_fails_only_that_cell() {
        let spec = SweepSpec::parse("[axes]\nk = [0, 10]\n").unwrap();
        let base = PipelineConfig::default();
        assert!(spec.configure(&base, 0).is_err());
        assert_eq!(spec.configure(&base, 1).unwrap().k, 10);
    }

    #[test]
    fn display_strips_string_quotes() {
        assert_eq!(display_value(&Value::String("off".into())), "off");
        assert_eq!(display_value(&Value::Float(f64::INFINITY)), "inf");
        assert_eq!(display_value(&Value::Integer(20)), "20");
    }
}
