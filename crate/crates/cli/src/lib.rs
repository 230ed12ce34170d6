//! Batch entry points: simulate a flight, localize a scan log, evaluate an
//! estimate against ground truth, and run the matcher ablation.

pub mod ablation;
pub mod config;
pub mod manifest;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use lidarloc_core::evaluation::{ate, heading_rmse, loop_drift, mme, MmeReport, Trajectory};
use lidarloc_core::geometry::{Point2, Point3};
use lidarloc_core::io::{read_scan_log, read_trajectory_csv, write_scan_log, write_trajectory_csv};
use lidarloc_core::mapping::{read_ascii, read_binary, write_ascii, write_binary, GlobalMap};
use lidarloc_core::pipeline::{run, PipelineOutput, RunSummary};
use lidarloc_sim::{synthesize, TiltModel, TrajectorySpec, World, PRESETS};

pub use ablation::{cmd_ablate, AblationRow, Variant};
pub use config::Settings;
pub use manifest::RunManifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read {path}: {message}")]
    MissingInput { path: PathBuf, message: String },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn missing(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::MissingInput { path: path.to_path_buf(), message: e.to_string() }
    }

    fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Runtime(format!("cannot write {}: {e}", path.display()))
    }

    /// 1 for runtime failures, 2 for usage and configuration errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Runtime(_) => 1,
            Self::Usage(_) | Self::Config(_) | Self::MissingInput { .. } => 2,
        }
    }
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::missing(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::write(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::write(path, e))
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// A preset name or a TOML world file.
pub fn load_world(spec: &str) -> Result<World, CliError> {
    if PRESETS.contains(&spec) {
        return World::preset(spec).map_err(|e| CliError::Usage(e.to_string()));
    }
    let world: World = read_toml(Path::new(spec))?;
    world.validate().map_err(|e| CliError::Config(format!("{spec}: {e}")))?;
    Ok(world)
}

/// `loop`, `hover`, or a TOML trajectory file. Built-ins take their shape
/// and tilt from the `simulation` section.
pub fn load_trajectory(spec: &str, settings: &Settings) -> Result<TrajectorySpec, CliError> {
    let s = &settings.simulation;
    let center = Point2::new(s.center[0], s.center[1]);
    let mut t = match spec {
        "loop" => TrajectorySpec::rectangle_loop(center, Point2::new(s.half_extent[0], s.half_extent[1]), s.height, s.duration),
        "hover" => TrajectorySpec::hover(center, s.height, 0.0, s.duration),
        path => return read_toml::<TrajectorySpec>(Path::new(path)),
    };
    t.tilt = TiltModel { roll_amplitude: s.roll_amplitude, pitch_amplitude: s.pitch_amplitude, period: s.tilt_period };
    Ok(t)
}

fn display(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

/// Writes `<out>/scan.log` and `<out>/truth.csv`.
pub fn cmd_simulate(common: &Common, settings: &Settings, world: &str, trajectory: &str) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let w = load_world(world)?;
    let spec = load_trajectory(trajectory, settings)?;
    let seed = common.seed.unwrap_or(settings.lidar.seed);
    let sim = synthesize(&spec, &w, &settings.sensor_suite(), seed).map_err(|e| CliError::Config(e.to_string()))?;

    let log = common.out.join("scan.log");
    let truth = common.out.join("truth.csv");
    write_with(&log, |f| write_scan_log(f, &sim.messages))?;
    write_with(&truth, |f| write_trajectory_csv(f, &sim.truth))?;

    let mut inputs = vec![world.to_string(), trajectory.to_string()];
    inputs.extend(common.config.iter().map(|p| p.display().to_string()));
    let mut m = RunManifest::new("simulate", settings, Some(seed));
    m.inputs = inputs;
    m.outputs = display(&[log, truth]);
    m.counts.insert("scans".into(), sim.scan_count() as u64);
    m.counts.insert("messages".into(), sim.messages.len() as u64);
    m.timing.insert("total_ms".into(), started.elapsed().as_secs_f64() * 1e3);
    m.write_atomic(&common.out.join("manifest.json"))?;
    Ok(m)
}

pub fn read_map_points(path: &Path) -> Result<Vec<Point3>, CliError> {
    let binary = path.extension().is_some_and(|e| e == "bin");
    let r = open(path)?;
    let points = if binary { read_binary(r) } else { read_ascii(r) };
    points.map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, CliError> {
    read_trajectory_csv(open(path)?).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Runs the pipeline over a scan log and returns its output without writing.
pub fn localize_stream(log: &Path, settings: &Settings, map: Option<&Path>) -> Result<PipelineOutput, CliError> {
    let messages = read_scan_log(open(log)?).map_err(|e| CliError::Runtime(format!("{}: {e}", log.display())))?;
    let cfg = settings.pipeline_config();
    let initial = match map {
        Some(p) => Some(GlobalMap::from_points(cfg.mapping, &read_map_points(p)?)),
        None => None,
    };
    run(&messages, &cfg, initial).map_err(|e| CliError::Runtime(format!("{}: {e}", log.display())))
}

/// Artifact paths written by `localize` into `dir`.
pub struct LocalizeOutputs {
    pub fused: PathBuf,
    pub sequential: PathBuf,
    pub global: PathBuf,
    pub map: PathBuf,
    pub map_dense: PathBuf,
    pub map_binary: PathBuf,
    pub summary: PathBuf,
}

impl LocalizeOutputs {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            fused: dir.join("fused.csv"),
            sequential: dir.join("sequential.csv"),
            global: dir.join("global.csv"),
            map: dir.join("map.xyz"),
            map_dense: dir.join("map_dense.xyz"),
            map_binary: dir.join("map.bin"),
            summary: dir.join("summary.txt"),
        }
    }

    fn all(&self) -> Vec<PathBuf> {
        [&self.fused, &self.sequential, &self.global, &self.map, &self.map_dense, &self.map_binary, &self.summary]
            .into_iter()
            .cloned()
            .collect()
    }
}

pub fn write_localize_outputs(out: &PipelineOutput, dir: &Path) -> Result<LocalizeOutputs, CliError> {
    let o = LocalizeOutputs::in_dir(dir);
    write_with(&o.fused, |f| write_trajectory_csv(f, &out.fused))?;
    write_with(&o.sequential, |f| write_trajectory_csv(f, &out.sequential))?;
    write_with(&o.global, |f| write_trajectory_csv(f, &out.global))?;
    write_with(&o.map, |f| write_ascii(f, out.map.stored_points()))?;
    write_with(&o.map_dense, |f| write_ascii(f, out.map.export_dense()))?;
    write_with(&o.map_binary, |f| write_binary(f, out.map.stored_points()))?;
    write_with(&o.summary, |f| f.write_all(out.summary.to_report().as_bytes()))?;
    Ok(o)
}

fn summary_counts(m: &mut RunManifest, s: &RunSummary) {
    m.counts.insert("scans".into(), s.scans as u64);
    m.counts.insert("scans_fused".into(), s.scans_fused as u64);
    m.counts.insert("scans_skipped".into(), s.scans_skipped as u64);
    m.counts.insert("global_accepted".into(), s.global_accepted as u64);
}

/// Fused, sequential and global trajectory CSVs, map exports and a run summary in `<out>/`.
pub fn cmd_localize(common: &Common, settings: &Settings, log: &Path, map: Option<&Path>) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let out = localize_stream(log, settings, map)?;
    let files = write_localize_outputs(&out, &common.out)?;

    let mut m = RunManifest::new("localize", settings, common.seed);
    m.inputs = display(&[log.to_path_buf()]);
    m.inputs.extend(map.iter().map(|p| p.display().to_string()));
    m.inputs.extend(common.config.iter().map(|p| p.display().to_string()));
    m.outputs = display(&files.all());
    summary_counts(&mut m, &out.summary);
    m.timing.insert("total_ms".into(), started.elapsed().as_secs_f64() * 1e3);
    m.timing.insert("scan_ms_mean".into(), out.summary.scan_ms_mean);
    m.timing.insert("scan_ms_max".into(), out.summary.scan_ms_max);
    m.write_atomic(&common.out.join("manifest.json"))?;
    Ok(m)
}

/// Trajectory and map metrics; `None` where a metric is undefined for the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub samples: usize,
    pub ate: Option<f64>,
    pub heading_rmse: Option<f64>,
    pub loop_drift: Option<f64>,
    pub truth_loop_drift: Option<f64>,
    pub mme: Option<MmeReport>,
}

pub fn compute_metrics(estimate: &Trajectory, truth: &Trajectory, map: Option<&[Point3]>, mme_radius: f64) -> Metrics {
    Metrics {
        samples: estimate.len(),
        ate: ate(estimate, truth).ok(),
        heading_rmse: heading_rmse(estimate, truth).ok(),
        loop_drift: loop_drift(estimate),
        truth_loop_drift: loop_drift(truth),
        mme: map.and_then(|m| mme(m, mme_radius).ok()),
    }
}

pub fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"))
}

impl Metrics {
    /// `key = value` lines.
    pub fn to_report(&self) -> String {
        let mut lines = vec![
            format!("samples = {}", self.samples),
            format!("ate = {}", fmt_metric(self.ate)),
            format!("heading_rmse = {}", fmt_metric(self.heading_rmse)),
            format!("loop_drift = {}", fmt_metric(self.loop_drift)),
            format!("truth_loop_drift = {}", fmt_metric(self.truth_loop_drift)),
        ];
        if let Some(m) = &self.mme {
            lines.push(format!("mme = {:.6}", m.entropy));
            lines.push(format!("mme_contributing = {}", m.contributing));
            lines.push(format!("mme_skipped = {}", m.skipped));
        } else {
            lines.push("mme = nan".to_string());
        }
        lines.join("\n") + "\n"
    }
}

/// Writes the metrics report to `common.out`.
pub fn cmd_evaluate(
    common: &Common,
    settings: &Settings,
    estimate: &Path,
    truth: &Path,
    map: Option<&Path>,
) -> Result<(RunManifest, Metrics), CliError> {
    let started = Instant::now();
    let est = read_trajectory(estimate)?;
    let tru = read_trajectory(truth)?;
    let points = map.map(read_map_points).transpose()?;
    let metrics = compute_metrics(&est, &tru, points.as_deref(), settings.evaluation.mme_radius);
    write_with(&common.out, |f| f.write_all(metrics.to_report().as_bytes()))?;

    let mut m = RunManifest::new("evaluate", settings, common.seed);
    m.inputs = display(&[estimate.to_path_buf(), truth.to_path_buf()]);
    m.inputs.extend(map.iter().map(|p| p.display().to_string()));
    m.outputs = display(&[common.out.clone()]);
    m.timing.insert("total_ms".into(), started.elapsed().as_secs_f64() * 1e3);
    m.write_atomic(&manifest_beside(&common.out))?;
    Ok((m, metrics))
}

/// `report.txt` -> `report.txt.manifest.json`.
pub fn manifest_beside(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    file.with_file_name(name)
}
