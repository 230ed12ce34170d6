//! Run settings: one TOML file with a flat `section.key` namespace, any key
//! overridable through `LIDARLOC_<SECTION>__<KEY>` environment variables.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use lidarloc_core::fusion::FusionParams;
use lidarloc_core::global::GlobalParams;
use lidarloc_core::mapping::MappingParams;
use lidarloc_core::matching::MatchParams;
use lidarloc_core::odometry::OdometryParams;
use lidarloc_core::pipeline::{LaneMode, PipelineConfig};
use lidarloc_core::processing::ProcessingContext;
use lidarloc_sim::{SensorModel, SensorSuite};

use crate::CliError;

pub const ENV_PREFIX: &str = "LIDARLOC_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub lanes: LaneMode,
    /// Initial body pose `[x, y, heading]`.
    pub origin: [f64; 3],
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self { lanes: LaneMode::TwoLane, origin: [0.0; 3] }
    }
}

/// Auxiliary sensors of the simulated vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorsSection {
    pub imu_rate: f64,
    pub imu_sigma: f64,
    pub range_rate: f64,
    pub range_sigma: f64,
    pub baro_rate: f64,
    pub baro_sigma: f64,
    pub attitude: bool,
    pub attitude_sigma: f64,
}

impl Default for SensorsSection {
    fn default() -> Self {
        let s = SensorSuite::default();
        Self {
            imu_rate: s.imu_rate,
            imu_sigma: s.imu_sigma,
            range_rate: s.range_rate,
            range_sigma: s.range_sigma,
            baro_rate: s.baro_rate,
            baro_sigma: s.baro_sigma,
            attitude: s.attitude,
            attitude_sigma: s.attitude_sigma,
        }
    }
}

/// Parameters of the built-in trajectories (`loop`, `hover`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub duration: f64,
    pub center: [f64; 2],
    /// Half extents of the rectangular loop.
    pub half_extent: [f64; 2],
    pub height: f64,
    pub roll_amplitude: f64,
    pub pitch_amplitude: f64,
    pub tilt_period: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            duration: 60.0,
            center: [0.0, 0.0],
            half_extent: [4.5, 1.2],
            height: 1.5,
            roll_amplitude: 0.03,
            pitch_amplitude: 0.02,
            tilt_period: 7.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub mme_radius: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { mme_radius: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub processing: ProcessingContext,
    pub sequential: MatchParams,
    pub global_match: MatchParams,
    pub odometry: OdometryParams,
    pub global: GlobalParams,
    pub mapping: MappingParams,
    pub fusion: FusionParams,
    pub pipeline: PipelineSection,
    /// Also carries the default run seed (`lidar.seed`).
    pub lidar: SensorModel,
    pub sensors: SensorsSection,
    pub simulation: SimulationSection,
    pub evaluation: EvaluationSection,
}

impl Settings {
    /// Reads `path` (or starts from defaults) and applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        Self::load_with(path, std::env::vars())
    }

    pub fn load_with(path: Option<&Path>, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::missing(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        apply_overrides(&mut table, vars)?;
        let settings: Settings =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        settings.validate()?;
        Ok(settings)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.pipeline_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.sensor_suite().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.evaluation.mme_radius > 0.0) {
            return Err(CliError::Config("evaluation.mme_radius must be positive".into()));
        }
        let s = &self.simulation;
        if !(s.duration > 0.0 && s.height.is_finite() && s.tilt_period >= 0.0) {
            return Err(CliError::Config("simulation: duration must be positive and tilt_period non-negative".into()));
        }
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let [x, y, h] = self.pipeline.origin;
        PipelineConfig {
            processing: self.processing.clone(),
            sequential: self.sequential.clone(),
            global_match: self.global_match.clone(),
            odometry: self.odometry,
            global: self.global,
            mapping: self.mapping,
            fusion: self.fusion,
            lanes: self.pipeline.lanes,
            origin: (x, y, h),
        }
    }

    pub fn sensor_suite(&self) -> SensorSuite {
        let s = &self.sensors;
        SensorSuite {
            lidar: self.lidar,
            imu_rate: s.imu_rate,
            imu_sigma: s.imu_sigma,
            range_rate: s.range_rate,
            range_sigma: s.range_sigma,
            baro_rate: s.baro_rate,
            baro_sigma: s.baro_sigma,
            attitude: s.attitude,
            attitude_sigma: s.attitude_sigma,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings always serialize")
    }

    /// SHA-256 of the canonical TOML rendering; equal settings give equal digests.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }
}

/// Applies `LIDARLOC_<SECTION>__<KEY>=value` overrides. Values parse as TOML
/// literals (numbers, booleans, arrays, quoted strings); anything else is
/// taken as a bare string.
pub fn apply_overrides(table: &mut toml::Table, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), CliError> {
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    // deterministic application order
    vars.sort();
    for (name, raw) in vars {
        let path: Vec<String> = name[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
        if path.len() != 2 || path.iter().any(|p| p.is_empty()) {
            return Err(CliError::Config(format!("{name}: expected {ENV_PREFIX}<SECTION>__<KEY>")));
        }
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.clone()));
        let section = table
            .entry(path[0].clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match section {
            toml::Value::Table(t) => {
                t.insert(path[1].clone(), value);
            }
            _ => return Err(CliError::Config(format!("{name}: '{}' is not a section", path[0]))),
        }
    }
    Ok(())
}
