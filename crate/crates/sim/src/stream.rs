//! Multiplexed sensor streams with ground truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use lidarloc_core::evaluation::{Trajectory, TrajectorySample};
use lidarloc_core::io::SensorMessage;

use crate::sensor::{raycast, Label, SensorError, SensorModel, SensorPose};
use crate::trajectory::{TrajectoryError, TrajectorySpec};
use crate::world::World;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("auxiliary sensor rates and noise must be positive and non-negative")]
    InvalidSuite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSuite {
    pub lidar: SensorModel,
    pub imu_rate: f64,
    pub imu_sigma: f64,
    pub range_rate: f64,
    pub range_sigma: f64,
    pub baro_rate: f64,
    pub baro_sigma: f64,
    /// Emit roll/pitch records alongside every scan.
    pub attitude: bool,
    pub attitude_sigma: f64,
}

impl Default for SensorSuite {
    fn default() -> Self {
        Self {
            lidar: SensorModel::default(),
            imu_rate: 50.0,
            imu_sigma: 0.05,
            range_rate: 20.0,
            range_sigma: 0.01,
            baro_rate: 10.0,
            baro_sigma: 0.05,
            attitude: true,
            attitude_sigma: 0.0,
        }
    }
}

impl SensorSuite {
    pub fn noiseless() -> Self {
        Self {
            lidar: SensorModel::noiseless(),
            imu_sigma: 0.0,
            range_sigma: 0.0,
            baro_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.lidar.validate()?;
        let rates = [self.imu_rate, self.range_rate, self.baro_rate];
        let sigmas = [self.imu_sigma, self.range_sigma, self.baro_sigma, self.attitude_sigma];
        if rates.iter().any(|r| !(*r > 0.0)) || sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(SimError::InvalidSuite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRun {
    pub messages: Vec<SensorMessage>,
    /// True pose at every scan timestamp.
    pub truth: Trajectory,
    /// Per scan, one label per returned point.
    pub scan_labels: Vec<Vec<Label>>,
}

impl SimulatedRun {
    pub fn scan_count(&self) -> usize {
        self.scan_labels.len()
    }
}

/// Independent random substream per sensor, derived from the run seed.
pub fn substream(seed: u64, sensor: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sensor);
    rng
}

const STREAM_LIDAR: u64 = 1;
const STREAM_IMU: u64 = 2;
const STREAM_RANGE: u64 = 3;
const STREAM_BARO: u64 = 4;
const STREAM_ATTITUDE: u64 = 5;

/// Instants `start + k / rate` within `[start, end)`.
fn ticks(start: f64, end: f64, rate: f64) -> impl Iterator<Item = f64> {
    let n = ((end - start) * rate - 1e-9).ceil().max(0.0) as usize;
    (0..n).map(move |k| start + k as f64 / rate)
}

fn gauss(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
}

/// Generates every sensor's messages over the trajectory span and merges
/// them by time; equal timestamps order as attitude, IMU, rangefinder,
/// barometer, scan.
pub fn synthesize(spec: &TrajectorySpec, world: &World, suite: &SensorSuite, seed: u64) -> Result<SimulatedRun, SimError> {
    spec.validate()?;
    suite.validate()?;
    let (start, end) = (spec.start(), spec.end());
    let floor = world.floor.unwrap_or(0.0);
    let mut events: Vec<(f64, u8, SensorMessage)> = Vec::new();

    let mut rng = substream(seed, STREAM_IMU);
    let n = gauss(suite.imu_sigma);
    for t in ticks(start, end, suite.imu_rate) {
        let s = spec.sample(t)?;
        let e = n.map_or(0.0, |d| d.sample(&mut rng));
        events.push((t, 1, SensorMessage::Imu { timestamp: t, az: s.acceleration[2] + e }));
    }
    let mut rng = substream(seed, STREAM_RANGE);
    let n = gauss(suite.range_sigma);
    for t in ticks(start, end, suite.range_rate) {
        let s = spec.sample(t)?;
        let e = n.map_or(0.0, |d| d.sample(&mut rng));
        events.push((t, 2, SensorMessage::Range { timestamp: t, height: s.z - floor + e }));
    }
    let mut rng = substream(seed, STREAM_BARO);
    let n = gauss(suite.baro_sigma);
    for t in ticks(start, end, suite.baro_rate) {
        let s = spec.sample(t)?;
        let e = n.map_or(0.0, |d| d.sample(&mut rng));
        events.push((t, 3, SensorMessage::Baro { timestamp: t, vz: s.velocity[2] + e }));
    }

    let mut lidar_rng = substream(seed, STREAM_LIDAR);
    let mut att_rng = substream(seed, STREAM_ATTITUDE);
    let att_noise = gauss(suite.attitude_sigma);
    let mut truth = Trajectory::default();
    let mut scan_labels = Vec::new();
    for t in ticks(start, end, suite.lidar.rate) {
        let s = spec.sample(t)?;
        let pose = SensorPose { position: s.position, z: s.z, attitude: s.attitude };
        let out = raycast(world, &pose, &suite.lidar, &mut lidar_rng, t);
        if suite.attitude {
            let mut noise = || att_noise.map_or(0.0, |d| d.sample(&mut att_rng));
            let (roll, pitch) = (s.attitude.roll + noise(), s.attitude.pitch + noise());
            events.push((t, 0, SensorMessage::Attitude { timestamp: t, roll, pitch }));
        }
        events.push((t, 4, SensorMessage::Scan(out.scan)));
        truth.push(TrajectorySample::new(t, s.position.x, s.position.y, s.z, s.heading));
        scan_labels.push(out.labels);
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(SimulatedRun { messages: events.into_iter().map(|e| e.2).collect(), truth, scan_labels })
}
