//! End-to-end localization loop over a time-ordered sensor stream.
//!
//! Scan-rate lane: processing, sequential matching, fusion. Slow lane:
//! global matching and map insertion, started on rate ticks. A slow-lane job
//! started at scan `k` is collected when scan `k + 1` arrives (or at stream
//! end) and its measurement is replayed into the fusion history at scan `k`'s
//! timestamp. Collection points depend only on stream time, so the threaded
//! and serialized modes produce identical outputs.

use std::collections::BTreeMap;
use std::thread::JoinHandle;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{Trajectory, TrajectorySample};
use crate::fusion::{FusedState, FusionParams, Measurement, StateFusion};
use crate::geometry::{normalize_angle, Attitude, CartesianScan, Point2, Transform2D};
use crate::global::{localize, should_update_map, GlobalError, GlobalParams, PoseMeasurement};
use crate::io::SensorMessage;
use crate::mapping::{GlobalMap, MappingParams};
use crate::matching::MatchParams;
use crate::odometry::{step_with_prior, OdometryParams};
use crate::processing::{process, ProcessingContext};

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("stream is not time-ordered at message {index} (t={timestamp})")]
    OutOfOrder { index: usize, timestamp: f64 },
    #[error("global matching lane panicked")]
    LaneFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneMode {
    /// Global matching runs on a worker thread.
    #[default]
    TwoLane,
    /// Everything runs on the calling thread.
    SingleLane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Template; altitude, attitude and last pose are filled in per scan.
    pub processing: ProcessingContext,
    pub sequential: MatchParams,
    pub global_match: MatchParams,
    pub odometry: OdometryParams,
    pub global: GlobalParams,
    pub mapping: MappingParams,
    pub fusion: FusionParams,
    pub lanes: LaneMode,
    /// Initial (x, y) and heading of the body frame.
    pub origin: (f64, f64, f64),
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            processing: ProcessingContext::default(),
            sequential: MatchParams::default(),
            global_match: MatchParams::default(),
            odometry: OdometryParams::default(),
            global: GlobalParams::default(),
            mapping: MappingParams::default(),
            fusion: FusionParams::default(),
            lanes: LaneMode::default(),
            origin: (0.0, 0.0, 0.0),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |e: String| Err(PipelineError::InvalidConfig(e));
        if let Err(e) = self.processing.validate() {
            return bad(e.to_string());
        }
        if let Err(e) = self.sequential.validate() {
            return bad(format!("sequential: {e}"));
        }
        if let Err(e) = self.global_match.validate() {
            return bad(format!("global_match: {e}"));
        }
        if let Err(e) = self.global.validate() {
            return bad(format!("global: {e}"));
        }
        if let Err(e) = self.fusion.validate() {
            return bad(format!("fusion: {e}"));
        }
        if !(self.mapping.resolution > 0.0) {
            return bad("mapping: resolution must be positive".into());
        }
        let (x, y, h) = self.origin;
        if ![x, y, h].iter().all(|v| v.is_finite()) {
            return bad("origin must be finite".into());
        }
        Ok(())
    }

    pub fn origin_pose(&self) -> Transform2D {
        Transform2D::from_pose(Point2::new(self.origin.0, self.origin.1), self.origin.2)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub messages: usize,
    pub scans: usize,
    /// Scans whose information entered the estimate (bootstrap or velocity).
    pub scans_fused: usize,
    pub scans_skipped: usize,
    pub skip_reasons: BTreeMap<String, usize>,
    pub sequential_terminations: BTreeMap<String, usize>,
    pub global_attempts: usize,
    pub global_accepted: usize,
    pub global_rejections: BTreeMap<String, usize>,
    pub global_terminations: BTreeMap<String, usize>,
    pub map_updates: usize,
    pub map_points: usize,
    pub fusion_dropped: usize,
    /// Per-scan wall time of processing plus sequential matching.
    pub scan_ms_max: f64,
    pub scan_ms_mean: f64,
    pub scans_over_budget: usize,
}

impl RunSummary {
    fn skip(&mut self, reason: &str) {
        self.scans_skipped += 1;
        *self.skip_reasons.entry(reason.to_string()).or_default() += 1;
    }

    /// `key = value` lines.
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("messages", self.messages.to_string());
        line("scans", self.scans.to_string());
        line("scans_fused", self.scans_fused.to_string());
        line("scans_skipped", self.scans_skipped.to_string());
        for (k, v) in &self.skip_reasons {
            line(&format!("skipped.{k}"), v.to_string());
        }
        for (k, v) in &self.sequential_terminations {
            line(&format!("sequential.termination.{k}"), v.to_string());
        }
        line("global_attempts", self.global_attempts.to_string());
        line("global_accepted", self.global_accepted.to_string());
        for (k, v) in &self.global_rejections {
            line(&format!("global.rejected.{k}"), v.to_string());
        }
        for (k, v) in &self.global_terminations {
            line(&format!("global.termination.{k}"), v.to_string());
        }
        line("map_updates", self.map_updates.to_string());
        line("map_points", self.map_points.to_string());
        line("fusion_dropped", self.fusion_dropped.to_string());
        line("scan_ms_max", format!("{:.3}", self.scan_ms_max));
        line("scan_ms_mean", format!("{:.3}", self.scan_ms_mean));
        line("scans_over_budget", self.scans_over_budget.to_string());
        out
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Fused state after every consumed message.
    pub states: Vec<FusedState>,
    /// Fused pose at each scan timestamp.
    pub fused: Trajectory,
    /// Dead reckoning from sequential matches alone.
    pub sequential: Trajectory,
    /// Every completed global match, including those rejected by the quality
    /// gate; only accepted ones reach the filter.
    pub global: Trajectory,
    pub map: GlobalMap,
    pub summary: RunSummary,
}

struct SlowJob {
    scan: CartesianScan,
    prior: Transform2D,
    flight_height: f64,
    map: GlobalMap,
    global: GlobalParams,
    match_params: MatchParams,
}

struct SlowResult {
    map: GlobalMap,
    outcome: Result<PoseMeasurement, GlobalError>,
    inserted: Option<usize>,
}

impl SlowJob {
    fn run(mut self) -> SlowResult {
        let outcome = localize(
            &self.scan,
            self.map.stored_points(),
            self.prior,
            self.flight_height,
            &self.global,
            &self.match_params,
        )
        .map(|(m, _)| m);
        let mut inserted = None;
        if let Ok(m) = &outcome {
            let last = self.map.last_update_position().unwrap_or(m.position);
            if self.map.last_update_position().is_none() || should_update_map(m.position, last, self.global.update_distance)
            {
                inserted = Some(self.map.insert_scan(&self.scan.points, &m.transform()));
                self.map.set_last_update_position(m.position);
            }
        }
        SlowResult { map: self.map, outcome, inserted }
    }
}

enum Slow {
    Idle(GlobalMap),
    Running(JoinHandle<SlowResult>),
    Done(SlowResult),
    Taken,
}

/// Previous accepted scan and the fused pose at its timestamp.
struct Anchor {
    scan: CartesianScan,
    fused: Transform2D,
    seq_pose: Transform2D,
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    fusion: StateFusion,
    attitude: Attitude,
    slow: Slow,
    anchor: Option<Anchor>,
    next_tick: Option<f64>,
    out_states: Vec<FusedState>,
    fused: Trajectory,
    sequential: Trajectory,
    global: Trajectory,
    summary: RunSummary,
    scan_ms_total: f64,
}

fn bump(map: &mut BTreeMap<String, usize>, key: &str) {
    *map.entry(key.to_string()).or_default() += 1;
}

fn global_reason(e: &GlobalError) -> &'static str {
    match e {
        GlobalError::EmptyScan => "empty_scan",
        GlobalError::MapTooSparse { .. } => "map_too_sparse",
        GlobalError::MatchFailed(_) => "match_failed",
        GlobalError::QualityGate { .. } => "quality_gate",
    }
}

impl<'a> Runner<'a> {
    fn fused_pose(&self, t: f64) -> (Transform2D, f64) {
        let s = self.fusion.predicted(t);
        (Transform2D::from_pose(s.planar(), s.heading), s.position[2])
    }

    fn feed(&mut self, m: Measurement) {
        if let Err(e) = self.fusion.apply(m) {
            log::warn!("fusion rejected measurement: {e}");
        }
    }

    fn sample(t: f64, pose: &Transform2D, z: f64) -> TrajectorySample {
        let p = pose.translation();
        TrajectorySample::new(t, p.x, p.y, z, normalize_angle(pose.rotation()))
    }

    /// Folds a finished slow-lane job back in.
    fn collect(&mut self) -> Result<(), PipelineError> {
        let result = match std::mem::replace(&mut self.slow, Slow::Taken) {
            Slow::Running(h) => h.join().map_err(|_| PipelineError::LaneFailure)?,
            Slow::Done(r) => r,
            other => {
                self.slow = other;
                return Ok(());
            }
        };
        match &result.outcome {
            Ok(m) => {
                self.summary.global_accepted += 1;
                bump(&mut self.summary.global_terminations, m.termination.as_str());
                self.feed(Measurement::Position { timestamp: m.timestamp, position: m.position });
                self.feed(Measurement::Heading { timestamp: m.timestamp, heading: m.heading });
                let z = self.fusion.state().position[2];
                self.global.push(Self::sample(m.timestamp, &m.transform(), z));
            }
            Err(e) => {
                if let GlobalError::QualityGate { measurement: m, .. } = e {
                    let z = self.fusion.state().position[2];
                    self.global.push(Self::sample(m.timestamp, &m.transform(), z));
                }
                log::debug!("global match rejected: {e}");
                bump(&mut self.summary.global_rejections, global_reason(e));
            }
        }
        if result.inserted.is_some() {
            self.summary.map_updates += 1;
        }
        self.slow = Slow::Idle(result.map);
        Ok(())
    }

    fn start_global(&mut self, scan: CartesianScan) {
        let Slow::Idle(map) = std::mem::replace(&mut self.slow, Slow::Taken) else {
            unreachable!("slow lane collected before each scan");
        };
        let (prior, z) = self.fused_pose(scan.timestamp);
        let job = SlowJob {
            scan,
            prior,
            flight_height: z,
            map,
            global: self.cfg.global,
            match_params: self.cfg.global_match.clone(),
        };
        self.summary.global_attempts += 1;
        self.slow = match self.cfg.lanes {
            LaneMode::SingleLane => Slow::Done(job.run()),
            LaneMode::TwoLane => Slow::Running(std::thread::spawn(move || job.run())),
        };
    }

    fn on_scan(&mut self, raw: &crate::geometry::PolarScan) -> Result<(), PipelineError> {
        self.collect()?;
        self.summary.scans += 1;
        let t = raw.timestamp;
        let started = Instant::now();
        let (pred, z) = self.fused_pose(t);
        let mut ctx = self.cfg.processing.clone();
        ctx.altitude = z;
        ctx.attitude = self.attitude;
        ctx.last_position = pred.translation();
        ctx.last_heading = pred.rotation();
        let scan = match process(raw, &ctx) {
            Ok(s) => s,
            Err(e) => {
                log::debug!("scan at {t} skipped: {e}");
                self.summary.skip("processing");
                self.finish_scan(started, t);
                return Ok(());
            }
        };

        let Some(anchor) = self.anchor.take() else {
            // bootstrap: map the first scan at the origin
            let origin = self.cfg.origin_pose();
            if let Slow::Idle(map) = &mut self.slow {
                if map.stored_points().is_empty() {
                    map.insert_scan(&scan.points, &origin);
                    map.set_last_update_position(origin.translation());
                    self.summary.map_updates += 1;
                }
            }
            self.sequential.push(Self::sample(t, &origin, z));
            self.summary.scans_fused += 1;
            self.next_tick = Some(self.tick_after(t));
            self.anchor = Some(Anchor { scan, fused: pred, seq_pose: origin });
            self.finish_scan(started, t);
            return Ok(());
        };

        // predicted motion of this scan in the previous scan's frame
        let prior = anchor.fused.inverse().compose(&pred);
        let seq = step_with_prior(&anchor.scan, &scan, &self.cfg.sequential, &self.cfg.odometry, prior);
        let mut seq_pose = anchor.seq_pose;
        match seq {
            Ok((v, _)) => {
                bump(&mut self.summary.sequential_terminations, v.termination.as_str());
                let world_v = anchor.fused.rotate_vector(v.linear);
                self.feed(Measurement::Velocity { timestamp: t, velocity: world_v });
                self.feed(Measurement::HeadingRate { timestamp: t, rate: v.angular });
                seq_pose = anchor.seq_pose.compose(&v.transform);
                self.sequential.push(Self::sample(t, &seq_pose, self.fusion.state().position[2]));
                self.summary.scans_fused += 1;
            }
            Err(e) => {
                log::debug!("sequential match at {t} failed: {e}");
                self.summary.skip("sequential");
            }
        }
        let (fused_now, _) = self.fused_pose(t);
        let tick = self.next_tick.is_some_and(|k| t >= k);
        if tick {
            self.next_tick = Some(self.tick_after(t));
            self.start_global(scan.clone());
        }
        self.anchor = Some(Anchor { scan, fused: fused_now, seq_pose });
        self.finish_scan(started, t);
        Ok(())
    }

    /// First tick boundary strictly after `t`.
    fn tick_after(&self, t: f64) -> f64 {
        let period = 1.0 / self.cfg.global.rate;
        ((t / period).floor() + 1.0) * period
    }

    fn finish_scan(&mut self, started: Instant, t: f64) {
        let ms = started.elapsed().as_secs_f64() * 1e3;
        self.scan_ms_total += ms;
        self.summary.scan_ms_max = self.summary.scan_ms_max.max(ms);
        if ms > self.cfg.sequential.time_budget_ms {
            self.summary.scans_over_budget += 1;
            log::warn!("scan at {t} took {ms:.1} ms, above the {} ms budget", self.cfg.sequential.time_budget_ms);
        }
        let (pose, z) = self.fused_pose(t);
        self.fused.push(Self::sample(t, &pose, z));
    }
}

/// Runs the full localization loop. `initial_map` replaces bootstrap mapping.
pub fn run(
    stream: &[SensorMessage],
    config: &PipelineConfig,
    initial_map: Option<GlobalMap>,
) -> Result<PipelineOutput, PipelineError> {
    config.validate()?;
    for (index, pair) in stream.windows(2).enumerate() {
        if pair[1].timestamp() < pair[0].timestamp() {
            return Err(PipelineError::OutOfOrder { index: index + 1, timestamp: pair[1].timestamp() });
        }
    }
    let mut fusion = StateFusion::new(config.fusion);
    if let Some(first) = stream.first() {
        let o = config.origin;
        fusion.initialize(first.timestamp(), Point2::new(o.0, o.1), o.2, 0.0);
    }
    let mut r = Runner {
        cfg: config,
        fusion,
        attitude: Attitude::level(),
        slow: Slow::Idle(initial_map.unwrap_or_else(|| GlobalMap::new(config.mapping))),
        anchor: None,
        next_tick: None,
        out_states: Vec::new(),
        fused: Trajectory::default(),
        sequential: Trajectory::default(),
        global: Trajectory::default(),
        summary: RunSummary::default(),
        scan_ms_total: 0.0,
    };
    for msg in stream {
        r.summary.messages += 1;
        match msg {
            SensorMessage::Scan(s) => r.on_scan(s)?,
            SensorMessage::Imu { timestamp, az } => r.feed(Measurement::ImuAccel { timestamp: *timestamp, accel: *az }),
            SensorMessage::Range { timestamp, height } => {
                r.feed(Measurement::Rangefinder { timestamp: *timestamp, height: *height })
            }
            SensorMessage::Baro { timestamp, vz } => r.feed(Measurement::BaroRate { timestamp: *timestamp, rate: *vz }),
            SensorMessage::Attitude { roll, pitch, .. } => r.attitude = Attitude::new(*roll, *pitch, 0.0),
        }
        r.out_states.push(r.fusion.state());
    }
    r.collect()?;
    if r.summary.scans > 0 {
        r.summary.scan_ms_mean = r.scan_ms_total / r.summary.scans as f64;
    }
    r.summary.fusion_dropped = r.fusion.dropped();
    let map = match r.slow {
        Slow::Idle(m) => m,
        _ => unreachable!("slow lane collected at stream end"),
    };
    r.summary.map_points = map.stored_points().len();
    debug_assert_eq!(r.summary.scans, r.summary.scans_fused + r.summary.scans_skipped);
    Ok(PipelineOutput {
        states: r.out_states,
        fused: r.fused,
        sequential: r.sequential,
        global: r.global,
        map,
        summary: r.summary,
    })
}
