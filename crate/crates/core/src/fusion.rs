//! Decoupled linear Kalman filters: constant-acceleration x and y axes, a
//! heading/rate pair and an IMU-driven altitude channel, with replay of
//! delayed measurements from a short history.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angle_diff, normalize_angle, Point2};

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("prediction interval must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("measurement is not finite")]
    NonFinite,
    #[error("measurement at {timestamp} is older than the history window (filter time {now})")]
    TooOld { timestamp: f64, now: f64 },
}

/// Linear Kalman filter with `N` states and scalar measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kalman<const N: usize> {
    pub x: SVector<f64, N>,
    pub p: SMatrix<f64, N, N>,
}

impl<const N: usize> Kalman<N> {
    pub fn new(initial_variance: f64) -> Self {
        Self {
            x: SVector::zeros(),
            p: SMatrix::identity() * initial_variance,
        }
    }

    pub fn predict(&mut self, a: &SMatrix<f64, N, N>, bu: &SVector<f64, N>, q: &SMatrix<f64, N, N>) {
        self.x = a * self.x + bu;
        self.p = a * self.p * a.transpose() + q;
        self.symmetrize();
    }

    /// Scalar update `z = h x + e`, `e ~ N(0, r)`, with a supplied innovation
    /// so wrapped quantities can be corrected. Joseph form keeps `p` PSD.
    pub fn correct_with_innovation(&mut self, h: &SVector<f64, N>, innovation: f64, r: f64) {
        let ph = self.p * h;
        let s = h.dot(&ph) + r;
        if !(s > 0.0) || !s.is_finite() {
            return;
        }
        let k = ph / s;
        self.x += k * innovation;
        let i_kh = SMatrix::<f64, N, N>::identity() - k * h.transpose();
        self.p = i_kh * self.p * i_kh.transpose() + k * k.transpose() * r;
        self.symmetrize();
    }

    pub fn correct(&mut self, h: &SVector<f64, N>, z: f64, r: f64) {
        let innovation = z - h.dot(&self.x);
        self.correct_with_innovation(h, innovation, r);
    }

    fn symmetrize(&mut self) {
        self.p = (self.p + self.p.transpose()) * 0.5;
    }
}

/// Constant-acceleration transition over `dt`.
pub fn ca_transition(dt: f64) -> SMatrix<f64, 3, 3> {
    SMatrix::<f64, 3, 3>::new(1.0, dt, 0.5 * dt * dt, 0.0, 1.0, dt, 0.0, 0.0, 1.0)
}

/// Discretized white-jerk process noise with power spectral density `psd`.
pub fn white_jerk_q(dt: f64, psd: f64) -> SMatrix<f64, 3, 3> {
    let (d2, d3, d4, d5) = (dt * dt, dt.powi(3), dt.powi(4), dt.powi(5));
    SMatrix::<f64, 3, 3>::new(
        d5 / 20.0,
        d4 / 8.0,
        d3 / 6.0,
        d4 / 8.0,
        d3 / 3.0,
        d2 / 2.0,
        d3 / 6.0,
        d2 / 2.0,
        dt,
    ) * psd
}

/// Discretized white-acceleration noise for a (value, rate) pair.
pub fn white_accel_q(dt: f64, psd: f64) -> SMatrix<f64, 2, 2> {
    SMatrix::<f64, 2, 2>::new(dt.powi(3) / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt) * psd
}

fn check_dt(dt: f64) -> Result<(), FusionError> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(FusionError::NonPositiveDt(dt))
    }
}

fn check_finite(v: f64) -> Result<(), FusionError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(FusionError::NonFinite)
    }
}

/// One horizontal axis with state (position, velocity, acceleration).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisFilter {
    pub kf: Kalman<3>,
    pub jerk_psd: f64,
}

impl AxisFilter {
    const H_POS: [f64; 3] = [1.0, 0.0, 0.0];
    const H_VEL: [f64; 3] = [0.0, 1.0, 0.0];

    pub fn new(initial_variance: f64, jerk_psd: f64) -> Self {
        Self { kf: Kalman::new(initial_variance), jerk_psd }
    }

    pub fn predict(&mut self, dt: f64) -> Result<(), FusionError> {
        check_dt(dt)?;
        self.kf.predict(&ca_transition(dt), &SVector::zeros(), &white_jerk_q(dt, self.jerk_psd));
        Ok(())
    }

    pub fn correct_velocity(&mut self, v: f64, r: f64) -> Result<(), FusionError> {
        check_finite(v)?;
        self.kf.correct(&SVector::from(Self::H_VEL), v, r);
        Ok(())
    }

    pub fn correct_position(&mut self, x: f64, r: f64) -> Result<(), FusionError> {
        check_finite(x)?;
        self.kf.correct(&SVector::from(Self::H_POS), x, r);
        Ok(())
    }

    pub fn position(&self) -> f64 {
        self.kf.x[0]
    }

    pub fn velocity(&self) -> f64 {
        self.kf.x[1]
    }
}

/// Heading with state (heading, rate); heading is kept normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingFilter {
    pub kf: Kalman<2>,
    pub accel_psd: f64,
}

impl HeadingFilter {
    pub fn new(initial_variance: f64, accel_psd: f64) -> Self {
        Self { kf: Kalman::new(initial_variance), accel_psd }
    }

    pub fn predict(&mut self, dt: f64) -> Result<(), FusionError> {
        check_dt(dt)?;
        let a = SMatrix::<f64, 2, 2>::new(1.0, dt, 0.0, 1.0);
        self.kf.predict(&a, &SVector::zeros(), &white_accel_q(dt, self.accel_psd));
        self.kf.x[0] = normalize_angle(self.kf.x[0]);
        Ok(())
    }

    pub fn correct_heading(&mut self, heading: f64, r: f64) -> Result<(), FusionError> {
        check_finite(heading)?;
        let innovation = angle_diff(heading, self.kf.x[0]);
        self.kf.correct_with_innovation(&SVector::from([1.0, 0.0]), innovation, r);
        self.kf.x[0] = normalize_angle(self.kf.x[0]);
        Ok(())
    }

    pub fn correct_rate(&mut self, rate: f64, r: f64) -> Result<(), FusionError> {
        check_finite(rate)?;
        self.kf.correct(&SVector::from([0.0, 1.0]), rate, r);
        Ok(())
    }

    pub fn heading(&self) -> f64 {
        self.kf.x[0]
    }

    pub fn rate(&self) -> f64 {
        self.kf.x[1]
    }
}

/// Altitude with state (z, vertical rate, vertical acceleration). IMU
/// acceleration, when present, replaces the acceleration state as a
/// control input; otherwise the constant-acceleration model applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltitudeFilter {
    pub kf: Kalman<3>,
    pub jerk_psd: f64,
    /// Variance of the IMU acceleration input ((m/s²)²).
    pub accel_variance: f64,
}

impl AltitudeFilter {
    pub fn new(initial_variance: f64, jerk_psd: f64, accel_variance: f64) -> Self {
        Self { kf: Kalman::new(initial_variance), jerk_psd, accel_variance }
    }

    pub fn predict(&mut self, dt: f64, accel: Option<f64>) -> Result<(), FusionError> {
        check_dt(dt)?;
        match accel {
            None => self.kf.predict(&ca_transition(dt), &SVector::zeros(), &white_jerk_q(dt, self.jerk_psd)),
            Some(u) => {
                check_finite(u)?;
                let a = SMatrix::<f64, 3, 3>::new(1.0, dt, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
                let b = SVector::<f64, 3>::new(0.5 * dt * dt, dt, 1.0);
                let q = b * b.transpose() * self.accel_variance + white_jerk_q(dt, self.jerk_psd);
                self.kf.predict(&a, &(b * u), &q);
            }
        }
        Ok(())
    }

    pub fn correct_range(&mut self, height: f64, r: f64) -> Result<(), FusionError> {
        check_finite(height)?;
        self.kf.correct(&SVector::from([1.0, 0.0, 0.0]), height, r);
        Ok(())
    }

    pub fn correct_rate(&mut self, rate: f64, r: f64) -> Result<(), FusionError> {
        check_finite(rate)?;
        self.kf.correct(&SVector::from([0.0, 1.0, 0.0]), rate, r);
        Ok(())
    }

    pub fn altitude(&self) -> f64 {
        self.kf.x[0]
    }

    pub fn rate(&self) -> f64 {
        self.kf.x[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionParams {
    /// White-jerk PSD of the x/y axes (m²/s⁵).
    pub jerk_psd: f64,
    /// White angular-acceleration PSD of the heading filter (rad²/s³).
    pub heading_accel_psd: f64,
    pub altitude_jerk_psd: f64,
    pub imu_accel_variance: f64,
    pub r_velocity: f64,
    pub r_position: f64,
    pub r_heading: f64,
    pub r_heading_rate: f64,
    pub r_rangefinder: f64,
    pub r_baro_rate: f64,
    pub initial_variance: f64,
    /// Span of the replay history for delayed measurements (seconds).
    pub history_seconds: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            jerk_psd: 1.0,
            heading_accel_psd: 1.0,
            altitude_jerk_psd: 1.0,
            imu_accel_variance: 0.05,
            r_velocity: 0.05,
            r_position: 0.04,
            r_heading: 0.01,
            r_heading_rate: 0.005,
            r_rangefinder: 0.0025,
            r_baro_rate: 0.01,
            initial_variance: 100.0,
            history_seconds: 2.0,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        let r = [
            self.r_velocity,
            self.r_position,
            self.r_heading,
            self.r_heading_rate,
            self.r_rangefinder,
            self.r_baro_rate,
        ];
        if r.iter().any(|v| !(*v > 0.0)) {
            return Err("measurement variances must be positive");
        }
        let q = [self.jerk_psd, self.heading_accel_psd, self.altitude_jerk_psd, self.imu_accel_variance];
        if q.iter().any(|v| !(*v >= 0.0)) {
            return Err("process noise must be non-negative");
        }
        if !(self.initial_variance > 0.0) || !(self.history_seconds >= 0.0) {
            return Err("initial_variance must be positive and history_seconds non-negative");
        }
        Ok(())
    }
}

/// A timestamped input to the fusion stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measurement {
    /// World-frame planar velocity (m/s).
    Velocity { timestamp: f64, velocity: Point2 },
    HeadingRate { timestamp: f64, rate: f64 },
    Position { timestamp: f64, position: Point2 },
    Heading { timestamp: f64, heading: f64 },
    /// Gravity-compensated vertical acceleration, held until the next sample.
    ImuAccel { timestamp: f64, accel: f64 },
    Rangefinder { timestamp: f64, height: f64 },
    BaroRate { timestamp: f64, rate: f64 },
}

impl Measurement {
    pub fn timestamp(&self) -> f64 {
        match *self {
            Measurement::Velocity { timestamp, .. }
            | Measurement::HeadingRate { timestamp, .. }
            | Measurement::Position { timestamp, .. }
            | Measurement::Heading { timestamp, .. }
            | Measurement::ImuAccel { timestamp, .. }
            | Measurement::Rangefinder { timestamp, .. }
            | Measurement::BaroRate { timestamp, .. } => timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedState {
    pub timestamp: f64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub heading: f64,
    pub heading_rate: f64,
}

impl FusedState {
    pub fn planar(&self) -> Point2 {
        Point2::new(self.position[0], self.position[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Filters {
    time: Option<f64>,
    x: AxisFilter,
    y: AxisFilter,
    heading: HeadingFilter,
    altitude: AltitudeFilter,
    imu_accel: Option<f64>,
}

/// Time-ordered fusion of all measurement kinds. Each measurement first
/// propagates every filter to its timestamp; measurements older than the
/// filter time are re-applied in order from the history ring.
#[derive(Debug, Clone)]
pub struct StateFusion {
    params: FusionParams,
    filters: Filters,
    /// (state before the measurement, measurement), ascending by time.
    history: Vec<(Filters, Measurement)>,
    dropped: usize,
}

impl StateFusion {
    pub fn new(params: FusionParams) -> Self {
        let v = params.initial_variance;
        Self {
            params,
            filters: Filters {
                time: None,
                x: AxisFilter::new(v, params.jerk_psd),
                y: AxisFilter::new(v, params.jerk_psd),
                heading: HeadingFilter::new(v, params.heading_accel_psd),
                altitude: AltitudeFilter::new(v, params.altitude_jerk_psd, params.imu_accel_variance),
                imu_accel: None,
            },
            history: Vec::new(),
            dropped: 0,
        }
    }

    /// Starts the filters at a known pose with zero velocity.
    pub fn initialize(&mut self, timestamp: f64, position: Point2, heading: f64, altitude: f64) {
        let f = &mut self.filters;
        f.time = Some(timestamp);
        f.x.kf.x[0] = position.x;
        f.y.kf.x[0] = position.y;
        f.heading.kf.x[0] = normalize_angle(heading);
        f.altitude.kf.x[0] = altitude;
    }

    pub fn params(&self) -> &FusionParams {
        &self.params
    }

    pub fn time(&self) -> Option<f64> {
        self.filters.time
    }

    /// Measurements discarded for arriving after the history window.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn x_filter(&self) -> &AxisFilter {
        &self.filters.x
    }

    pub fn y_filter(&self) -> &AxisFilter {
        &self.filters.y
    }

    pub fn heading_filter(&self) -> &HeadingFilter {
        &self.filters.heading
    }

    pub fn altitude_filter(&self) -> &AltitudeFilter {
        &self.filters.altitude
    }

    pub fn state(&self) -> FusedState {
        let f = &self.filters;
        FusedState {
            timestamp: f.time.unwrap_or(0.0),
            position: [f.x.position(), f.y.position(), f.altitude.altitude()],
            velocity: [f.x.velocity(), f.y.velocity(), f.altitude.rate()],
            heading: f.heading.heading(),
            heading_rate: f.heading.rate(),
        }
    }

    /// State propagated to `t` without modifying the filters.
    pub fn predicted(&self, t: f64) -> FusedState {
        let mut f = self.filters;
        advance(&mut f, t).expect("finite prediction");
        let mut s = self.clone();
        s.filters = f;
        s.state()
    }

    pub fn apply(&mut self, m: Measurement) -> Result<FusedState, FusionError> {
        let t = m.timestamp();
        if !t.is_finite() {
            return Err(FusionError::NonFinite);
        }
        let now = self.filters.time.unwrap_or(t);
        if t >= now {
            let before = self.filters;
            apply_to(&mut self.filters, &self.params, m)?;
            self.history.push((before, m));
        } else {
            let pos = self.history.partition_point(|(_, h)| h.timestamp() <= t);
            let unreachable = pos == 0 && self.history.first().is_none_or(|(f, _)| f.time.is_some_and(|ft| ft > t));
            if unreachable || t < now - self.params.history_seconds {
                self.dropped += 1;
                return Err(FusionError::TooOld { timestamp: t, now });
            }
            let mut filters = if pos < self.history.len() { self.history[pos].0 } else { self.filters };
            let before = filters;
            apply_to(&mut filters, &self.params, m)?;
            self.history.insert(pos, (before, m));
            for k in pos + 1..self.history.len() {
                self.history[k].0 = filters;
                let replayed = self.history[k].1;
                apply_to(&mut filters, &self.params, replayed)?;
            }
            self.filters = filters;
        }
        self.trim();
        Ok(self.state())
    }

    fn trim(&mut self) {
        let Some(now) = self.filters.time else { return };
        let horizon = now - self.params.history_seconds;
        let keep_from = self.history.partition_point(|(_, m)| m.timestamp() < horizon);
        if keep_from > 0 {
            self.history.drain(..keep_from);
        }
    }
}

fn advance(f: &mut Filters, t: f64) -> Result<(), FusionError> {
    match f.time {
        None => f.time = Some(t),
        Some(now) if t > now => {
            let dt = t - now;
            f.x.predict(dt)?;
            f.y.predict(dt)?;
            f.heading.predict(dt)?;
            f.altitude.predict(dt, f.imu_accel)?;
            f.time = Some(t);
        }
        Some(_) => {}
    }
    Ok(())
}

fn apply_to(f: &mut Filters, p: &FusionParams, m: Measurement) -> Result<(), FusionError> {
    advance(f, m.timestamp())?;
    match m {
        Measurement::Velocity { velocity, .. } => {
            f.x.correct_velocity(velocity.x, p.r_velocity)?;
            f.y.correct_velocity(velocity.y, p.r_velocity)?;
        }
        Measurement::HeadingRate { rate, .. } => f.heading.correct_rate(rate, p.r_heading_rate)?,
        Measurement::Position { position, .. } => {
            f.x.correct_position(position.x, p.r_position)?;
            f.y.correct_position(position.y, p.r_position)?;
        }
        Measurement::Heading { heading, .. } => f.heading.correct_heading(heading, p.r_heading)?,
        Measurement::ImuAccel { accel, .. } => {
            check_finite(accel)?;
            f.imu_accel = Some(accel);
        }
        Measurement::Rangefinder { height, .. } => f.altitude.correct_range(height, p.r_rangefinder)?,
        Measurement::BaroRate { rate, .. } => f.altitude.correct_rate(rate, p.r_baro_rate)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn axis_with(x: [f64; 3]) -> AxisFilter {
        let mut f = AxisFilter::new(1.0, 1.0);
        f.kf.x = SVector::from(x);
        f
    }

    #[test]
    fn prediction_kinematics() {
        let mut f = axis_with([0.0, 1.0, 0.0]);
        f.predict(1.0).unwrap();
        assert_abs_diff_eq!(f.position(), 1.0, epsilon = 1e-12);
        let mut f = axis_with([0.0, 0.0, 2.0]);
        f.predict(1.0).unwrap();
        assert_abs_diff_eq!(f.position(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.velocity(), 2.0, epsilon = 1e-12);
        assert_eq!(f.predict(0.0), Err(FusionError::NonPositiveDt(0.0)));
    }

    #[test]
    fn prediction_injects_process_noise() {
        let mut f = AxisFilter::new(1.0, 1.0);
        let before = f.kf.p.trace();
        f.predict(0.5).unwrap();
        assert!(f.kf.x.iter().all(|v| *v == 0.0));
        assert!(f.kf.p.trace() > before + white_jerk_q(0.5, 1.0).trace() - 1e-12);
    }

    #[test]
    fn velocity_correction_limits() {
        let mut f = axis_with([0.0, 0.3, 0.0]);
        let before = f.kf.x;
        f.correct_velocity(5.0, 1e18).unwrap();
        assert!((f.kf.x - before).abs().max() < 1e-9);
        let mut f = axis_with([0.0, 0.3, 0.0]);
        f.correct_velocity(5.0, 1e-15).unwrap();
        assert_abs_diff_eq!(f.velocity(), 5.0, epsilon = 1e-9);
    }

    #[test]
    fn repeated_velocity_corrections_converge_monotonically() {
        // scalar oracle: after n updates the error is e0 * r / (r + n p0)
        let (p0, r, target) = (100.0, 0.05, 1.5);
        let mut f = AxisFilter::new(p0, 1.0);
        let mut last = f64::INFINITY;
        for n in 1..=30 {
            f.correct_velocity(target, r).unwrap();
            let e = (f.velocity() - target).abs();
            assert!(e < last);
            assert_abs_diff_eq!(e, target * r / (r + n as f64 * p0), epsilon = 1e-12);
            last = e;
        }
    }

    #[test]
    fn position_averaging_beats_single_measurement() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0, 0.2).unwrap();
        let mut sq = 0.0;
        for _ in 0..400 {
            let mut f = AxisFilter::new(100.0, 0.01);
            for _ in 0..20 {
                f.predict(0.1).unwrap();
                f.correct_position(2.0 + noise.sample(&mut rng), 0.04).unwrap();
            }
            sq += (f.position() - 2.0).powi(2);
        }
        assert!(sq / 400.0 < 0.04);
    }

    #[test]
    fn position_variance_grows_without_corrections() {
        let mut f = AxisFilter::new(1.0, 1.0);
        let mut last = f.kf.p[(0, 0)];
        for _ in 0..50 {
            f.predict(0.2).unwrap();
            f.correct_velocity(0.0, 0.05).unwrap();
            assert!(f.kf.p[(0, 0)] > last);
            last = f.kf.p[(0, 0)];
        }
    }

    #[test]
    fn heading_innovation_wraps() {
        let mut f = HeadingFilter::new(1.0, 1.0);
        f.kf.x[0] = -std::f64::consts::PI + 0.1;
        f.correct_heading(std::f64::consts::PI - 0.1, 1e-15).unwrap();
        assert_abs_diff_eq!(angle_diff(f.heading(), std::f64::consts::PI - 0.1), 0.0, epsilon = 1e-9);
        let mut g = HeadingFilter::new(1.0, 1.0);
        g.kf.x[0] = -std::f64::consts::PI + 0.1;
        g.correct_heading(std::f64::consts::PI - 0.1, 1.0).unwrap();
        // half gain moves by half the wrapped innovation (-0.2)
        assert_abs_diff_eq!(angle_diff(g.heading(), -std::f64::consts::PI + 0.1), -0.1, epsilon = 1e-9);
    }

    #[test]
    fn heading_integrates_rate() {
        let mut f = HeadingFilter::new(1.0, 0.0);
        f.kf.x[1] = 0.3;
        for _ in 0..10 {
            f.predict(0.1).unwrap();
        }
        assert_abs_diff_eq!(f.heading(), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn heading_rate_tracks_constant_yaw() {
        let mut f = HeadingFilter::new(100.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 0.05).unwrap();
        for k in 1..=10 {
            f.predict(0.2).unwrap();
            f.correct_rate(0.5 + noise.sample(&mut rng), 0.005).unwrap();
            if k % 5 == 0 {
                f.correct_heading(normalize_angle(0.5 * 0.2 * k as f64), 0.01).unwrap();
            }
        }
        assert!((f.rate() - 0.5).abs() < 0.025);
    }

    #[test]
    fn altitude_zero_inputs_stay_zero() {
        let mut f = AltitudeFilter::new(1.0, 1.0, 0.05);
        f.predict(0.1, Some(0.0)).unwrap();
        f.correct_range(0.0, 0.0025).unwrap();
        f.correct_rate(0.0, 0.01).unwrap();
        assert!(f.kf.x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn altitude_accel_drives_prediction() {
        let mut f = AltitudeFilter::new(1.0, 0.0, 0.0);
        for _ in 0..10 {
            f.predict(0.1, Some(1.0)).unwrap();
        }
        assert_abs_diff_eq!(f.rate(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.altitude(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn altitude_rangefinder_averaging() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut sq = 0.0;
        let runs = 200;
        for _ in 0..runs {
            let mut f = AltitudeFilter::new(100.0, 0.1, 0.05);
            for _ in 0..50 {
                f.predict(0.02, Some(0.0)).unwrap();
                f.correct_range(1.5 + noise.sample(&mut rng), 0.0025).unwrap();
                f.correct_rate(0.0, 0.01).unwrap();
            }
            sq += (f.altitude() - 1.5).powi(2);
        }
        assert!((sq / runs as f64).sqrt() < 0.05);
    }

    #[test]
    fn baro_rate_damps_rangefinder_step() {
        // flying over a 0.5 m box: the rangefinder jumps, true altitude does not
        let run = |with_baro: bool| {
            let mut f = AltitudeFilter::new(1.0, 1.0, 0.05);
            f.kf.x[0] = 1.5;
            let mut peak: f64 = 0.0;
            for k in 0..40 {
                f.predict(0.02, Some(0.0)).unwrap();
                let h = if k >= 10 { 1.0 } else { 1.5 };
                f.correct_range(h, 0.0025).unwrap();
                if with_baro {
                    f.correct_rate(0.0, 0.01).unwrap();
                }
                peak = peak.max(f.rate().abs());
            }
            peak
        };
        assert!(run(true) < run(false));
    }

    #[test]
    fn covariance_stays_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut f = AxisFilter::new(100.0, 1.0);
        let mut h = HeadingFilter::new(100.0, 1.0);
        let mut a = AltitudeFilter::new(100.0, 1.0, 0.05);
        for _ in 0..20_000 {
            let dt = rng.random_range(1e-3..0.5);
            f.predict(dt).unwrap();
            h.predict(dt).unwrap();
            a.predict(dt, Some(rng.random_range(-2.0..2.0))).unwrap();
            let r = 10f64.powf(rng.random_range(-6.0..3.0));
            match rng.random_range(0..3) {
                0 => f.correct_position(rng.random_range(-10.0..10.0), r).unwrap(),
                1 => f.correct_velocity(rng.random_range(-3.0..3.0), r).unwrap(),
                _ => h.correct_heading(rng.random_range(-3.0..3.0), r).unwrap(),
            }
            a.correct_range(rng.random_range(0.0..3.0), r).unwrap();
            assert!(f.kf.p.symmetric_eigenvalues().min() > 0.0);
            assert!(h.kf.p.symmetric_eigenvalues().min() > 0.0);
            assert!(a.kf.p.symmetric_eigenvalues().min() > 0.0);
        }
    }

    fn measurements() -> Vec<Measurement> {
        let mut out = Vec::new();
        for k in 1..=20 {
            let t = k as f64 * 0.2;
            out.push(Measurement::Velocity { timestamp: t, velocity: Point2::new(1.0, -0.5) });
            out.push(Measurement::HeadingRate { timestamp: t, rate: 0.1 });
            if k % 5 == 0 {
                out.push(Measurement::Position { timestamp: t, position: Point2::new(t, -0.5 * t) });
                out.push(Measurement::Heading { timestamp: t, heading: 0.1 * t });
            }
        }
        out
    }

    #[test]
    fn delayed_measurement_replays_to_in_order_result() {
        let ms = measurements();
        let mut ordered = StateFusion::new(FusionParams::default());
        ordered.initialize(0.0, Point2::ORIGIN, 0.0, 0.0);
        for m in &ms {
            ordered.apply(*m).unwrap();
        }
        // deliver position/heading fixes one scan late
        let mut delayed = StateFusion::new(FusionParams::default());
        delayed.initialize(0.0, Point2::ORIGIN, 0.0, 0.0);
        let mut pending: Vec<Measurement> = Vec::new();
        for m in &ms {
            match m {
                Measurement::Position { .. } | Measurement::Heading { .. } => pending.push(*m),
                _ => {
                    if m.timestamp() > pending.first().map_or(f64::INFINITY, |p| p.timestamp()) {
                        for p in pending.drain(..) {
                            delayed.apply(p).unwrap();
                        }
                    }
                    delayed.apply(*m).unwrap();
                }
            }
        }
        for p in pending.drain(..) {
            delayed.apply(p).unwrap();
        }
        let (a, b) = (ordered.state(), delayed.state());
        for i in 0..3 {
            assert_abs_diff_eq!(a.position[i], b.position[i], epsilon = 1e-9);
            assert_abs_diff_eq!(a.velocity[i], b.velocity[i], epsilon = 1e-9);
        }
        assert_abs_diff_eq!(a.heading, b.heading, epsilon = 1e-9);
    }

    #[test]
    fn measurements_beyond_history_are_dropped() {
        let mut f = StateFusion::new(FusionParams::default());
        f.initialize(0.0, Point2::ORIGIN, 0.0, 0.0);
        f.apply(Measurement::Velocity { timestamp: 5.0, velocity: Point2::ORIGIN }).unwrap();
        let err = f.apply(Measurement::Position { timestamp: 1.0, position: Point2::ORIGIN });
        assert!(matches!(err, Err(FusionError::TooOld { .. })));
        assert_eq!(f.dropped(), 1);
    }

    #[test]
    fn axes_are_decoupled() {
        let xs: Vec<Measurement> = (1..=10)
            .map(|k| Measurement::Velocity { timestamp: k as f64 * 0.2, velocity: Point2::new(0.5, (k as f64).sin()) })
            .collect();
        let mut a = StateFusion::new(FusionParams::default());
        let mut b = StateFusion::new(FusionParams::default());
        for m in &xs {
            a.apply(*m).unwrap();
        }
        // same x stream interleaved with extra y-only heading data at identical times
        for m in &xs {
            b.apply(*m).unwrap();
            b.apply(Measurement::Heading { timestamp: m.timestamp(), heading: 0.3 }).unwrap();
        }
        assert_eq!(a.x_filter(), b.x_filter());
        assert_eq!(a.y_filter(), b.y_filter());
    }
}
