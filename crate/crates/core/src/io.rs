//! Line-oriented scan logs and trajectory CSV files.
//!
//! Scan-log records, one per line, all numbers fixed-point with 6 decimals:
//!
//! ```text
//! SCAN t=<s> n=<count> <bearing:range> ...
//! IMU t=<s> az=<m/s2>
//! RANGE t=<s> h=<m>
//! BARO t=<s> vz=<m/s>
//! ATT t=<s> roll=<rad> pitch=<rad>
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Timestamps must not
//! decrease from one record to the next.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::evaluation::{EvalError, Trajectory, TrajectorySample};
use crate::geometry::{PolarPoint, PolarScan};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamp {timestamp} precedes previous record at {previous}")]
    OutOfOrder { line: usize, timestamp: f64, previous: f64 },
    #[error("invalid trajectory: {0}")]
    Trajectory(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorMessage {
    Scan(PolarScan),
    /// Gravity-compensated vertical acceleration.
    Imu { timestamp: f64, az: f64 },
    /// Downward rangefinder distance.
    Range { timestamp: f64, height: f64 },
    /// Barometric vertical rate.
    Baro { timestamp: f64, vz: f64 },
    Attitude { timestamp: f64, roll: f64, pitch: f64 },
}

impl SensorMessage {
    pub fn timestamp(&self) -> f64 {
        match self {
            SensorMessage::Scan(s) => s.timestamp,
            SensorMessage::Imu { timestamp, .. }
            | SensorMessage::Range { timestamp, .. }
            | SensorMessage::Baro { timestamp, .. }
            | SensorMessage::Attitude { timestamp, .. } => *timestamp,
        }
    }

    pub fn to_line(&self) -> String {
        match self {
            SensorMessage::Scan(s) => {
                let mut line = format!("SCAN t={:.6} n={}", s.timestamp, s.points.len());
                for p in &s.points {
                    let _ = write!(line, " {:.6}:{:.6}", p.bearing, p.range);
                }
                line
            }
            SensorMessage::Imu { timestamp, az } => format!("IMU t={timestamp:.6} az={az:.6}"),
            SensorMessage::Range { timestamp, height } => format!("RANGE t={timestamp:.6} h={height:.6}"),
            SensorMessage::Baro { timestamp, vz } => format!("BARO t={timestamp:.6} vz={vz:.6}"),
            SensorMessage::Attitude { timestamp, roll, pitch } => {
                format!("ATT t={timestamp:.6} roll={roll:.6} pitch={pitch:.6}")
            }
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { line, message: message.into() }
}

fn number(line: usize, text: &str, what: &str) -> Result<f64, IoError> {
    let v: f64 = text.parse().map_err(|_| parse_err(line, format!("bad {what} value '{text}'")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite {what}")));
    }
    Ok(v)
}

/// Reads `key=value` from the next whitespace token.
fn field<'a>(line: usize, tokens: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<&'a str, IoError> {
    let tok = tokens.next().ok_or_else(|| parse_err(line, format!("missing field '{key}'")))?;
    tok.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| parse_err(line, format!("expected '{key}=', found '{tok}'")))
}

/// Parses one record; `line` is 1-based and only used for diagnostics.
pub fn parse_line(text: &str, line: usize) -> Result<Option<SensorMessage>, IoError> {
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let mut tokens = trimmed.split_whitespace();
    let kind = tokens.next().unwrap_or_default();
    let mut scalar = |key: &str| -> Result<f64, IoError> { number(line, field(line, &mut tokens, key)?, key) };
    let msg = match kind {
        "SCAN" => {
            let timestamp = scalar("t")?;
            let n_text = field(line, &mut tokens, "n")?;
            let n: usize = n_text.parse().map_err(|_| parse_err(line, format!("bad point count '{n_text}'")))?;
            let mut points = Vec::with_capacity(n);
            for tok in tokens.by_ref() {
                let (b, r) = tok.split_once(':').ok_or_else(|| parse_err(line, format!("expected bearing:range, found '{tok}'")))?;
                let p = PolarPoint { bearing: number(line, b, "bearing")?, range: number(line, r, "range")? };
                if p.range < 0.0 {
                    return Err(parse_err(line, "negative range"));
                }
                points.push(p);
            }
            if points.len() != n {
                return Err(parse_err(line, format!("declared {n} points, found {}", points.len())));
            }
            SensorMessage::Scan(PolarScan::new(timestamp, points))
        }
        "IMU" => SensorMessage::Imu { timestamp: scalar("t")?, az: scalar("az")? },
        "RANGE" => SensorMessage::Range { timestamp: scalar("t")?, height: scalar("h")? },
        "BARO" => SensorMessage::Baro { timestamp: scalar("t")?, vz: scalar("vz")? },
        "ATT" => SensorMessage::Attitude { timestamp: scalar("t")?, roll: scalar("roll")?, pitch: scalar("pitch")? },
        other => return Err(parse_err(line, format!("unknown record type '{other}'"))),
    };
    if let Some(extra) = tokens.next() {
        return Err(parse_err(line, format!("unexpected trailing token '{extra}'")));
    }
    Ok(Some(msg))
}

pub fn read_scan_log(reader: impl BufRead) -> Result<Vec<SensorMessage>, IoError> {
    let mut out: Vec<SensorMessage> = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let line = i + 1;
        let Some(msg) = parse_line(&text?, line)? else { continue };
        if let Some(prev) = out.last() {
            if msg.timestamp() < prev.timestamp() {
                return Err(IoError::OutOfOrder { line, timestamp: msg.timestamp(), previous: prev.timestamp() });
            }
        }
        out.push(msg);
    }
    Ok(out)
}

pub fn write_scan_log(mut writer: impl Write, messages: &[SensorMessage]) -> std::io::Result<()> {
    for m in messages {
        writeln!(writer, "{}", m.to_line())?;
    }
    writer.flush()
}

pub const TRAJECTORY_HEADER: &str = "timestamp,x,y,z,heading";

pub fn write_trajectory_csv(mut writer: impl Write, trajectory: &Trajectory) -> std::io::Result<()> {
    writeln!(writer, "{TRAJECTORY_HEADER}")?;
    for s in trajectory.samples() {
        writeln!(writer, "{:.6},{:.6},{:.6},{:.6},{:.6}", s.timestamp, s.x, s.y, s.z, s.heading)?;
    }
    writer.flush()
}

pub fn read_trajectory_csv(reader: impl BufRead) -> Result<Trajectory, IoError> {
    let mut samples = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let text = text?;
        let line = i + 1;
        let trimmed = text.trim();
        if line == 1 {
            if trimmed != TRAJECTORY_HEADER {
                return Err(parse_err(line, format!("expected header '{TRAJECTORY_HEADER}'")));
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let cols: Vec<&str> = trimmed.split(',').collect();
        if cols.len() != 5 {
            return Err(parse_err(line, format!("expected 5 columns, found {}", cols.len())));
        }
        let names = ["timestamp", "x", "y", "z", "heading"];
        let mut v = [0.0; 5];
        for k in 0..5 {
            v[k] = number(line, cols[k].trim(), names[k])?;
        }
        samples.push(TrajectorySample::new(v[0], v[1], v[2], v[3], v[4]));
    }
    Ok(Trajectory::new(samples)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_log_round_trip() {
        let msgs = vec![
            SensorMessage::Scan(PolarScan::new(
                0.2,
                vec![PolarPoint { bearing: -1.5, range: 2.25 }, PolarPoint { bearing: 0.25, range: 9.5 }],
            )),
            SensorMessage::Imu { timestamp: 0.2, az: -0.125 },
            SensorMessage::Range { timestamp: 0.25, height: 1.5 },
            SensorMessage::Baro { timestamp: 0.3, vz: 0.0 },
            SensorMessage::Attitude { timestamp: 0.3, roll: 0.01, pitch: -0.02 },
        ];
        let mut buf = Vec::new();
        write_scan_log(&mut buf, &msgs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("SCAN t=0.200000 n=2 -1.500000:2.250000 0.250000:9.500000\nIMU t=0.200000 az=-0.125000\n"));
        assert_eq!(read_scan_log(buf.as_slice()).unwrap(), msgs);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "IMU t=0.0 az=0.0\n\nRANGE t=0.1 h=abc\n";
        match read_scan_log(text.as_bytes()) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short = "SCAN t=1.0 n=2 0.0:1.0\n";
        assert!(matches!(read_scan_log(short.as_bytes()), Err(IoError::Parse { line: 1, .. })));
        assert!(matches!(read_scan_log("FOO t=1\n".as_bytes()), Err(IoError::Parse { line: 1, .. })));
    }

    #[test]
    fn out_of_order_is_rejected() {
        let text = "IMU t=1.0 az=0.0\nIMU t=1.0 az=0.0\nBARO t=0.5 vz=0.0\n";
        match read_scan_log(text.as_bytes()) {
            Err(IoError::OutOfOrder { line, timestamp, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(timestamp, 0.5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let t = Trajectory::new(vec![
            TrajectorySample::new(0.0, 1.0, 2.0, 0.5, 0.1),
            TrajectorySample::new(0.2, 1.5, 2.0, 0.5, -3.0),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "timestamp,x,y,z,heading\n0.000000,1.000000,2.000000,0.500000,0.100000\n0.200000,1.500000,2.000000,0.500000,-3.000000\n"
        );
        assert_eq!(read_trajectory_csv(buf.as_slice()).unwrap(), t);
        assert!(read_trajectory_csv("a,b\n".as_bytes()).is_err());
    }
}
