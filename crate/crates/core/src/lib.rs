//! LiDAR-only 2D localization and mapping for small UAVs in GNSS-denied spaces.

pub mod evaluation;
pub mod fusion;
pub mod geometry;
pub mod global;
pub mod io;
pub mod mapping;
pub mod matching;
pub mod odometry;
pub mod pipeline;
pub mod processing;
pub mod spatial;
