//! Synthetic worlds, trajectories and sensor streams with ground-truth labels.

pub mod sensor;
pub mod stream;
pub mod trajectory;
pub mod world;

pub use sensor::{raycast, trace, Label, RaycastOutput, SensorModel, SensorPose};
pub use stream::{substream, synthesize, SensorSuite, SimError, SimulatedRun};
pub use trajectory::{TiltModel, TrajectoryError, TrajectorySpec, TrueState, Waypoint};
pub use world::{CrossSection, Segment, World, WorldError, PRESETS};
