//! Synthetic 3D sonar: analytic scenes, ray casting with a material response
//! model, multipath artifacts, scripted motion and a drifting external
//! odometry stream.

pub mod environment;
pub mod motion;
pub mod multipath;
pub mod scenario;
pub mod sensor;
pub mod spec;

pub use environment::{Environment, Hit, Material, Plane, Shape, Surface};
pub use motion::{generate_trajectory, interpolate_trajectory, simulate_external_odometry};
pub use multipath::{inject_multipath, ring_distance};
pub use scenario::{Scenario, SimulationRun, BUILTIN_SCENARIOS};
pub use sensor::{beam_directions, cast_scan, detection_probability, in_view, range_sigma};
pub use spec::{NoiseConfig, SonarSpec};
