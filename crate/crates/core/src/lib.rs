//! Desk-scale 3D sonar SLAM: simulation, scan-matching odometry, loop closure
//! with pose-graph optimization, camera–sonar extrinsic calibration and
//! trajectory evaluation.

pub mod calib;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod mapping;
pub mod odometry;
pub mod pipeline;
pub mod sim;

pub use error::{Error, Result};
