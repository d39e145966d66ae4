//! Sonar odometry around the tunnel loop with both motion priors.

use sonarslam::eval::revisitation_error;
use sonarslam::geometry::Pose;
use sonarslam::odometry::{run_odometry, ExternalStream, OdometryParams, PriorMode};
use sonarslam::sim::Scenario;

fn main() -> sonarslam::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let run = Scenario::builtin("tunnel_loop").expect("built-in scenario").simulate(seed)?;
    println!("{} scans, true path closes to {:.3} m", run.scans.len(), revisitation_error(&run.truth)?);
    for mode in [PriorMode::ConstantVelocity, PriorMode::External] {
        let external = (mode == PriorMode::External).then(|| ExternalStream {
            poses: run.external.clone(),
            delta: run.extrinsic.inverse(),
        });
        let steps = run_odometry(&run.scans, OdometryParams::default(), mode, external)?;
        let poses: Vec<Pose> = steps.iter().map(|s| s.pose).collect();
        let fallbacks = steps.iter().filter(|s| s.fallback).count();
        println!(
            "{mode:?}: revisitation {:.3} m, {fallbacks} fallbacks",
            revisitation_error(&poses)?
        );
    }
    Ok(())
}
