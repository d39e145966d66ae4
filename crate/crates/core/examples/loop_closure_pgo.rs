//! Full SLAM on the tunnel loop: keyframes, loop detection and verification,
//! and pose graph optimization.

use sonarslam::eval::revisitation_error;
use sonarslam::mapping::{run_slam, SlamParams};
use sonarslam::odometry::{OdometryParams, PriorMode};
use sonarslam::sim::Scenario;

fn main() -> sonarslam::Result<()> {
    let run = Scenario::builtin("tunnel_loop").expect("built-in scenario").simulate(0)?;
    let out = run_slam(&run.scans, OdometryParams::default(), PriorMode::ConstantVelocity, None, SlamParams::default())?;
    println!("{} keyframes, {} loop attempts", out.keyframes.len(), out.loop_attempts.len());
    for a in out.loop_attempts.iter().filter(|a| a.verification.accepted) {
        let v = &a.verification;
        let truth = run.truth[out.keyframes[a.target].frame].between(&run.truth[out.keyframes[a.source].frame]);
        let (dt, dr) = v.relative.distance_to(&truth);
        println!(
            "  loop {} -> {}: rmse {:.3} m, inliers {:.2}, error vs truth {:.3} m / {:.2} deg",
            a.target,
            a.source,
            v.rmse,
            v.inlier_fraction,
            dt,
            dr.to_degrees()
        );
    }
    for r in &out.optimizations {
        println!("  optimization: {} iterations, chi2 {:.3e} -> {:.3e}", r.iterations, r.initial_chi2, r.final_chi2);
    }
    println!(
        "revisitation: odometry {:.3} m, optimized {:.3} m",
        revisitation_error(&out.odometry)?,
        revisitation_error(&out.optimized)?
    );
    Ok(())
}
