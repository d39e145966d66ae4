//! Sonar-only and fusion SLAM on the tunnel loop, scored against ground truth
//! in the four-row layout of the comparison table.

use sonarslam::eval::{evaluate_trajectory, format_summary, write_report_csv};
use sonarslam::mapping::{run_slam, SlamParams};
use sonarslam::odometry::{ExternalStream, OdometryParams, PriorMode};
use sonarslam::sim::Scenario;

fn main() -> sonarslam::Result<()> {
    let run = Scenario::builtin("tunnel_loop").expect("built-in scenario").simulate(0)?;
    let mut reports = Vec::new();
    for (name, mode) in [("Sonar", PriorMode::ConstantVelocity), ("Fusion", PriorMode::External)] {
        let external = (mode == PriorMode::External).then(|| ExternalStream {
            poses: run.external.clone(),
            delta: run.extrinsic.inverse(),
        });
        let out = run_slam(&run.scans, OdometryParams::default(), mode, external, SlamParams::default())?;
        reports.push(evaluate_trajectory(&format!("{name} Odom"), &out.odometry, Some(&run.truth))?);
        reports.push(evaluate_trajectory(&format!("{name} PGO"), &out.optimized, Some(&run.truth))?);
    }
    print!("{}", format_summary(&reports));
    write_report_csv(std::io::stdout().lock(), &reports, &["tunnel_loop seed 0".into()])?;
    Ok(())
}
