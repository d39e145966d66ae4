//! Compares clean and multipath-corrupted scans of the container scene and
//! counts how many returns lie off any true surface.

use sonarslam::sim::{cast_scan, inject_multipath, NoiseConfig, Scenario};

fn main() -> sonarslam::Result<()> {
    let scenario = Scenario::builtin("container_loop").expect("built-in scenario");
    let truth = scenario.truth()?;
    let clean = NoiseConfig {
        multipath_enable: false,
        ring_artifact_enable: false,
        ..scenario.noise
    };
    let tol = 3.0 * 2.0 * scenario.noise.range_sigma_base;
    for (label, noise) in [("clean", clean), ("multipath", scenario.noise)] {
        let (mut total, mut off) = (0, 0);
        for (k, pose) in truth.iter().enumerate().step_by(10) {
            let n = noise.for_scan(k as u64);
            let scan = cast_scan(&scenario.environment, pose, &scenario.spec, &n);
            let scan = inject_multipath(&scan, &scenario.environment, pose, &scenario.spec, &n);
            for p in scan.cloud.iter() {
                total += 1;
                if scenario.environment.distance(&pose.transform_point(p)) > tol {
                    off += 1;
                }
            }
        }
        println!("{label:<10} {total} returns, {off} farther than {:.0} mm from a surface", tol * 1e3);
    }
    Ok(())
}
