//! Sonar–camera extrinsic calibration on a generated four-block fixture,
//! with increasing pixel noise.

use sonarslam::calib::{calibrate, ExtractionParams, FixtureSpec};

fn main() -> sonarslam::Result<()> {
    println!("{:>8}  {:>8}  {:>9}  {:>9}  {:>9}", "noise_px", "cloud_mm", "rms_px", "t_err_mm", "r_err_deg");
    for (pixel_noise, cloud_noise) in [(0.0, 0.0), (0.5, 0.0), (0.5, 0.002), (1.0, 0.005)] {
        let spec = FixtureSpec {
            pixel_noise,
            cloud_noise,
            ..FixtureSpec::default()
        };
        let f = spec.generate(1)?;
        let run = calibrate(&f.cloud, &f.pixels, &f.intrinsics, &ExtractionParams::default())?;
        let (dt, dr) = run.solution.extrinsic.distance_to(&f.extrinsic);
        println!(
            "{pixel_noise:>8.1}  {:>8.1}  {:>9.3}  {:>9.2}  {:>9.3}",
            cloud_noise * 1e3,
            run.solution.reprojection_rms,
            dt * 1e3,
            dr.to_degrees()
        );
    }
    Ok(())
}
