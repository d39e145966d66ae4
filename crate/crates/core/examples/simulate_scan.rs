//! Casts one sonar scan in the tunnel scene and writes it as PLY.
//!
//! `cargo run --example simulate_scan -- [out.ply]`

use std::io::BufWriter;

use sonarslam::io::write_ply;
use sonarslam::sim::Scenario;

fn main() -> sonarslam::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "scan.ply".into());
    let scenario = Scenario::builtin("tunnel_loop").expect("built-in scenario");
    let truth = scenario.truth()?;
    let (nh, nv) = scenario.spec.grid_size();
    let scan = sonarslam::sim::cast_scan(&scenario.environment, &truth[0], &scenario.spec, &scenario.noise.for_scan(0));
    let ranges: Vec<f64> = scan.cloud.iter().map(|p| p.coords.norm()).collect();
    let (lo, hi) = ranges
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(*r), hi.max(*r)));
    println!("{} beams, {} returns, range {lo:.2}..{hi:.2} m", nh * nv, scan.cloud.len());
    write_ply(BufWriter::new(std::fs::File::create(&path)?), &scan.cloud, &["single tunnel scan".into()])?;
    println!("wrote {path}");
    Ok(())
}
