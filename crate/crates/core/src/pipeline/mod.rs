//! Config-driven runs behind the `sonarslam` subcommands.

pub mod config;

pub use config::{Mode, PipelineConfig, ResolvedInputs, VERSION};

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::calib::io::{read_corner_csv, read_intrinsics, write_corner_csv, write_intrinsics};
use crate::calib::{calibrate, corner_label, CalibrationRun};
use crate::eval::{evaluate_trajectory, export_dense_map, format_summary, revisitation_error, write_report_csv, TrajectoryReport};
use crate::geometry::{Pose, Scan};
use crate::io::{read_ply, read_scan_log, read_tum, write_ply, write_scan_log, write_tum, ScanLogHeader};
use crate::mapping::graph::write_graph;
use crate::mapping::{run_slam, SlamOutput};
use crate::odometry::{ExternalStream, PriorMode};
use crate::{Error, Result};

/// Header lines stamped on every output file.
pub fn output_header(cfg: &PipelineConfig) -> Vec<String> {
    vec![
        format!("sonarslam {VERSION}"),
        format!("config_hash {}", cfg.hash()),
        format!("seed {}", cfg.seed),
    ]
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    Ok(BufReader::new(f))
}

fn prepare_output(cfg: &PipelineConfig, mode: Mode) -> Result<PathBuf> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::Input(format!("{}: {e}", dir.display())))?;
    let mut effective = cfg.clone();
    effective.mode = Some(mode);
    let mut w = create(&dir, "config.toml")?;
    for line in output_header(cfg) {
        writeln!(w, "# {line}")?;
    }
    w.write_all(effective.to_toml_string().as_bytes())?;
    w.flush()?;
    Ok(dir)
}

fn read_trajectory(path: &Path) -> Result<Vec<Pose>> {
    read_tum(open(path)?, &path.display().to_string())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Input(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Files written by [`run_simulate`].
#[derive(Clone, Debug)]
pub struct SimulateSummary {
    pub output_dir: PathBuf,
    pub scans: usize,
    pub points: usize,
}

/// Simulates the configured scenario: `scans.log`, `truth.tum`,
/// `external_odometry.tum` and `extrinsic.tum`.
pub fn run_simulate(cfg: &PipelineConfig) -> Result<SimulateSummary> {
    cfg.validate(Mode::Simulate)?;
    let scenario = cfg.scenario()?;
    let run = scenario.simulate(cfg.seed)?;
    let dir = prepare_output(cfg, Mode::Simulate)?;
    let header = output_header(cfg);

    let mut extra = header.clone();
    extra.push(format!("scenario {}", scenario.name));
    let log_header = ScanLogHeader {
        spec: Some(scenario.spec),
        seed: Some(cfg.seed),
        extra,
    };
    let mut w = create(&dir, "scans.log")?;
    write_scan_log(&mut w, &log_header, &run.scans)?;
    w.flush()?;
    for (name, poses) in [
        ("truth.tum", &run.truth),
        ("external_odometry.tum", &run.external),
        (
            "extrinsic.tum",
            &vec![run.extrinsic.with_stamp(0.0)],
        ),
    ] {
        let mut w = create(&dir, name)?;
        write_tum(&mut w, poses, &header)?;
        w.flush()?;
    }
    Ok(SimulateSummary {
        output_dir: dir,
        scans: run.scans.len(),
        points: run.scans.iter().map(|s| s.cloud.len()).sum(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizationSummary {
    pub iterations: usize,
    pub initial_chi2: f64,
    pub final_chi2: f64,
}

/// Contents of `report.json` for a SLAM run.
#[derive(Clone, Debug, Serialize)]
pub struct SlamReport {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub prior_mode: PriorMode,
    pub scans: usize,
    pub keyframes: usize,
    pub loop_attempts: usize,
    pub loops_accepted: usize,
    /// Steps where the prior replaced a failed registration.
    pub fallback_steps: usize,
    pub fallback: bool,
    pub optimizations: Vec<OptimizationSummary>,
    pub odometry_revisitation_m: Option<f64>,
    pub optimized_revisitation_m: Option<f64>,
    pub map_points: usize,
    pub timing: Vec<StageTiming>,
}

/// Loaded SLAM inputs.
pub struct SlamInputs {
    pub scans: Vec<Scan>,
    pub external: Option<ExternalStream>,
}

pub fn load_slam_inputs(cfg: &PipelineConfig, inputs: &ResolvedInputs) -> Result<SlamInputs> {
    let log = inputs.scan_log.as_ref().expect("validated");
    let (_, scans) = read_scan_log(open(log)?, &log.display().to_string())?;
    let external = match (&inputs.external, &inputs.extrinsic) {
        (Some(e), Some(x)) if cfg.slam.prior_mode == PriorMode::External => {
            let extrinsic = read_trajectory(x)?
                .first()
                .copied()
                .ok_or_else(|| Error::Input(format!("{}: no pose", x.display())))?;
            Some(ExternalStream {
                poses: read_trajectory(e)?,
                delta: Pose {
                    stamp: None,
                    ..extrinsic.inverse()
                },
            })
        }
        _ => None,
    };
    Ok(SlamInputs { scans, external })
}

/// Runs odometry, loop closure and PGO on the configured scan log and writes
/// `odometry.tum`, `optimized.tum`, `graph.txt`, `map.ply`,
/// `odometry_diagnostics.csv` and `report.json`.
pub fn run_slam_pipeline(cfg: &PipelineConfig) -> Result<(SlamOutput, SlamReport)> {
    let start = Instant::now();
    let inputs = cfg.validate(Mode::Slam)?;
    let loaded = load_slam_inputs(cfg, &inputs)?;
    let mut timing = vec![StageTiming {
        stage: "load",
        seconds: start.elapsed().as_secs_f64(),
    }];

    let t = Instant::now();
    let s = &cfg.slam;
    let out = run_slam(&loaded.scans, s.odometry, s.prior_mode, loaded.external, s.mapping.clone())?;
    timing.push(StageTiming {
        stage: "odometry_and_mapping",
        seconds: t.elapsed().as_secs_f64(),
    });

    let t = Instant::now();
    let dir = prepare_output(cfg, Mode::Slam)?;
    let header = output_header(cfg);
    for (name, poses) in [("odometry.tum", &out.odometry), ("optimized.tum", &out.optimized)] {
        let mut w = create(&dir, name)?;
        write_tum(&mut w, poses, &header)?;
        w.flush()?;
    }
    let mut w = create(&dir, "graph.txt")?;
    write_graph(&mut w, &out.graph, &header)?;
    w.flush()?;

    let mut w = create(&dir, "map.ply")?;
    let map = export_dense_map(&mut w, &out.keyframes, &out.graph.states, s.map_voxel.0, &header)?;
    w.flush()?;

    let mut w = create(&dir, "odometry_diagnostics.csv")?;
    for line in &header {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "frame,stamp,iterations,inlier_rmse,inlier_fraction,converged,fallback")?;
    for (k, st) in out.steps.iter().enumerate() {
        let r = &st.registration;
        writeln!(
            w,
            "{k},{:.6},{},{:.6},{:.6},{},{}",
            st.pose.stamp.unwrap_or(0.0),
            r.iterations,
            r.inlier_rmse,
            r.inlier_fraction,
            u8::from(r.converged),
            u8::from(st.fallback)
        )?;
    }
    w.flush()?;
    timing.push(StageTiming {
        stage: "export",
        seconds: t.elapsed().as_secs_f64(),
    });
    timing.push(StageTiming {
        stage: "total",
        seconds: start.elapsed().as_secs_f64(),
    });

    let fallback_steps = out.fallback_count();
    if fallback_steps > 0 {
        log::warn!("{fallback_steps} registration fallbacks; see odometry_diagnostics.csv");
    }
    let report = SlamReport {
        version: VERSION.into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        prior_mode: s.prior_mode,
        scans: out.odometry.len(),
        keyframes: out.keyframes.len(),
        loop_attempts: out.loop_attempts.len(),
        loops_accepted: out.accepted_loops(),
        fallback_steps,
        fallback: fallback_steps > 0,
        optimizations: out
            .optimizations
            .iter()
            .map(|o| OptimizationSummary {
                iterations: o.iterations,
                initial_chi2: o.initial_chi2,
                final_chi2: o.final_chi2,
            })
            .collect(),
        odometry_revisitation_m: revisitation_error(&out.odometry).ok(),
        optimized_revisitation_m: revisitation_error(&out.optimized).ok(),
        map_points: map.len(),
        timing,
    };
    write_json(&dir, "report.json", &report)?;
    Ok((out, report))
}

#[derive(Clone, Debug, Serialize)]
struct CornerRecord {
    label: String,
    sonar: [f64; 3],
    pixel: [f64; 2],
    residual_px: f64,
}

#[derive(Clone, Debug, Serialize)]
struct CalibrationReport<'a> {
    version: &'a str,
    config_hash: String,
    seed: u64,
    solution: &'a crate::calib::CalibrationSolution,
    corners: Vec<CornerRecord>,
}

/// Calibrates from the configured files, or from a generated fixture whose
/// inputs are first written to the output directory. Writes `extrinsic.tum`
/// and `calibration.json`.
pub fn run_calibrate(cfg: &PipelineConfig) -> Result<CalibrationRun> {
    let inputs = cfg.validate(Mode::Calibrate)?;
    let dir = prepare_output(cfg, Mode::Calibrate)?;
    let header = output_header(cfg);
    let (cloud_path, corners_path, intrinsics_path) = match (&inputs.cloud, &inputs.corners, &inputs.intrinsics) {
        (Some(a), Some(b), Some(c)) => (a.clone(), b.clone(), c.clone()),
        _ => {
            let spec = cfg.calibrate.fixture.as_ref().expect("validated");
            let f = spec.generate(cfg.seed)?;
            let mut w = create(&dir, "fixture_cloud.ply")?;
            write_ply(&mut w, &f.cloud, &header)?;
            w.flush()?;
            let mut w = create(&dir, "fixture_corners.csv")?;
            write_corner_csv(&mut w, &f.pixels)?;
            w.flush()?;
            let mut w = create(&dir, "fixture_intrinsics.txt")?;
            write_intrinsics(&mut w, &f.intrinsics)?;
            w.flush()?;
            let mut w = create(&dir, "fixture_extrinsic.tum")?;
            write_tum(&mut w, &[f.extrinsic.with_stamp(0.0)], &header)?;
            w.flush()?;
            (
                dir.join("fixture_cloud.ply"),
                dir.join("fixture_corners.csv"),
                dir.join("fixture_intrinsics.txt"),
            )
        }
    };
    let cloud = read_ply(open(&cloud_path)?, &cloud_path.display().to_string())?;
    let pixels = read_corner_csv(open(&corners_path)?, &corners_path.display().to_string())?;
    let k = read_intrinsics(open(&intrinsics_path)?, &intrinsics_path.display().to_string())?;
    let run = calibrate(&cloud, &pixels, &k, &cfg.calibrate.extraction)?;

    let mut w = create(&dir, "extrinsic.tum")?;
    write_tum(&mut w, &[run.solution.extrinsic.with_stamp(0.0)], &header)?;
    w.flush()?;
    let report = CalibrationReport {
        version: VERSION,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        solution: &run.solution,
        corners: run
            .corners
            .iter()
            .zip(&pixels)
            .zip(&run.solution.residuals)
            .enumerate()
            .map(|(i, ((c, p), r))| CornerRecord {
                label: corner_label(i),
                sonar: c.coords.into(),
                pixel: (*p).into(),
                residual_px: *r,
            })
            .collect(),
    };
    write_json(&dir, "calibration.json", &report)?;
    Ok(run)
}

/// Evaluates every configured trajectory and writes `trajectory_report.csv`
/// and `summary.txt`.
pub fn run_evaluate(cfg: &PipelineConfig) -> Result<Vec<TrajectoryReport>> {
    let inputs = cfg.validate(Mode::Evaluate)?;
    let reference = inputs.reference.as_deref().map(read_trajectory).transpose()?;
    let reports = inputs
        .methods
        .iter()
        .map(|(label, path)| evaluate_trajectory(label, &read_trajectory(path)?, reference.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let dir = prepare_output(cfg, Mode::Evaluate)?;
    let header = output_header(cfg);
    let mut w = create(&dir, "trajectory_report.csv")?;
    write_report_csv(&mut w, &reports, &header)?;
    w.flush()?;
    let mut w = create(&dir, "summary.txt")?;
    for line in &header {
        writeln!(w, "# {line}")?;
    }
    w.write_all(format_summary(&reports).as_bytes())?;
    w.flush()?;
    Ok(reports)
}

/// Runs `mode` and returns a one-paragraph summary for the terminal.
pub fn run(cfg: &PipelineConfig, mode: Mode) -> Result<String> {
    match mode {
        Mode::Simulate => {
            let s = run_simulate(cfg)?;
            Ok(format!("{} scans, {} points -> {}", s.scans, s.points, s.output_dir.display()))
        }
        Mode::Slam => {
            let (_, r) = run_slam_pipeline(cfg)?;
            Ok(format!(
                "{} scans, {} keyframes, {} loops, {} fallbacks, revisitation {:.3} m (odometry {:.3} m) -> {}",
                r.scans,
                r.keyframes,
                r.loops_accepted,
                r.fallback_steps,
                r.optimized_revisitation_m.unwrap_or(0.0),
                r.odometry_revisitation_m.unwrap_or(0.0),
                cfg.output_dir().display()
            ))
        }
        Mode::Calibrate => {
            let r = run_calibrate(cfg)?;
            let e = r.solution.extrinsic;
            Ok(format!(
                "reprojection rms {:.4} px, t = [{:.4}, {:.4}, {:.4}] m -> {}",
                r.solution.reprojection_rms,
                e.translation.x,
                e.translation.y,
                e.translation.z,
                cfg.output_dir().display()
            ))
        }
        Mode::Evaluate => Ok(format_summary(&run_evaluate(cfg)?)),
    }
}
