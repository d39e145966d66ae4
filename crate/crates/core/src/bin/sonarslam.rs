use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sonarslam::pipeline::{run, Mode, PipelineConfig};

#[derive(Parser)]
#[command(name = "sonarslam", version, about = "3D sonar odometry, loop closure, calibration and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario into a scan log plus truth and external odometry.
    Simulate(Common),
    /// Odometry, loop closure and pose-graph optimization over a scan log.
    Slam(Common),
    /// Camera–sonar extrinsic calibration.
    Calibrate(Common),
    /// Re-visitation and ATE report for one or more trajectories.
    Evaluate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Slam(a) => (Mode::Slam, a),
        Command::Calibrate(a) => (Mode::Calibrate, a),
        Command::Evaluate(a) => (Mode::Evaluate, a),
    };
    let result = PipelineConfig::load(&args.config).and_then(|mut cfg| {
        if let Some(out) = args.out {
            cfg.output_dir = Some(out);
        }
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        run(&cfg, mode)
    });
    match result {
        Ok(summary) => {
            println!("{}", summary.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sonarslam {}: {e}", mode.as_str());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
