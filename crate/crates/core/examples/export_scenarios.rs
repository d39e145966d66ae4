//! Writes every built-in scenario as TOML, by default into `crates/core/scenarios/`.
//!
//! `cargo run --example export_scenarios -- [dir]`

use std::path::PathBuf;

use sonarslam::sim::{Scenario, BUILTIN_SCENARIOS};

fn main() -> sonarslam::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios"));
    std::fs::create_dir_all(&dir)?;
    for name in BUILTIN_SCENARIOS {
        let s = Scenario::builtin(name).expect("listed scenario exists");
        let path = dir.join(format!("{name}.toml"));
        std::fs::write(&path, s.to_toml_string())?;
        println!("{} ({} surfaces)", path.display(), s.environment.surfaces.len());
    }
    Ok(())
}
