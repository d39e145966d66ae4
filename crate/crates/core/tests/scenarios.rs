use std::path::PathBuf;

use sonarslam::pipeline::PipelineConfig;
use sonarslam::sim::{Scenario, BUILTIN_SCENARIOS};

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn bundled_scenarios_match_builtins() {
    for name in BUILTIN_SCENARIOS {
        let path = manifest_dir().join("scenarios").join(format!("{name}.toml"));
        let loaded = Scenario::load(&path).unwrap();
        let builtin = Scenario::builtin(name).unwrap();
        assert!(loaded == builtin, "{name}: regenerate with `cargo run --example export_scenarios`");
    }
}

#[test]
fn bundled_scenario_files_round_trip() {
    for name in BUILTIN_SCENARIOS {
        let s = Scenario::builtin(name).unwrap();
        let again = Scenario::from_toml_str(&s.to_toml_string(), name).unwrap();
        assert_eq!(again, s);
    }
}

#[test]
fn bundled_configs_parse() {
    let dir = manifest_dir().join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = PipelineConfig::load(&path).unwrap();
            assert!(cfg.mode.is_some(), "{}", path.display());
            n += 1;
        }
    }
    assert_eq!(n, 5);
}
