//! TOML pipeline configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calib::{ExtractionParams, FixtureSpec};
use crate::mapping::SlamParams;
use crate::odometry::{OdometryParams, PriorMode};
use crate::sim::scenario::toml_error;
use crate::sim::{NoiseConfig, Scenario, SonarSpec};
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Slam,
    Calibrate,
    Evaluate,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Slam => "slam",
            Mode::Calibrate => "calibrate",
            Mode::Evaluate => "evaluate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Built-in scenario name, used when `scenario_file` is absent.
    pub scenario: String,
    pub scenario_file: Option<PathBuf>,
    /// Replace the scenario's sonar model or noise settings.
    pub spec: Option<SonarSpec>,
    pub noise: Option<NoiseConfig>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            scenario: "tunnel_loop".into(),
            scenario_file: None,
            spec: None,
            noise: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlamConfig {
    pub scan_log: Option<PathBuf>,
    /// External odometry trajectory (TUM), required for the external prior.
    pub external: Option<PathBuf>,
    /// Camera-from-sonar extrinsic as a one-line TUM file, required for the external prior.
    pub extrinsic: Option<PathBuf>,
    pub prior_mode: PriorMode,
    pub odometry: OdometryParams,
    pub mapping: SlamParams,
    pub map_voxel: MapVoxel,
}

/// Voxel size of the exported dense map (meters).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MapVoxel(pub f64);

impl Default for MapVoxel {
    fn default() -> Self {
        MapVoxel(0.05)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    /// Sonar cloud (PLY), labeled image corners (`label,u,v` CSV) and intrinsics text.
    pub cloud: Option<PathBuf>,
    pub corners: Option<PathBuf>,
    pub intrinsics: Option<PathBuf>,
    /// Synthetic scene generated when no input files are given.
    pub fixture: Option<FixtureSpec>,
    pub extraction: ExtractionParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodInput {
    pub label: String,
    pub path: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub methods: Vec<MethodInput>,
    /// Every `*.tum` file in this directory becomes a method named after its stem.
    pub directory: Option<PathBuf>,
    pub reference: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Option<Mode>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub simulate: SimulateConfig,
    pub slam: SlamConfig,
    pub calibrate: CalibrateConfig,
    pub evaluate: EvaluateConfig,
    /// Relative input paths resolve against this directory; empty means the
    /// working directory, like `output_dir`.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, source: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| match toml_error(source, text, &e) {
            Error::Parse { path, line, msg } => Error::Config(format!("{path}:{line}: {msg}")),
            other => other,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Effective configuration, defaults filled in.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// SHA-256 of the effective configuration with the output directory cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        hex::encode(Sha256::digest(c.to_toml_string().as_bytes()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn existing(&self, p: &Option<PathBuf>, what: &str) -> Result<Option<PathBuf>> {
        match p {
            None => Ok(None),
            Some(p) => {
                let full = self.resolve(p);
                if full.is_file() {
                    Ok(Some(full))
                } else {
                    Err(Error::Config(format!("{what} file {} does not exist", full.display())))
                }
            }
        }
    }

    fn required(&self, p: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        self.existing(p, what)?
            .ok_or_else(|| Error::Config(format!("{what} file is required")))
    }

    /// Scenario selected by the simulate section, overrides applied.
    pub fn scenario(&self) -> Result<Scenario> {
        let s = &self.simulate;
        let mut scenario = match self.existing(&s.scenario_file, "scenario")? {
            Some(path) => Scenario::load(&path)?,
            None => Scenario::builtin(&s.scenario)
                .ok_or_else(|| Error::Config(format!("unknown built-in scenario {:?}", s.scenario)))?,
        };
        if let Some(spec) = s.spec {
            scenario.spec = spec;
        }
        if let Some(noise) = s.noise {
            scenario.noise = noise;
        }
        scenario.validate()?;
        Ok(scenario)
    }

    /// Checks the section for `mode` and returns its resolved input paths.
    pub fn validate(&self, mode: Mode) -> Result<ResolvedInputs> {
        let mut inputs = ResolvedInputs::default();
        match mode {
            Mode::Simulate => {
                self.scenario()?;
            }
            Mode::Slam => {
                let s = &self.slam;
                s.odometry.validate()?;
                s.mapping.validate()?;
                if !(s.map_voxel.0 > 0.0) {
                    return Err(Error::Config("map_voxel must be positive".into()));
                }
                inputs.scan_log = Some(self.required(&s.scan_log, "scan log")?);
                if s.prior_mode == PriorMode::External {
                    inputs.external = Some(self.required(&s.external, "external odometry")?);
                    inputs.extrinsic = Some(self.required(&s.extrinsic, "extrinsic")?);
                } else {
                    inputs.external = self.existing(&s.external, "external odometry")?;
                    inputs.extrinsic = self.existing(&s.extrinsic, "extrinsic")?;
                }
            }
            Mode::Calibrate => {
                let c = &self.calibrate;
                let given = [&c.cloud, &c.corners, &c.intrinsics];
                if given.iter().all(|p| p.is_none()) {
                    if c.fixture.is_none() {
                        return Err(Error::Config(
                            "calibrate needs cloud, corners and intrinsics files, or a fixture".into(),
                        ));
                    }
                } else {
                    inputs.cloud = Some(self.required(&c.cloud, "cloud")?);
                    inputs.corners = Some(self.required(&c.corners, "corners")?);
                    inputs.intrinsics = Some(self.required(&c.intrinsics, "intrinsics")?);
                }
            }
            Mode::Evaluate => {
                let e = &self.evaluate;
                for m in &e.methods {
                    let p = self.required(&Some(m.path.clone()), &format!("trajectory for {:?}", m.label))?;
                    inputs.methods.push((m.label.clone(), p));
                }
                if let Some(dir) = &e.directory {
                    let dir = self.resolve(dir);
                    let listing = std::fs::read_dir(&dir)
                        .map_err(|err| Error::Config(format!("{}: {err}", dir.display())))?;
                    let mut found: Vec<PathBuf> = listing
                        .filter_map(|d| d.ok().map(|d| d.path()))
                        .filter(|p| p.extension().is_some_and(|x| x == "tum"))
                        .collect();
                    found.sort();
                    for p in found {
                        let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                        inputs.methods.push((label, p));
                    }
                }
                if inputs.methods.is_empty() {
                    return Err(Error::Config("evaluate needs at least one trajectory".into()));
                }
                inputs.reference = self.existing(&e.reference, "reference trajectory")?;
            }
        }
        Ok(inputs)
    }
}

/// Input files after path resolution and existence checks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResolvedInputs {
    pub scan_log: Option<PathBuf>,
    pub external: Option<PathBuf>,
    pub extrinsic: Option<PathBuf>,
    pub cloud: Option<PathBuf>,
    pub corners: Option<PathBuf>,
    pub intrinsics: Option<PathBuf>,
    pub methods: Vec<(String, PathBuf)>,
    pub reference: Option<PathBuf>,
}
