//! Scenario files: environment, sensor, noise, trajectory and external
//! odometry settings in one TOML document, plus the bundled scenarios.
//!
//! ```toml
//! name = "example"
//! [spec]                 # SonarSpec fields, all optional
//! [noise]                # NoiseConfig fields, all optional
//! [trajectory]
//! speed = 1.0
//! waypoints = [{ position = [0, 0, 0], rpy_deg = [0, 0, 0] }, ...]
//! [external_odometry]    # rate, drift and noise_sigma as [ωx, ωy, ωz, vx, vy, vz]
//! [extrinsic]            # camera-from-sonar: translation and quaternion [x, y, z, w]
//! [[environment.surfaces]]
//! type = "box"
//! min = [..]
//! max = [..]
//! material = { reflectivity = 0.9, roughness = 0.8, mirror_gain = 0.0 }
//! ```

use std::path::Path;

use nalgebra::{Matrix3, Point3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::environment::{Environment, Material, Shape};
use super::motion::{generate_trajectory, simulate_external_odometry};
use super::multipath::inject_multipath;
use super::sensor::cast_scan;
use super::spec::{NoiseConfig, SonarSpec};
use crate::geometry::{Pose, Scan, Twist};
use crate::{Error, Result};

pub const BUILTIN_SCENARIOS: [&str; 4] = ["tunnel_loop", "zigzag", "container_loop", "empty"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: [f64; 3],
    #[serde(default)]
    pub rpy_deg: [f64; 3],
}

impl Waypoint {
    pub fn new(x: f64, y: f64, z: f64, yaw_deg: f64) -> Self {
        Self {
            position: [x, y, z],
            rpy_deg: [0.0, 0.0, yaw_deg],
        }
    }

    pub fn pose(&self) -> Pose {
        let [r, p, y] = self.rpy_deg.map(f64::to_radians);
        Pose::from_rpy(Vector3::from(self.position), r, p, y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub speed: f64,
    pub waypoints: Vec<Waypoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalOdometrySpec {
    pub rate: f64,
    /// Per-second body-frame bias `[ωx, ωy, ωz, vx, vy, vz]`.
    pub drift: [f64; 6],
    /// Per-increment white noise, same ordering.
    pub noise_sigma: [f64; 6],
}

impl Default for ExternalOdometrySpec {
    fn default() -> Self {
        Self {
            rate: 30.0,
            drift: [0.0, 0.0, 0.001, 0.004, 0.002, 0.001],
            noise_sigma: [2e-4, 2e-4, 2e-4, 5e-4, 5e-4, 5e-4],
        }
    }
}

/// Camera-from-sonar transform: `x_camera = R·x_sonar + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicSpec {
    pub translation: [f64; 3],
    /// Quaternion `[x, y, z, w]`.
    pub rotation: [f64; 4],
}

impl ExtrinsicSpec {
    pub fn from_pose(p: &Pose) -> Self {
        let p = p.canonical();
        let q = p.rotation.coords;
        Self {
            translation: p.translation.into(),
            rotation: [q.x, q.y, q.z, q.w],
        }
    }

    pub fn pose(&self) -> Pose {
        let [x, y, z, w] = self.rotation;
        Pose::new(
            UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)),
            Vector3::from(self.translation),
        )
    }
}

impl Default for ExtrinsicSpec {
    /// Optical-frame camera (z forward, x right, y down) 10 cm above and 5 cm ahead of the sonar.
    fn default() -> Self {
        let r = Rotation3::from_matrix_unchecked(Matrix3::new(
            0.0, -1.0, 0.0, //
            0.0, 0.0, -1.0, //
            1.0, 0.0, 0.0,
        ));
        let camera_in_sonar = Vector3::new(0.05, 0.0, 0.10);
        let rotation = UnitQuaternion::from_rotation_matrix(&r);
        Self::from_pose(&Pose::new(rotation, -(rotation * camera_in_sonar)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub spec: SonarSpec,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub external_odometry: ExternalOdometrySpec,
    #[serde(default)]
    pub extrinsic: ExtrinsicSpec,
    #[serde(default)]
    pub environment: Environment,
}

/// Everything a simulation run produces.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationRun {
    /// Sonar-to-world poses, one per scan.
    pub truth: Vec<Pose>,
    pub scans: Vec<Scan>,
    /// Drifting camera trajectory at the external odometry rate.
    pub external: Vec<Pose>,
    /// Camera-from-sonar.
    pub extrinsic: Pose,
}

pub(crate) fn toml_error(source: &str, text: &str, e: &toml::de::Error) -> Error {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
        .unwrap_or(0);
    Error::parse(source, line, e.message().to_string())
}

impl Scenario {
    pub fn from_toml_str(text: &str, source: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| toml_error(source, text, &e))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.noise.validate()?;
        self.environment.validate()?;
        if self.trajectory.waypoints.len() < 2 {
            return Err(Error::Config("trajectory needs at least 2 waypoints".into()));
        }
        if !(self.trajectory.speed > 0.0) {
            return Err(Error::Config("trajectory speed must be positive".into()));
        }
        if self.external_odometry.rate < self.spec.rate {
            return Err(Error::Config(
                "external odometry rate must be at least the sonar rate".into(),
            ));
        }
        let q = self.extrinsic.rotation;
        if (q.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() > 1e-6 {
            return Err(Error::Config("extrinsic quaternion must be unit length".into()));
        }
        Ok(())
    }

    pub fn builtin(name: &str) -> Option<Scenario> {
        match name {
            "tunnel_loop" => Some(tunnel_loop()),
            "zigzag" => Some(zigzag()),
            "container_loop" => Some(container_loop()),
            "empty" => Some(empty()),
            _ => None,
        }
    }

    pub fn waypoints(&self) -> Vec<Pose> {
        self.trajectory.waypoints.iter().map(Waypoint::pose).collect()
    }

    /// Ground-truth sonar poses at the sonar rate.
    pub fn truth(&self) -> Result<Vec<Pose>> {
        generate_trajectory(&self.waypoints(), self.trajectory.speed, self.spec.rate)
    }

    /// Simulates scans and the external odometry stream. `seed` replaces `noise.seed`.
    pub fn simulate(&self, seed: u64) -> Result<SimulationRun> {
        self.validate()?;
        let truth = self.truth()?;
        let noise = self.noise.with_seed(seed);
        let scans: Vec<Scan> = truth
            .par_iter()
            .enumerate()
            .map(|(k, pose)| {
                let n = noise.for_scan(k as u64);
                let scan = cast_scan(&self.environment, pose, &self.spec, &n);
                inject_multipath(&scan, &self.environment, pose, &self.spec, &n)
            })
            .collect();
        let extrinsic = self.extrinsic.pose();
        let camera_truth: Vec<Pose> = truth
            .iter()
            .map(|s| s.compose(&extrinsic.inverse()).with_stamp(s.stamp.unwrap_or(0.0)))
            .collect();
        let external = simulate_external_odometry(
            &camera_truth,
            self.external_odometry.rate,
            &Twist::from(self.external_odometry.drift),
            &Twist::from(self.external_odometry.noise_sigma),
            seed,
        )?;
        Ok(SimulationRun {
            truth,
            scans,
            external,
            extrinsic,
        })
    }
}

fn slab(min: [f64; 3], max: [f64; 3]) -> Shape {
    Shape::Box {
        min: Point3::from(min),
        max: Point3::from(max),
    }
}

/// Boxes against a straight wall running along `axis` (0 = x, 1 = y) from `from` to `to`.
/// `face` is the wall surface coordinate and `inward` the sign pointing into the corridor.
fn clutter(
    env: &mut Environment,
    rng: &mut ChaCha8Rng,
    axis: usize,
    from: f64,
    to: f64,
    face: f64,
    inward: f64,
) {
    let other = 1 - axis;
    let mut s = from + rng.random_range(0.5..2.0);
    while s < to - 0.5 {
        let width = rng.random_range(0.4..1.4);
        let depth = rng.random_range(0.25..0.9);
        let height: f64 = rng.random_range(0.4..2.6);
        let hanging = rng.random_bool(0.25);
        let (z0, z1) = if hanging {
            (1.5 - height.min(1.2), 1.5)
        } else {
            (-1.5, -1.5 + height)
        };
        let mut min = [0.0, 0.0, z0];
        let mut max = [0.0, 0.0, z1];
        min[axis] = s;
        max[axis] = (s + width).min(to);
        let (a, b) = (face, face + inward * depth);
        min[other] = a.min(b);
        max[other] = a.max(b);
        if max[axis] - min[axis] > 0.1 {
            env.push(slab(min, max), Material::CONCRETE);
        }
        s += width + rng.random_range(0.8..3.5);
    }
}

/// Low rocks on the floor and ceiling of the axis-aligned region `[x0,x1]×[y0,y1]`,
/// skipping anything that overlaps `hole`.
fn rubble(env: &mut Environment, rng: &mut ChaCha8Rng, region: [f64; 4], hole: [f64; 4], count: usize) {
    let mut placed = 0;
    while placed < count {
        let x = rng.random_range(region[0]..region[1]);
        let y = rng.random_range(region[2]..region[3]);
        let sx: f64 = rng.random_range(0.2..0.7);
        let sy: f64 = rng.random_range(0.2..0.7);
        let h: f64 = rng.random_range(0.15..0.6);
        let ceiling = rng.random_bool(0.35);
        let inside_hole = x + sx > hole[0] && x < hole[1] && y + sy > hole[2] && y < hole[3];
        if inside_hole || x + sx > region[1] || y + sy > region[3] {
            continue;
        }
        let (z0, z1) = if ceiling { (1.5 - h, 1.5) } else { (-1.5, -1.5 + h) };
        env.push(slab([x, y, z0], [x + sx, y + sy, z1]), Material::ROCK);
        placed += 1;
    }
}

fn loop_environment() -> Environment {
    let mut env = Environment::default();
    let rock = Material::ROCK;
    env.push(slab([-4.0, -4.0, -2.5], [34.0, 24.0, -1.5]), rock);
    env.push(slab([-4.0, -4.0, 1.5], [34.0, 24.0, 2.5]), rock);
    env.push(slab([-4.0, -4.0, -2.5], [-3.0, 24.0, 2.5]), rock);
    env.push(slab([33.0, -4.0, -2.5], [34.0, 24.0, 2.5]), rock);
    env.push(slab([-4.0, -4.0, -2.5], [34.0, -3.0, 2.5]), rock);
    env.push(slab([-4.0, 23.0, -2.5], [34.0, 24.0, 2.5]), rock);
    env.push(slab([3.0, 3.0, -2.5], [27.0, 17.0, 2.5]), Material::CONCRETE);

    let mut rng = ChaCha8Rng::seed_from_u64(20);
    // outer walls
    clutter(&mut env, &mut rng, 0, -3.0, 33.0, -3.0, 1.0);
    clutter(&mut env, &mut rng, 0, -3.0, 33.0, 23.0, -1.0);
    clutter(&mut env, &mut rng, 1, -3.0, 23.0, -3.0, 1.0);
    clutter(&mut env, &mut rng, 1, -3.0, 23.0, 33.0, -1.0);
    // inner block
    clutter(&mut env, &mut rng, 0, 3.0, 27.0, 3.0, -1.0);
    clutter(&mut env, &mut rng, 0, 3.0, 27.0, 17.0, 1.0);
    clutter(&mut env, &mut rng, 1, 3.0, 17.0, 3.0, -1.0);
    clutter(&mut env, &mut rng, 1, 3.0, 17.0, 27.0, 1.0);
    rubble(&mut env, &mut rng, [-3.0, 33.0, -3.0, 23.0], [3.0, 27.0, 3.0, 17.0], 240);
    env
}

fn loop_waypoints() -> Vec<Waypoint> {
    [
        (10.0, 0.0, 0.0),
        (26.0, 0.0, 0.0),
        (30.0, 3.0, 90.0),
        (30.0, 16.0, 90.0),
        (27.0, 20.0, 180.0),
        (4.0, 20.0, 180.0),
        (0.0, 17.0, 270.0),
        (0.0, 4.0, 270.0),
        (3.0, 0.0, 360.0),
        (10.0, 0.0, 360.0),
    ]
    .iter()
    .map(|&(x, y, yaw)| Waypoint::new(x, y, 0.0, yaw))
    .collect()
}

/// Closed 92 m loop around a rectangular block in a 6 m wide corridor with cluttered walls.
pub fn tunnel_loop() -> Scenario {
    Scenario {
        name: "tunnel_loop".into(),
        spec: SonarSpec::default(),
        noise: NoiseConfig::default(),
        trajectory: TrajectorySpec {
            speed: 1.0,
            waypoints: loop_waypoints(),
        },
        external_odometry: ExternalOdometrySpec::default(),
        extrinsic: ExtrinsicSpec::default(),
        environment: loop_environment(),
    }
}

/// Straight cluttered tunnel traversed with abrupt ±35° heading swings.
pub fn zigzag() -> Scenario {
    let mut env = Environment::default();
    let rock = Material::ROCK;
    env.push(slab([-4.0, -4.0, -2.5], [44.0, 4.0, -1.5]), rock);
    env.push(slab([-4.0, -4.0, 1.5], [44.0, 4.0, 2.5]), rock);
    env.push(slab([-4.0, -4.0, -2.5], [44.0, -3.0, 2.5]), rock);
    env.push(slab([-4.0, 3.0, -2.5], [44.0, 4.0, 2.5]), rock);
    env.push(slab([-4.0, -4.0, -2.5], [-3.0, 4.0, 2.5]), rock);
    env.push(slab([43.0, -4.0, -2.5], [44.0, 4.0, 2.5]), rock);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    clutter(&mut env, &mut rng, 0, -3.0, 43.0, -3.0, 1.0);
    clutter(&mut env, &mut rng, 0, -3.0, 43.0, 3.0, -1.0);

    let mut waypoints = Vec::new();
    let mut x = 2.0;
    let mut k = 0;
    while x <= 38.0 + 1e-9 {
        let yaw = if k % 2 == 0 { 35.0 } else { -35.0 };
        waypoints.push(Waypoint::new(x, 0.0, 0.0, if k == 0 { 0.0 } else { yaw }));
        x += 0.4;
        k += 1;
    }
    Scenario {
        name: "zigzag".into(),
        spec: SonarSpec::default(),
        noise: NoiseConfig::default(),
        trajectory: TrajectorySpec {
            speed: 0.5,
            waypoints,
        },
        external_odometry: ExternalOdometrySpec::default(),
        extrinsic: ExtrinsicSpec::default(),
        environment: env,
    }
}

/// The loop with an open-ended steel pipe straddling the first straight, multipath on.
pub fn container_loop() -> Scenario {
    let mut s = tunnel_loop();
    s.name = "container_loop".into();
    s.environment.push(
        Shape::Cylinder {
            base: Point3::new(15.0, 0.0, 0.0),
            axis: Vector3::x(),
            radius: 1.4,
            length: 6.0,
            cap_start: false,
            cap_end: false,
        },
        Material::STEEL,
    );
    s.noise.multipath_enable = true;
    s.noise.ring_artifact_enable = true;
    s
}

/// No surfaces at all; every scan is empty.
pub fn empty() -> Scenario {
    Scenario {
        name: "empty".into(),
        spec: SonarSpec::default(),
        noise: NoiseConfig::default(),
        trajectory: TrajectorySpec {
            speed: 1.0,
            waypoints: vec![Waypoint::new(0.0, 0.0, 0.0, 0.0), Waypoint::new(2.0, 0.0, 0.0, 0.0)],
        },
        external_odometry: ExternalOdometrySpec::default(),
        extrinsic: ExtrinsicSpec::default(),
        environment: Environment::default(),
    }
}
