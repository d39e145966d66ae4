//! Scan-to-map odometry with constant-velocity or external-odometry priors.

pub mod priors;
pub mod registration;
pub mod threshold;
pub mod voxel_map;

use serde::{Deserialize, Serialize};

pub use priors::{associate_external, constant_velocity_prior, external_prior};
pub use registration::{register, RegistrationParams, RegistrationResult};
pub use threshold::AdaptiveThreshold;
pub use voxel_map::{voxel_downsample, voxel_key, LocalMap};

use crate::geometry::{Pose, Scan};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    #[default]
    ConstantVelocity,
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdometryParams {
    pub voxel_size: f64,
    pub max_points_per_voxel: usize,
    pub max_map_range: f64,
    /// Sensor range used to turn rotation errors into displacements.
    pub max_range: f64,
    pub initial_threshold: f64,
    pub min_motion_threshold: f64,
    pub threshold_floor: f64,
    pub max_iterations: usize,
    pub convergence: f64,
    /// Registrations with a smaller inlier fraction count as failures.
    pub min_inlier_fraction: f64,
}

impl Default for OdometryParams {
    fn default() -> Self {
        Self {
            voxel_size: 0.2,
            max_points_per_voxel: 20,
            max_map_range: 20.0,
            max_range: 15.0,
            initial_threshold: 0.5,
            min_motion_threshold: 0.1,
            threshold_floor: 0.1,
            max_iterations: 100,
            convergence: 1e-4,
            min_inlier_fraction: 0.3,
        }
    }
}

impl OdometryParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.voxel_size,
            self.max_map_range,
            self.max_range,
            self.initial_threshold,
            self.threshold_floor,
            self.convergence,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.max_points_per_voxel == 0 {
            return Err(Error::Config("odometry sizes and thresholds must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_inlier_fraction) {
            return Err(Error::Config("min_inlier_fraction outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Time-ordered external trajectory plus the transform that moves its
/// increments into the sonar frame (sonar-from-camera for a camera stream).
#[derive(Clone, Debug, PartialEq)]
pub struct ExternalStream {
    pub poses: Vec<Pose>,
    pub delta: Pose,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub pose: Pose,
    pub prior: Pose,
    pub registration: RegistrationResult,
    /// True when registration was skipped or rejected and the prior became the pose.
    pub fallback: bool,
}

#[derive(Clone, Debug)]
pub struct OdometryState {
    params: OdometryParams,
    mode: PriorMode,
    external: Option<ExternalStream>,
    map: LocalMap,
    threshold: AdaptiveThreshold,
    prev: Option<Pose>,
    prev2: Option<Pose>,
}

impl OdometryState {
    pub fn new(params: OdometryParams, mode: PriorMode, external: Option<ExternalStream>) -> Result<Self> {
        params.validate()?;
        if mode == PriorMode::External && external.as_ref().is_none_or(|e| e.poses.is_empty()) {
            return Err(Error::Input("external prior mode needs a non-empty external stream".into()));
        }
        Ok(Self {
            map: LocalMap::new(params.voxel_size, params.max_points_per_voxel, params.max_map_range),
            threshold: AdaptiveThreshold::new(
                params.initial_threshold,
                params.min_motion_threshold,
                params.max_range,
                params.threshold_floor,
            ),
            params,
            mode,
            external,
            prev: None,
            prev2: None,
        })
    }

    pub fn map(&self) -> &LocalMap {
        &self.map
    }

    pub fn last_pose(&self) -> Option<&Pose> {
        self.prev.as_ref()
    }

    pub fn mode(&self) -> PriorMode {
        self.mode
    }

    fn prior(&self, stamp: f64) -> Result<Pose> {
        let Some(prev) = self.prev else {
            return Ok(Pose::identity().with_stamp(stamp));
        };
        let guess = match (self.mode, &self.external) {
            (PriorMode::External, Some(ext)) => {
                let a = associate_external(&ext.poses, prev.stamp.unwrap_or(stamp))?;
                let b = associate_external(&ext.poses, stamp)?;
                external_prior(&prev, &ext.delta, a, b)
            }
            _ => match self.prev2 {
                Some(prev2) => constant_velocity_prior(&prev, &prev2),
                None => prev,
            },
        };
        Ok(guess.with_stamp(stamp))
    }

    /// Processes the next scan; its stamp must be later than the previous one.
    pub fn step(&mut self, scan: &Scan) -> Result<StepOutcome> {
        if let Some(t) = self.prev.and_then(|p| p.stamp) {
            if !(scan.stamp > t) {
                return Err(Error::Input(format!(
                    "scan stamp {} is not after previous stamp {t}",
                    scan.stamp
                )));
            }
        }
        let prior = self.prior(scan.stamp)?;
        let first = self.prev.is_none();
        let (registration, fallback) = if self.map.is_empty() {
            let r = RegistrationResult {
                pose: prior,
                iterations: 0,
                inlier_rmse: 0.0,
                inlier_fraction: 0.0,
                converged: false,
            };
            (r, !first)
        } else {
            let mut reg = RegistrationParams::from_sigma(self.threshold.sigma());
            reg.max_iterations = self.params.max_iterations;
            reg.convergence = self.params.convergence;
            let r = register(&self.map, &scan.cloud, &prior, &reg)?;
            let failed = !r.converged || r.inlier_fraction < self.params.min_inlier_fraction;
            (r, failed)
        };
        let pose = if fallback || first { prior } else { registration.pose }.with_stamp(scan.stamp);
        if !fallback && !first {
            self.threshold.update(&prior.between(&pose));
        }
        if fallback {
            log::debug!(
                "registration fallback at t={:.3}: converged={} inliers={:.2}",
                scan.stamp,
                registration.converged,
                registration.inlier_fraction
            );
        }
        let down = voxel_downsample(&scan.cloud, self.params.voxel_size);
        self.map.insert_cloud(&down, &pose);
        self.map.crop(&pose.position());
        self.prev2 = self.prev;
        self.prev = Some(pose);
        Ok(StepOutcome {
            pose,
            prior,
            registration,
            fallback,
        })
    }
}

/// Free-function form of [`OdometryState::step`].
pub fn odometry_step(state: &mut OdometryState, scan: &Scan) -> Result<StepOutcome> {
    state.step(scan)
}

/// Runs odometry over a whole scan sequence.
pub fn run_odometry(
    scans: &[Scan],
    params: OdometryParams,
    mode: PriorMode,
    external: Option<ExternalStream>,
) -> Result<Vec<StepOutcome>> {
    let mut state = OdometryState::new(params, mode, external)?;
    scans.iter().map(|s| state.step(s)).collect()
}
