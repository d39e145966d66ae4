//! Robust point-to-point ICP against a voxel map.

use nalgebra::{Matrix6, Point3, Vector3, Vector6};
use rayon::prelude::*;

use super::voxel_map::LocalMap;
use crate::geometry::{skew, PointCloud, Pose, Twist};
use crate::{Error, Result};

const CHUNK: usize = 512;
const MAX_HALVINGS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegistrationParams {
    /// Correspondences farther than this are ignored (meters).
    pub max_correspondence_distance: f64,
    /// Geman–McClure scale (meters).
    pub kernel_scale: f64,
    pub max_iterations: usize,
    /// Stop when the norm of the 6-vector update drops below this.
    pub convergence: f64,
}

impl RegistrationParams {
    /// Gating at `3σ` and kernel scale `σ/3` for an expected deviation `σ`.
    pub fn from_sigma(sigma: f64) -> Self {
        Self {
            max_correspondence_distance: 3.0 * sigma,
            kernel_scale: sigma / 3.0,
            ..Self::default()
        }
    }
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            max_correspondence_distance: 1.5,
            kernel_scale: 0.5 / 3.0,
            max_iterations: 100,
            convergence: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegistrationResult {
    pub pose: Pose,
    pub iterations: usize,
    pub inlier_rmse: f64,
    pub inlier_fraction: f64,
    pub converged: bool,
}

struct Association {
    pairs: Vec<(Point3<f64>, Point3<f64>)>,
    rmse: f64,
    fraction: f64,
    /// Robust objective over every scan point; unmatched points cost as much as the gate.
    cost: f64,
}

/// Geman–McClure loss on a squared residual; its derivative is the IRLS weight.
fn robust_loss(r2: f64, kernel: f64) -> f64 {
    kernel * r2 / (kernel + r2)
}

fn associate(map: &LocalMap, scan: &PointCloud, pose: &Pose, max_dist: f64, kernel: f64) -> Association {
    let max2 = max_dist * max_dist;
    let pairs: Vec<(Point3<f64>, Point3<f64>)> = scan
        .points()
        .par_iter()
        .filter_map(|p| {
            let pw = pose.transform_point(p);
            let (q, d2) = map.nearest(&pw)?;
            (d2 <= max2).then_some((pw, q))
        })
        .collect();
    let sse: f64 = pairs.iter().map(|(p, q)| (p - q).norm_squared()).sum();
    let rmse = if pairs.is_empty() {
        0.0
    } else {
        (sse / pairs.len() as f64).sqrt()
    };
    let unmatched = (scan.len() - pairs.len()) as f64;
    let cost = pairs
        .iter()
        .map(|(p, q)| robust_loss((p - q).norm_squared(), kernel))
        .sum::<f64>()
        + unmatched * robust_loss(max2, kernel);
    Association {
        fraction: pairs.len() as f64 / scan.len().max(1) as f64,
        rmse,
        pairs,
        cost,
    }
}

/// Gauss–Newton normal equations for a left perturbation `exp(δ)·T`.
/// Chunks are reduced in order so the sum does not depend on scheduling.
fn normal_equations(pairs: &[(Point3<f64>, Point3<f64>)], kernel: f64) -> (Matrix6<f64>, Vector6<f64>) {
    let partial: Vec<(Matrix6<f64>, Vector6<f64>)> = pairs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut h = Matrix6::zeros();
            let mut g = Vector6::zeros();
            for (p, q) in chunk {
                let r: Vector3<f64> = p - q;
                let r2 = r.norm_squared();
                let w = kernel * kernel / (kernel + r2).powi(2);
                let mut j = nalgebra::Matrix3x6::zeros();
                j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&p.coords)));
                j.fixed_view_mut::<3, 3>(0, 3).copy_from(&nalgebra::Matrix3::identity());
                h += j.transpose() * j * w;
                g += j.transpose() * r * w;
            }
            (h, g)
        })
        .collect();
    partial
        .into_iter()
        .fold((Matrix6::zeros(), Vector6::zeros()), |(h, g), (hi, gi)| (h + hi, g + gi))
}

/// Registers `scan` (sensor frame) against `map` starting from `init`.
///
/// Each iteration associates nearest neighbors within the gating distance,
/// solves the robust-weighted Gauss–Newton system and applies the update on
/// the left. An update that would raise the robust objective is halved until
/// it does not. When no fraction of the update helps, the pose is a local
/// minimum of the objective and the loop stops as converged. Running out of
/// iterations is the only way not to converge on a non-empty scan.
pub fn register(
    map: &LocalMap,
    scan: &PointCloud,
    init: &Pose,
    params: &RegistrationParams,
) -> Result<RegistrationResult> {
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    let stamp = init.stamp;
    if scan.is_empty() {
        return Ok(RegistrationResult {
            pose: *init,
            iterations: 0,
            inlier_rmse: 0.0,
            inlier_fraction: 0.0,
            converged: false,
        });
    }
    let max_dist = params.max_correspondence_distance;
    let mut pose = *init;
    let mut current = associate(map, scan, &pose, max_dist, params.kernel_scale);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iterations {
        if current.pairs.len() < 6 {
            break;
        }
        iterations += 1;
        let (h, g) = normal_equations(&current.pairs, params.kernel_scale);
        let Some(delta) = h.svd(true, true).solve(&(-g), 1e-12).ok() else {
            break;
        };
        let norm = delta.norm();
        if !norm.is_finite() {
            return Err(Error::Numerical("ICP update is not finite".into()));
        }
        if norm < params.convergence {
            let candidate = Pose::exp(&delta) * pose;
            let assoc = associate(map, scan, &candidate, max_dist, params.kernel_scale);
            if assoc.cost <= current.cost {
                pose = candidate;
                current = assoc;
            }
            converged = true;
            break;
        }
        let mut accepted = None;
        let mut step: Twist = delta;
        for _ in 0..=MAX_HALVINGS {
            let candidate = Pose::exp(&step) * pose;
            let assoc = associate(map, scan, &candidate, max_dist, params.kernel_scale);
            if assoc.pairs.len() >= 6 && assoc.cost <= current.cost {
                accepted = Some((candidate, assoc));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((candidate, assoc)) => {
                pose = candidate;
                current = assoc;
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    pose.stamp = stamp;
    Ok(RegistrationResult {
        pose,
        iterations,
        inlier_rmse: current.rmse,
        inlier_fraction: current.fraction,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{cast_scan, Material, NoiseConfig, Scenario, SonarSpec};

    fn tunnel_scan(pose: &Pose, noise: &NoiseConfig) -> PointCloud {
        let s = Scenario::builtin("tunnel_loop").unwrap();
        cast_scan(&s.environment, pose, &SonarSpec::default(), noise).cloud
    }

    #[test]
    fn empty_inputs() {
        let map = LocalMap::new(0.2, 20, 20.0);
        let scan: PointCloud = vec![Point3::new(1.0, 0.0, 0.0)].into_iter().collect();
        assert!(matches!(
            register(&map, &scan, &Pose::identity(), &RegistrationParams::default()),
            Err(Error::EmptyMap)
        ));
        let map = LocalMap::from_cloud(&scan, 0.2, 1000);
        let r = register(&map, &PointCloud::new(), &Pose::identity(), &RegistrationParams::default()).unwrap();
        assert!(!r.converged);
        assert_eq!(r.inlier_fraction, 0.0);
    }

    #[test]
    fn self_registration_is_identity() {
        let start = Scenario::builtin("tunnel_loop").unwrap().truth().unwrap()[0];
        let scan = tunnel_scan(&start, &NoiseConfig::noiseless());
        let map = LocalMap::from_cloud(&scan, 0.2, 1000);
        let r = register(&map, &scan, &Pose::identity(), &RegistrationParams::default()).unwrap();
        assert!(r.converged);
        let (dt, dr) = r.pose.distance_to(&Pose::identity());
        assert!(dt < 1e-6 && dr < 1e-6);
        assert!(r.inlier_rmse < 1e-9);
    }

    #[test]
    fn recovers_small_translation() {
        let start = Scenario::builtin("tunnel_loop").unwrap().truth().unwrap()[0];
        let scan = tunnel_scan(&start, &NoiseConfig::noiseless());
        let map = LocalMap::from_cloud(&scan, 0.2, 1000);
        let motion = Pose::from_translation(0.05, 0.0, 0.0);
        let moved = motion.inverse().transform_cloud(&scan);
        let r = register(&map, &moved, &Pose::identity(), &RegistrationParams::default()).unwrap();
        assert!(r.converged);
        assert!((r.pose.translation - motion.translation).norm() < 5e-3);
    }

    #[test]
    fn textured_wall_weights_are_bounded() {
        // a single flat wall constrains only three directions; the solver must stay finite
        let mut env = crate::sim::Environment::default();
        env.push(
            crate::sim::Shape::Box {
                min: Point3::new(4.0, -20.0, -20.0),
                max: Point3::new(5.0, 20.0, 20.0),
            },
            Material::IDEAL,
        );
        let scan = cast_scan(&env, &Pose::identity(), &SonarSpec::default(), &NoiseConfig::noiseless()).cloud;
        let map = LocalMap::from_cloud(&scan, 0.2, 1000);
        let r = register(&map, &scan, &Pose::from_translation(0.02, 0.0, 0.0), &RegistrationParams::default()).unwrap();
        assert!(r.pose.translation.x.abs() < 0.02);
    }
}
