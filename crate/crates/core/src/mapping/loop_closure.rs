//! Distance-based loop candidates and scan-to-submap verification.

use serde::{Deserialize, Serialize};

use super::graph::Factor;
use super::keyframe::Keyframe;
use crate::geometry::{PointCloud, Pose};
use crate::odometry::{register, LocalMap, RegistrationParams};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopParams {
    /// Search radius around the current keyframe (meters).
    pub r_loop: f64,
    /// Minimum stamp gap to a candidate (seconds).
    pub tau_time: f64,
    /// Submap half-window in keyframes.
    pub window: usize,
    pub max_rmse: f64,
    pub min_inliers: f64,
    /// Candidates verified per keyframe; the nearest accepted one wins.
    pub max_candidates: usize,
    /// Expected deviations for the coarse-to-fine registration stages (meters).
    pub stages: Vec<f64>,
    pub voxel_size: f64,
    pub max_points_per_voxel: usize,
    pub max_iterations: usize,
}

impl Default for LoopParams {
    fn default() -> Self {
        Self {
            r_loop: 5.0,
            tau_time: 30.0,
            window: 10,
            max_rmse: 0.3,
            min_inliers: 0.4,
            max_candidates: 3,
            stages: vec![0.5, 0.25, 0.1],
            voxel_size: 0.2,
            max_points_per_voxel: 20,
            max_iterations: 100,
        }
    }
}

impl LoopParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_loop > 0.0 && self.tau_time >= 0.0 && self.max_rmse > 0.0 && self.voxel_size > 0.0) {
            return Err(Error::Config("loop radius, rmse bound and voxel size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_inliers) {
            return Err(Error::Config("loop min_inliers outside [0, 1]".into()));
        }
        if self.stages.is_empty() || self.stages.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("loop verification needs positive stage sigmas".into()));
        }
        if self.max_points_per_voxel == 0 {
            return Err(Error::Config("loop max_points_per_voxel must be positive".into()));
        }
        Ok(())
    }
}

/// Indices of keyframes within `r_loop` of `current` and at least `tau_time`
/// older or newer, nearest first. Ties keep index order.
pub fn detect_candidates(keyframes: &[Keyframe], current: &Keyframe, r_loop: f64, tau_time: f64) -> Vec<usize> {
    let here = current.pose.position();
    let mut found: Vec<(f64, usize)> = keyframes
        .iter()
        .filter(|k| k.index != current.index && (k.stamp - current.stamp).abs() >= tau_time)
        .map(|k| ((k.pose.position() - here).norm(), k.index))
        .filter(|(d, _)| *d <= r_loop)
        .collect();
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    found.into_iter().map(|(_, i)| i).collect()
}

/// World-frame union of the scans of keyframes `t-w ..= t+w`, each placed at its current state.
pub fn build_submap(keyframes: &[Keyframe], t: usize, w: usize) -> PointCloud {
    let mut sorted: Vec<&Keyframe> = keyframes.iter().collect();
    sorted.sort_by_key(|k| k.index);
    let lo = t.saturating_sub(w);
    let hi = t.saturating_add(w);
    let mut out = PointCloud::new();
    for k in sorted.into_iter().filter(|k| (lo..=hi).contains(&k.index)) {
        out.extend(&k.pose.transform_cloud(&k.scan.cloud));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopVerification {
    /// Registered relative pose `X_t⁻¹·X_s`.
    pub relative: Pose,
    pub rmse: f64,
    pub inlier_fraction: f64,
    pub converged: bool,
    pub accepted: bool,
}

/// Registers `source` against `submap` (world frame), expressed relative to
/// `target`. `guess` is the current estimate of `X_t⁻¹·X_s`.
///
/// Registration runs once per entry of `params.stages`, each starting from the
/// previous result with a tighter gate. The last stage decides acceptance.
pub fn verify_loop(
    source: &Keyframe,
    target: &Keyframe,
    submap: &PointCloud,
    guess: &Pose,
    params: &LoopParams,
) -> Result<LoopVerification> {
    let local = target.pose.inverse().transform_cloud(submap);
    let map = LocalMap::from_cloud(&local, params.voxel_size, params.max_points_per_voxel);
    if map.is_empty() {
        return Err(Error::EmptyMap);
    }
    let mut pose = Pose { stamp: None, ..*guess };
    let mut last = None;
    for &sigma in &params.stages {
        let mut reg = RegistrationParams::from_sigma(sigma);
        reg.max_iterations = params.max_iterations;
        let r = register(&map, &source.scan.cloud, &pose, &reg)?;
        pose = r.pose;
        last = Some(r);
    }
    let r = last.expect("at least one stage");
    let accepted = r.converged && r.inlier_rmse <= params.max_rmse && r.inlier_fraction >= params.min_inliers;
    Ok(LoopVerification {
        relative: pose,
        rmse: r.inlier_rmse,
        inlier_fraction: r.inlier_fraction,
        converged: r.converged,
        accepted,
    })
}

/// Loop factor between `target` (i) and `source` (j) from an accepted verification.
///
/// The information is the odometry information scaled by `(σ_t / rmse)²`,
/// with the rmse floored at 1 cm.
pub fn loop_factor(
    target: &Keyframe,
    source: &Keyframe,
    v: &LoopVerification,
    odometry_information: &nalgebra::Matrix6<f64>,
    sigma_trans: f64,
) -> Factor {
    let scale = (sigma_trans / v.rmse.max(0.01)).powi(2);
    Factor::loop_closure(target.index, source.index, v.relative, odometry_information * scale, v.rmse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Scan;
    use nalgebra::Point3;

    fn kf(index: usize, x: f64, stamp: f64) -> Keyframe {
        let cloud: PointCloud = vec![Point3::new(index as f64, 0.0, 0.0)].into_iter().collect();
        Keyframe {
            index,
            frame: index,
            pose: Pose::from_translation(x, 0.0, 0.0),
            scan: Scan::new(stamp, cloud),
            stamp,
        }
    }

    #[test]
    fn candidates_by_distance_and_time() {
        let cur = kf(10, 0.0, 100.0);
        assert!(detect_candidates(&[], &cur, 5.0, 30.0).is_empty());
        let history = vec![kf(0, 3.0, 0.0), kf(1, 1.0, 10.0), kf(2, 8.0, 20.0), kf(3, 0.5, 90.0)];
        assert_eq!(detect_candidates(&history, &cur, 5.0, 30.0), vec![1, 0]);
    }

    #[test]
    fn submap_window() {
        let kfs: Vec<Keyframe> = (0..40).map(|i| kf(i, i as f64, i as f64)).collect();
        assert_eq!(build_submap(&kfs, 15, 10).len(), 21);
        assert_eq!(build_submap(&kfs, 3, 10).len(), 14);
        assert_eq!(build_submap(&kfs[..1], 0, 10).len(), 1);
        let mut shuffled = kfs.clone();
        shuffled.reverse();
        assert_eq!(build_submap(&shuffled, 15, 10), build_submap(&kfs, 15, 10));
    }
}
