//! Odometry, keyframing, loop closure and pose-graph optimization in one pass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::{isotropic_information, Factor, OptimizeReport, OptimizerParams, PoseGraph};
use super::keyframe::{moved_enough, Keyframe, KeyframeParams};
use super::loop_closure::{build_submap, detect_candidates, loop_factor, verify_loop, LoopParams, LoopVerification};
use crate::geometry::{Pose, Scan};
use crate::odometry::{ExternalStream, OdometryParams, OdometryState, PriorMode, StepOutcome};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlamParams {
    pub keyframe: KeyframeParams,
    pub loops: LoopParams,
    pub optimizer: OptimizerParams,
    /// Odometry factor sigmas, meters and degrees.
    pub odometry_sigma_trans: f64,
    pub odometry_sigma_rot: f64,
    /// Optimize after every accepted loop, not only at the end.
    pub incremental: bool,
    pub enable_loops: bool,
}

impl Default for SlamParams {
    fn default() -> Self {
        Self {
            keyframe: KeyframeParams::default(),
            loops: LoopParams::default(),
            optimizer: OptimizerParams::default(),
            odometry_sigma_trans: 0.05,
            odometry_sigma_rot: 1.0,
            incremental: true,
            enable_loops: true,
        }
    }
}

impl SlamParams {
    pub fn validate(&self) -> Result<()> {
        self.loops.validate()?;
        if !(self.odometry_sigma_trans > 0.0 && self.odometry_sigma_rot > 0.0) {
            return Err(crate::Error::Config("odometry factor sigmas must be positive".into()));
        }
        Ok(())
    }

    pub fn odometry_information(&self) -> nalgebra::Matrix6<f64> {
        isotropic_information(self.odometry_sigma_rot.to_radians(), self.odometry_sigma_trans)
    }
}

/// One verified loop attempt, accepted or not.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopAttempt {
    pub source: usize,
    pub target: usize,
    pub verification: LoopVerification,
}

#[derive(Clone, Debug)]
pub struct SlamOutput {
    /// Raw odometry pose for every scan.
    pub odometry: Vec<Pose>,
    pub steps: Vec<StepOutcome>,
    /// Keyframes with their optimized states.
    pub keyframes: Vec<Keyframe>,
    pub graph: PoseGraph,
    /// Every scan pose after propagating the keyframe corrections.
    pub optimized: Vec<Pose>,
    pub loop_attempts: Vec<LoopAttempt>,
    pub optimizations: Vec<OptimizeReport>,
}

impl SlamOutput {
    pub fn fallback_count(&self) -> usize {
        self.steps.iter().filter(|s| s.fallback).count()
    }

    pub fn accepted_loops(&self) -> usize {
        self.graph.loop_factors().count()
    }
}

/// Incremental SLAM over a scan sequence.
pub struct Slam {
    params: SlamParams,
    odometry: OdometryState,
    graph: PoseGraph,
    keyframes: Vec<Keyframe>,
    /// Odometry pose of each keyframe, before any correction.
    keyframe_odometry: Vec<Pose>,
    odometry_poses: Vec<Pose>,
    steps: Vec<StepOutcome>,
    attempts: Vec<LoopAttempt>,
    reports: Vec<OptimizeReport>,
}

impl Slam {
    pub fn new(
        odometry: OdometryParams,
        mode: PriorMode,
        external: Option<ExternalStream>,
        params: SlamParams,
    ) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            odometry: OdometryState::new(odometry, mode, external)?,
            params,
            graph: PoseGraph::default(),
            keyframes: Vec::new(),
            keyframe_odometry: Vec::new(),
            odometry_poses: Vec::new(),
            steps: Vec::new(),
            attempts: Vec::new(),
            reports: Vec::new(),
        })
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn graph(&self) -> &PoseGraph {
        &self.graph
    }

    /// Runs odometry on `scan` and, when it becomes a keyframe, extends the graph
    /// and looks for a loop.
    pub fn process(&mut self, scan: &Scan) -> Result<StepOutcome> {
        let step = self.odometry.step(scan)?;
        let frame = self.odometry_poses.len();
        self.odometry_poses.push(step.pose);
        self.steps.push(step);

        let last_odom = self.keyframe_odometry.last();
        let candidate_pose = match (self.keyframes.last(), last_odom) {
            (Some(kf), Some(odom)) => kf.pose * odom.between(&step.pose),
            _ => step.pose,
        };
        // selection compares raw odometry so corrections do not trigger keyframes
        let is_kf = last_odom.is_none_or(|o| moved_enough(o, &step.pose, &self.params.keyframe));
        if !is_kf {
            return Ok(step);
        }
        let index = self.keyframes.len();
        let kf = Keyframe {
            index,
            frame,
            pose: candidate_pose.with_stamp(scan.stamp),
            scan: scan.clone(),
            stamp: scan.stamp,
        };
        self.graph.states.push(kf.pose);
        if let Some(odom) = self.keyframe_odometry.last() {
            let z = odom.between(&step.pose);
            self.graph
                .add_factor(Factor::odometry(index - 1, Pose { stamp: None, ..z }, self.params.odometry_information()))?;
        }
        self.keyframes.push(kf);
        self.keyframe_odometry.push(step.pose);

        if self.params.enable_loops && self.try_close_loop(index)? && self.params.incremental {
            self.optimize()?;
        }
        Ok(step)
    }

    fn try_close_loop(&mut self, index: usize) -> Result<bool> {
        let lp = &self.params.loops;
        let current = &self.keyframes[index];
        let candidates = detect_candidates(&self.keyframes, current, lp.r_loop, lp.tau_time);
        if candidates.is_empty() {
            return Ok(false);
        }
        let chosen: Vec<usize> = candidates.into_iter().take(lp.max_candidates.max(1)).collect();
        let results: Vec<Result<LoopVerification>> = chosen
            .par_iter()
            .map(|&t| {
                let target = &self.keyframes[t];
                let submap = build_submap(&self.keyframes, t, lp.window);
                let guess = target.pose.between(&current.pose);
                verify_loop(current, target, &submap, &guess, lp)
            })
            .collect();
        for (&t, v) in chosen.iter().zip(results) {
            let v = v?;
            self.attempts.push(LoopAttempt {
                source: index,
                target: t,
                verification: v,
            });
            if v.accepted {
                let f = loop_factor(
                    &self.keyframes[t],
                    &self.keyframes[index],
                    &v,
                    &self.params.odometry_information(),
                    self.params.odometry_sigma_trans,
                );
                self.graph.add_factor(f)?;
                log::debug!("loop {t} -> {index}: rmse {:.3} inliers {:.2}", v.rmse, v.inlier_fraction);
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn optimize(&mut self) -> Result<()> {
        let report = self.graph.optimize(&self.params.optimizer)?;
        for (kf, x) in self.keyframes.iter_mut().zip(&self.graph.states) {
            kf.pose = *x;
        }
        self.reports.push(report);
        Ok(())
    }

    /// Runs the final optimization and corrects every scan pose.
    pub fn finish(mut self) -> Result<SlamOutput> {
        if self.graph.loop_factors().next().is_some() {
            self.optimize()?;
        }
        let optimized = correct_trajectory(&self.odometry_poses, &self.keyframes, &self.keyframe_odometry);
        Ok(SlamOutput {
            odometry: self.odometry_poses,
            steps: self.steps,
            keyframes: self.keyframes,
            graph: self.graph,
            optimized,
            loop_attempts: self.attempts,
            optimizations: self.reports,
        })
    }
}

/// Applies keyframe corrections `X_k·O_k⁻¹` to every odometry pose, blending
/// the corrections of the surrounding keyframes by stamp.
pub fn correct_trajectory(odometry: &[Pose], keyframes: &[Keyframe], keyframe_odometry: &[Pose]) -> Vec<Pose> {
    if keyframes.is_empty() {
        return odometry.to_vec();
    }
    let corrections: Vec<Pose> = keyframes
        .iter()
        .zip(keyframe_odometry)
        .map(|(k, o)| k.pose * o.inverse())
        .collect();
    let frames: Vec<usize> = keyframes.iter().map(|k| k.frame).collect();
    let stamp = |p: &Pose| p.stamp.unwrap_or(0.0);
    odometry
        .iter()
        .enumerate()
        .map(|(f, o)| {
            let next = frames.partition_point(|&k| k <= f);
            let c = if next == 0 {
                corrections[0]
            } else if next == frames.len() {
                corrections[next - 1]
            } else {
                let (a, b) = (next - 1, next);
                let (ta, tb) = (stamp(&odometry[frames[a]]), stamp(&odometry[frames[b]]));
                let s = if tb > ta { (stamp(o) - ta) / (tb - ta) } else { 0.0 };
                corrections[a].interpolate(&corrections[b], s.clamp(0.0, 1.0))
            };
            let mut p = c * *o;
            p.stamp = o.stamp;
            p
        })
        .collect()
}

/// Runs [`Slam`] over all scans.
pub fn run_slam(
    scans: &[Scan],
    odometry: OdometryParams,
    mode: PriorMode,
    external: Option<ExternalStream>,
    params: SlamParams,
) -> Result<SlamOutput> {
    let mut slam = Slam::new(odometry, mode, external, params)?;
    for scan in scans {
        slam.process(scan)?;
    }
    slam.finish()
}
