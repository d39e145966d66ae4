//! Initial guesses for scan registration.

use crate::geometry::Pose;
use crate::{Error, Result};

/// `T_prev · (T_prev2⁻¹ · T_prev)`: repeat the last increment.
pub fn constant_velocity_prior(prev: &Pose, prev2: &Pose) -> Pose {
    prev.compose(&prev2.between(prev))
}

/// Element of a time-ordered stream nearest to `t`; ties go to the earlier
/// element and times outside the stream clamp to its ends.
pub fn associate_external(stream: &[Pose], t: f64) -> Result<&Pose> {
    if stream.is_empty() {
        return Err(Error::Input("external odometry stream is empty".into()));
    }
    let stamp = |p: &Pose| p.stamp.unwrap_or(0.0);
    let i = stream.partition_point(|p| stamp(p) < t);
    if i == 0 {
        return Ok(&stream[0]);
    }
    if i == stream.len() {
        return Ok(&stream[i - 1]);
    }
    let (before, after) = (&stream[i - 1], &stream[i]);
    if t - stamp(before) <= stamp(after) - t {
        Ok(before)
    } else {
        Ok(after)
    }
}

/// `T_prev · (sT″⁻¹ · sT′)` with `sT = ΔT · T_ext · ΔT⁻¹`: the external
/// increment between the two associated poses, moved into the sonar frame.
///
/// `delta` is the sonar-from-camera transform when the stream is a camera trajectory.
pub fn external_prior(prev: &Pose, delta: &Pose, ext_prev: &Pose, ext_now: &Pose) -> Pose {
    let a = Pose::conjugate(delta, ext_prev);
    let b = Pose::conjugate(delta, ext_now);
    let mut out = prev.compose(&a.between(&b));
    out.stamp = ext_now.stamp.or(prev.stamp);
    out
}
