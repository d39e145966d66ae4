//! Scripted trajectories and the drifting external odometry stream.

use rand::Rng;
use rand_distr::StandardNormal;

use super::sensor::{rng_for, EXTERNAL_STREAM};
use crate::geometry::{Pose, Twist};
use crate::{Error, Result};

/// Samples a piecewise trajectory through `waypoints` at constant `speed`.
///
/// Poses are spaced by arc length (`speed / rate` meters apart) with linear
/// translation and slerped rotation inside each segment. Stamps start at zero.
/// Zero-length segments contribute no samples, so coincident waypoints give a
/// single pose.
pub fn generate_trajectory(waypoints: &[Pose], speed: f64, rate: f64) -> Result<Vec<Pose>> {
    if waypoints.len() < 2 {
        return Err(Error::TooFew {
            what: "waypoints",
            needed: 2,
            got: waypoints.len(),
        });
    }
    if !(speed > 0.0 && rate > 0.0) {
        return Err(Error::Config("speed and rate must be positive".into()));
    }
    let lengths: Vec<f64> = waypoints
        .windows(2)
        .map(|w| (w[1].translation - w[0].translation).norm())
        .collect();
    let total: f64 = lengths.iter().sum();
    let step = speed / rate;
    let n = (total / step + 1e-9).floor() as usize + 1;

    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..n {
        let s = (k as f64 * step).min(total);
        while seg + 1 < lengths.len() && s > seg_start + lengths[seg] {
            seg_start += lengths[seg];
            seg += 1;
        }
        let frac = if lengths[seg] > 0.0 {
            ((s - seg_start) / lengths[seg]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let pose = waypoints[seg].interpolate(&waypoints[seg + 1], frac);
        out.push(pose.with_stamp(k as f64 / rate));
    }
    Ok(out)
}

/// Pose at time `t` by interpolating between neighboring stamps; clamps outside the range.
pub fn interpolate_trajectory(trajectory: &[Pose], t: f64) -> Option<Pose> {
    let stamp = |p: &Pose| p.stamp.unwrap_or(0.0);
    let first = trajectory.first()?;
    let last = trajectory.last()?;
    if t <= stamp(first) {
        return Some(first.with_stamp(t));
    }
    if t >= stamp(last) {
        return Some(last.with_stamp(t));
    }
    let i = trajectory.partition_point(|p| stamp(p) <= t);
    let (a, b) = (&trajectory[i - 1], &trajectory[i]);
    let s = (t - stamp(a)) / (stamp(b) - stamp(a));
    Some(a.interpolate(b, s).with_stamp(t))
}

/// Stand-in for a visual-inertial odometry stream.
///
/// The truth is resampled at `rate` and re-integrated from its first pose, each
/// body-frame increment perturbed by `exp(drift·dt + noise_sigma ⊙ n)` with
/// `n ~ N(0, I)`. `drift` is a per-second bias; `noise_sigma` is per increment.
pub fn simulate_external_odometry(
    truth: &[Pose],
    rate: f64,
    drift: &Twist,
    noise_sigma: &Twist,
    seed: u64,
) -> Result<Vec<Pose>> {
    if truth.is_empty() {
        return Ok(Vec::new());
    }
    if !(rate > 0.0) {
        return Err(Error::Config("external odometry rate must be positive".into()));
    }
    let t0 = truth[0].stamp.unwrap_or(0.0);
    let t1 = truth[truth.len() - 1].stamp.unwrap_or(t0);
    let n = ((t1 - t0) * rate + 1e-9).floor() as usize + 1;
    let dt = 1.0 / rate;
    let mut rng = rng_for(seed, EXTERNAL_STREAM);

    let mut out = Vec::with_capacity(n);
    let mut prev_truth = interpolate_trajectory(truth, t0).expect("non-empty");
    let mut current = prev_truth;
    out.push(current);
    for k in 1..n {
        let t = t0 + k as f64 * dt;
        let now = interpolate_trajectory(truth, t).expect("non-empty");
        let mut xi = drift * dt;
        for i in 0..6 {
            let z: f64 = rng.sample(StandardNormal);
            xi[i] += noise_sigma[i] * z;
        }
        current = current * prev_truth.between(&now) * Pose::exp(&xi);
        out.push(current.with_stamp(t));
        prev_truth = now;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn straight_segment_sample_count() {
        let wp = [Pose::identity(), Pose::from_translation(10.0, 0.0, 0.0)];
        let traj = generate_trajectory(&wp, 1.0, 5.0).unwrap();
        assert_eq!(traj.len(), 51);
        for (k, p) in traj.iter().enumerate() {
            assert!((p.translation.x - 0.2 * k as f64).abs() < 1e-12);
            assert!((p.stamp.unwrap() - 0.2 * k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn coincident_waypoints() {
        let p = Pose::from_translation(1.0, 2.0, 3.0);
        let traj = generate_trajectory(&[p, p], 1.0, 5.0).unwrap();
        assert!(traj.iter().all(|q| (q.translation - p.translation).norm() == 0.0));
        assert!(generate_trajectory(&[p], 1.0, 5.0).is_err());
    }

    #[test]
    fn closed_rectangle_returns_to_start() {
        let corners = [(0.0, 0.0), (4.0, 0.0), (4.0, 2.0), (0.0, 2.0), (0.0, 0.0)];
        let wp: Vec<Pose> = corners
            .iter()
            .map(|&(x, y)| Pose::from_translation(x, y, 0.0))
            .collect();
        let traj = generate_trajectory(&wp, 1.0, 5.0).unwrap();
        assert_eq!(traj.len(), 61);
        let gap = (traj[0].translation - traj[60].translation).norm();
        assert!(gap < 0.2 + 1e-9);
    }

    #[test]
    fn zero_drift_stream_is_resampled_truth() {
        let wp = [
            Pose::identity(),
            Pose::from_rpy(Vector3::new(5.0, 1.0, 0.0), 0.0, 0.0, 0.5),
        ];
        let truth = generate_trajectory(&wp, 1.0, 5.0).unwrap();
        let vio = simulate_external_odometry(&truth, 30.0, &Twist::zeros(), &Twist::zeros(), 1).unwrap();
        for p in &vio {
            let t = interpolate_trajectory(&truth, p.stamp.unwrap()).unwrap();
            let (dt, dr) = p.distance_to(&t);
            assert!(dt < 1e-9 && dr < 1e-9);
        }
    }

    #[test]
    fn z_bias_integrates() {
        let truth: Vec<Pose> = (0..=500)
            .map(|k| Pose::identity().with_stamp(k as f64 * 0.2))
            .collect();
        let mut drift = Twist::zeros();
        drift[5] = 0.01;
        let vio = simulate_external_odometry(&truth, 30.0, &drift, &Twist::zeros(), 0).unwrap();
        let last = vio.last().unwrap();
        assert!((last.stamp.unwrap() - 100.0).abs() < 1e-9);
        assert!((last.translation.z - 1.0).abs() < 1e-6);
    }

    #[test]
    fn stream_is_deterministic() {
        let truth = generate_trajectory(
            &[Pose::identity(), Pose::from_translation(3.0, 0.0, 0.0)],
            1.0,
            5.0,
        )
        .unwrap();
        let sigma = Twist::repeat(1e-3);
        let a = simulate_external_odometry(&truth, 30.0, &Twist::zeros(), &sigma, 5).unwrap();
        let b = simulate_external_odometry(&truth, 30.0, &Twist::zeros(), &sigma, 5).unwrap();
        assert_eq!(a, b);
    }
}
