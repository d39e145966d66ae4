//! Stamp matching, first-k rigid alignment, re-visitation error and ATE.

use nalgebra::{Point3, UnitQuaternion, Vector3};

use crate::geometry::{rigid_align, Pose};
use crate::{Error, Result};

/// Maximum stamp difference for two poses to count as the same instant (seconds).
pub const STAMP_TOLERANCE: f64 = 0.05;

/// Number of leading poses used for alignment.
pub const ALIGN_POSES: usize = 5;

/// For every pose of `est`, the index of the `reference` pose with the nearest
/// stamp, if within `tolerance`. Poses without stamps never match.
pub fn match_by_stamp(est: &[Pose], reference: &[Pose], tolerance: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<(f64, usize)> = reference
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.stamp.map(|s| (s, i)))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = Vec::new();
    for (i, p) in est.iter().enumerate() {
        let Some(s) = p.stamp else { continue };
        let at = order.partition_point(|(t, _)| *t < s);
        let best = [at.checked_sub(1), Some(at)]
            .into_iter()
            .flatten()
            .filter_map(|k| order.get(k))
            .min_by(|a, b| (a.0 - s).abs().total_cmp(&(b.0 - s).abs()));
        if let Some(&(t, j)) = best {
            if (t - s).abs() <= tolerance {
                out.push((i, j));
            }
        }
    }
    out
}

/// Rigid transform mapping `est` onto `reference`, fitted on the positions of
/// the first `k` stamp-matched pairs.
///
/// When those positions are (nearly) collinear the rotation about their common
/// line is taken from the orientations of the first matched pair instead.
/// Second principal variance below this fraction of the first counts as a line.
const COLLINEAR_RATIO: f64 = 1e-3;

pub fn fit_first_k(est: &[Pose], reference: &[Pose], k: usize) -> Result<Pose> {
    if k == 0 {
        return Err(Error::Config("alignment needs k >= 1".into()));
    }
    let pairs = match_by_stamp(est, reference, STAMP_TOLERANCE);
    if pairs.len() < k {
        return Err(Error::TooFew {
            what: "stamp-matched poses for alignment",
            needed: k,
            got: pairs.len(),
        });
    }
    let pairs = &pairs[..k];
    let src: Vec<Point3<f64>> = pairs.iter().map(|&(i, _)| est[i].position()).collect();
    let dst: Vec<Point3<f64>> = pairs.iter().map(|&(_, j)| reference[j].position()).collect();

    let variance = principal_variances(&src);
    if variance[1] > COLLINEAR_RATIO * variance[0].max(1e-24) {
        return rigid_align(&src, &dst).ok_or_else(|| Error::Numerical("alignment failed".into()));
    }
    let (i0, j0) = pairs[0];
    let mut rotation = reference[j0].rotation * est[i0].rotation.inverse();
    let d_src = src[k - 1] - src[0];
    let d_dst = dst[k - 1] - dst[0];
    if d_src.norm() > 1e-9 && d_dst.norm() > 1e-9 {
        if let Some(fix) = UnitQuaternion::rotation_between(&(rotation * d_src), &d_dst) {
            rotation = fix * rotation;
        }
    }
    let n = k as f64;
    let cs = src.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let cd = dst.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    Ok(Pose::new(rotation, cd - rotation * cs))
}

/// Covariance eigenvalues, descending.
fn principal_variances(points: &[Point3<f64>]) -> [f64; 3] {
    let n = points.len() as f64;
    let c = points.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n;
    let mut cov = nalgebra::Matrix3::zeros();
    for p in points {
        let d = p.coords - c;
        cov += d * d.transpose();
    }
    let mut ev: Vec<f64> = (cov / n).symmetric_eigenvalues().iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    [ev[0], ev[1], ev[2]]
}

/// Applies [`fit_first_k`] to every pose of `est`. Stamps are kept.
pub fn align_first_k(est: &[Pose], reference: &[Pose], k: usize) -> Result<Vec<Pose>> {
    let t = fit_first_k(est, reference, k)?;
    Ok(est
        .iter()
        .map(|p| Pose {
            stamp: p.stamp,
            ..t * *p
        })
        .collect())
}

/// Distance between the first and last positions.
pub fn revisitation_error(traj: &[Pose]) -> Result<f64> {
    match traj {
        [first, .., last] => Ok((last.position() - first.position()).norm()),
        _ => Err(Error::TooFew {
            what: "poses for re-visitation error",
            needed: 2,
            got: traj.len(),
        }),
    }
}

/// Root-mean-square position difference over stamp-matched pairs.
pub fn ate_rmse(est: &[Pose], reference: &[Pose]) -> Result<f64> {
    let pairs = match_by_stamp(est, reference, STAMP_TOLERANCE);
    if pairs.is_empty() {
        return Err(Error::Input("no stamp-matched poses for ATE".into()));
    }
    let sum: f64 = pairs
        .iter()
        .map(|&(i, j)| (est[i].position() - reference[j].position()).norm_squared())
        .sum();
    Ok((sum / pairs.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::test_util::pose_close;
    use proptest::prelude::*;

    fn wiggle(n: usize) -> Vec<Pose> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 0.2;
                Pose::from_rpy(Vector3::new(t, (0.7 * t).sin(), 0.1 * t), 0.0, 0.0, 0.3 * t).with_stamp(t)
            })
            .collect()
    }

    #[test]
    fn stamp_matching_tolerance() {
        let reference: Vec<Pose> = (0..10).map(|i| Pose::identity().with_stamp(i as f64 * 0.1)).collect();
        let est = vec![
            Pose::identity().with_stamp(0.21),
            Pose::identity().with_stamp(5.0),
            Pose::identity(),
        ];
        assert_eq!(match_by_stamp(&est, &reference, STAMP_TOLERANCE), vec![(0, 2)]);
    }

    #[test]
    fn self_alignment_is_identity() {
        let t = wiggle(20);
        let a = align_first_k(&t, &t, 5).unwrap();
        for (x, y) in a.iter().zip(&t) {
            assert!(pose_close(x, y, 1e-9));
        }
    }

    #[test]
    fn recovers_rigid_offset_from_first_k_only() {
        let truth = wiggle(1000);
        let g = Pose::from_rpy(Vector3::new(3.0, -2.0, 0.5), 0.1, -0.2, 1.0);
        let mut est: Vec<Pose> = truth.iter().map(|p| Pose { stamp: p.stamp, ..g * *p }).collect();
        for p in est.iter_mut().skip(5) {
            p.translation += Vector3::new(100.0, 0.0, 0.0);
        }
        let fit = fit_first_k(&est, &truth, 5).unwrap();
        assert!(pose_close(&fit, &g.inverse(), 1e-9));
    }

    #[test]
    fn collinear_start_uses_first_orientation() {
        let truth: Vec<Pose> = (0..10)
            .map(|i| Pose::from_translation(i as f64, 0.0, 0.0).with_stamp(i as f64))
            .collect();
        let g = Pose::from_rpy(Vector3::new(1.0, 2.0, 3.0), 0.4, 0.2, -0.9);
        let est: Vec<Pose> = truth.iter().map(|p| Pose { stamp: p.stamp, ..g * *p }).collect();
        let aligned = align_first_k(&est, &truth, 5).unwrap();
        for (a, t) in aligned.iter().zip(&truth) {
            assert!(pose_close(a, t, 1e-9));
        }
    }

    #[test]
    fn noisy_straight_start_keeps_roll_from_orientation() {
        let truth: Vec<Pose> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.2;
                let y = if i < 20 { 0.0 } else { 0.5 * (t - 4.0) };
                Pose::from_translation(t, y, 0.0).with_stamp(t)
            })
            .collect();
        let g = Pose::from_rpy(Vector3::new(1.0, 2.0, 3.0), 0.4, 0.2, -0.9);
        let jitter = [0.002, -0.001, 0.0015, -0.002, 0.001];
        let est: Vec<Pose> = truth
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut q = *p;
                q.translation.z += jitter[i % 5];
                Pose { stamp: p.stamp, ..g * q }
            })
            .collect();
        let aligned = align_first_k(&est, &truth, 5).unwrap();
        let e = ate_rmse(&aligned, &truth).unwrap();
        assert!(e < 0.05, "{e}");
    }

    #[test]
    fn too_few_for_alignment() {
        let t = wiggle(4);
        assert!(matches!(align_first_k(&t, &t, 5), Err(Error::TooFew { .. })));
    }

    #[test]
    fn revisitation_examples() {
        let closed = [Pose::identity(), Pose::from_translation(1.0, 0.0, 0.0), Pose::identity()];
        assert_eq!(revisitation_error(&closed).unwrap(), 0.0);
        let open = [Pose::identity(), Pose::from_translation(3.0, 4.0, 0.0)];
        assert_eq!(revisitation_error(&open).unwrap(), 5.0);
        assert!(revisitation_error(&open[..1]).is_err());
    }

    #[test]
    fn ate_examples() {
        let t = wiggle(30);
        assert_eq!(ate_rmse(&t, &t).unwrap(), 0.0);
        let up: Vec<Pose> = t.iter().map(|p| Pose::from_translation(0.0, 0.0, 1.0) * *p).collect();
        assert!((ate_rmse(&up, &t).unwrap() - 1.0).abs() < 1e-12);
        assert!(ate_rmse(&t, &[]).is_err());
    }

    proptest! {
        #[test]
        fn revisitation_rigid_invariant(x in -10.0f64..10.0, y in -10.0f64..10.0, yaw in -3.0f64..3.0, roll in -1.0f64..1.0) {
            let t = wiggle(40);
            let g = Pose::from_rpy(Vector3::new(x, y, 0.3), roll, 0.2, yaw);
            let moved: Vec<Pose> = t.iter().map(|p| g * *p).collect();
            let a = revisitation_error(&t).unwrap();
            let b = revisitation_error(&moved).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn alignment_never_hurts_rigid_offsets(x in -10.0f64..10.0, yaw in -3.0f64..3.0, pitch in -1.0f64..1.0) {
            let t = wiggle(40);
            let g = Pose::from_rpy(Vector3::new(x, 1.0, -2.0), 0.0, pitch, yaw);
            let moved: Vec<Pose> = t.iter().map(|p| Pose { stamp: p.stamp, ..g * *p }).collect();
            let aligned = align_first_k(&moved, &t, 5).unwrap();
            prop_assert!(ate_rmse(&aligned, &t).unwrap() <= ate_rmse(&moved, &t).unwrap() + 1e-12);
        }
    }
}
