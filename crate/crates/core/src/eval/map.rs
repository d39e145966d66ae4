//! Dense map export from keyframe scans.

use std::io::Write;

use crate::geometry::{PointCloud, Pose};
use crate::io::ply::write_ply;
use crate::mapping::Keyframe;
use crate::odometry::voxel_downsample;
use crate::{Error, Result};

/// Keyframe scans placed at `poses` (one per keyframe), concatenated and
/// voxel-downsampled.
pub fn dense_map(keyframes: &[Keyframe], poses: &[Pose], voxel: f64) -> Result<PointCloud> {
    if poses.len() != keyframes.len() {
        return Err(Error::Input(format!(
            "{} keyframe poses for {} keyframes",
            poses.len(),
            keyframes.len()
        )));
    }
    if !(voxel > 0.0) {
        return Err(Error::Config("map voxel size must be positive".into()));
    }
    let mut cloud = PointCloud::new();
    for (kf, pose) in keyframes.iter().zip(poses) {
        cloud.extend(&pose.transform_cloud(&kf.scan.cloud));
    }
    Ok(voxel_downsample(&cloud, voxel))
}

/// Writes [`dense_map`] as ASCII PLY and returns it.
pub fn export_dense_map<W: Write>(
    w: W,
    keyframes: &[Keyframe],
    poses: &[Pose],
    voxel: f64,
    comments: &[String],
) -> Result<PointCloud> {
    let map = dense_map(keyframes, poses, voxel)?;
    write_ply(w, &map, comments)?;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Scan;
    use crate::io::ply::read_ply;
    use nalgebra::Point3;

    fn kf(index: usize, cloud: PointCloud) -> Keyframe {
        Keyframe {
            index,
            frame: index,
            pose: Pose::identity(),
            scan: Scan::new(index as f64, cloud),
            stamp: index as f64,
        }
    }

    #[test]
    fn single_identity_keyframe_is_verbatim() {
        let cloud: PointCloud = (0..10).map(|i| Point3::new(i as f64 * 0.3, 0.1, -0.2)).collect();
        let k = [kf(0, cloud.clone())];
        let mut buf = Vec::new();
        let map = export_dense_map(&mut buf, &k, &[Pose::identity()], 0.05, &[]).unwrap();
        assert_eq!(map, cloud);
        assert_eq!(read_ply(&buf[..], "m.ply").unwrap().len(), 10);
    }

    #[test]
    fn pose_count_mismatch() {
        let k = [kf(0, PointCloud::new())];
        assert!(dense_map(&k, &[], 0.1).is_err());
    }
}
