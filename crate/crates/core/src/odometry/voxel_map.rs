use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::BuildHasherDefault;

use nalgebra::Point3;

use crate::geometry::{PointCloud, Pose};

pub type VoxelKey = [i32; 3];

// Fixed hasher keys keep iteration order identical across runs.
type DeterministicState = BuildHasherDefault<DefaultHasher>;

pub fn voxel_key(p: &Point3<f64>, voxel_size: f64) -> VoxelKey {
    [
        (p.x / voxel_size).floor() as i32,
        (p.y / voxel_size).floor() as i32,
        (p.z / voxel_size).floor() as i32,
    ]
}

/// Keeps the first point of every occupied voxel, in input order.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> PointCloud {
    assert!(voxel_size > 0.0, "voxel size must be positive");
    let mut seen: HashMap<VoxelKey, (), DeterministicState> = HashMap::default();
    let keep: Vec<usize> = cloud
        .iter()
        .enumerate()
        .filter(|(_, p)| seen.insert(voxel_key(p, voxel_size), ()).is_none())
        .map(|(i, _)| i)
        .collect();
    cloud.select(&keep)
}

/// Voxel hash map of world-frame points used as the registration target.
#[derive(Clone, Debug)]
pub struct LocalMap {
    voxels: HashMap<VoxelKey, Vec<Point3<f64>>, DeterministicState>,
    voxel_size: f64,
    max_points_per_voxel: usize,
    max_map_range: f64,
}

impl LocalMap {
    pub fn new(voxel_size: f64, max_points_per_voxel: usize, max_map_range: f64) -> Self {
        assert!(voxel_size > 0.0 && max_points_per_voxel > 0);
        Self {
            voxels: HashMap::default(),
            voxel_size,
            max_points_per_voxel,
            max_map_range,
        }
    }

    /// A map of `cloud` without range cropping, for one-off registration targets.
    pub fn from_cloud(cloud: &PointCloud, voxel_size: f64, max_points_per_voxel: usize) -> Self {
        let mut map = Self::new(voxel_size, max_points_per_voxel, f64::INFINITY);
        map.insert(cloud.points());
        map
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn max_points_per_voxel(&self) -> usize {
        self.max_points_per_voxel
    }

    pub fn max_map_range(&self) -> f64 {
        self.max_map_range
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn num_voxels(&self) -> usize {
        self.voxels.len()
    }

    /// Total number of stored points.
    pub fn len(&self) -> usize {
        self.voxels.values().map(Vec::len).sum()
    }

    pub fn clear(&mut self) {
        self.voxels.clear();
    }

    /// Adds world-frame points; full voxels ignore further points.
    pub fn insert(&mut self, points: &[Point3<f64>]) {
        for p in points {
            let cell = self.voxels.entry(voxel_key(p, self.voxel_size)).or_default();
            if cell.len() < self.max_points_per_voxel {
                cell.push(*p);
            }
        }
    }

    /// Inserts a sensor-frame cloud observed from `pose`.
    pub fn insert_cloud(&mut self, cloud: &PointCloud, pose: &Pose) {
        let pts: Vec<_> = cloud.iter().map(|p| pose.transform_point(p)).collect();
        self.insert(&pts);
    }

    /// Drops voxels whose first point is farther than `max_map_range` from `center`.
    pub fn crop(&mut self, center: &Point3<f64>) {
        let r2 = self.max_map_range * self.max_map_range;
        self.voxels
            .retain(|_, pts| pts.first().is_some_and(|p| (p - center).norm_squared() <= r2));
    }

    /// Nearest stored point among the 27 voxels around `p`, with squared distance.
    pub fn nearest(&self, p: &Point3<f64>) -> Option<(Point3<f64>, f64)> {
        let [x, y, z] = voxel_key(p, self.voxel_size);
        let mut best: Option<(Point3<f64>, f64)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(cell) = self.voxels.get(&[x + dx, y + dy, z + dz]) else {
                        continue;
                    };
                    for q in cell {
                        let d2 = (q - p).norm_squared();
                        if best.is_none_or(|(_, b)| d2 < b) {
                            best = Some((*q, d2));
                        }
                    }
                }
            }
        }
        best
    }

    /// All stored points, sorted by voxel key for a stable order.
    pub fn points(&self) -> Vec<Point3<f64>> {
        let mut keys: Vec<&VoxelKey> = self.voxels.keys().collect();
        keys.sort();
        keys.into_iter()
            .flat_map(|k| self.voxels[k].iter().copied())
            .collect()
    }

    /// Checks that every point sits in its own voxel and no voxel is over capacity.
    pub fn check_invariants(&self) -> bool {
        self.voxels.iter().all(|(k, pts)| {
            pts.len() <= self.max_points_per_voxel
                && pts.iter().all(|p| voxel_key(p, self.voxel_size) == *k)
        })
    }
}
