//! Ground-plane segmentation and clustering of the four elevated block tops.

use std::collections::{HashMap, VecDeque};

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::PointCloud;
use crate::{Error, Result};

pub const BLOCK_COUNT: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionParams {
    /// Heights above the ground that count as block tops (meters).
    pub height_band: [f64; 2],
    /// Plane inlier distance (meters).
    pub ransac_tol: f64,
    pub ransac_iterations: usize,
    /// Points closer than this join the same cluster (meters).
    pub cluster_gap: f64,
    pub sor_neighbors: usize,
    /// Points whose mean neighbor distance exceeds mean + ratio·std are dropped.
    pub sor_std_ratio: f64,
    /// Smaller clusters are treated as clutter.
    pub min_cluster_points: usize,
    pub seed: u64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            height_band: [0.05, 0.40],
            ransac_tol: 0.01,
            ransac_iterations: 300,
            cluster_gap: 0.05,
            sor_neighbors: 8,
            sor_std_ratio: 2.0,
            min_cluster_points: 10,
            seed: 0,
        }
    }
}

/// Plane `n·(x − origin) = 0` with in-plane axes `u`, `v` (`u × v = n`).
/// `origin` is the foot of the sensor origin and `n` points towards the sensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundFrame {
    pub origin: Point3<f64>,
    pub normal: Vector3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl GroundFrame {
    pub fn from_plane(point: &Point3<f64>, normal: &Vector3<f64>) -> Self {
        let mut n = normal.normalize();
        let sensor = Point3::origin();
        if n.dot(&(sensor - point)) < 0.0 {
            n = -n;
        }
        let origin = sensor - n * n.dot(&(sensor - point));
        let mut u = Vector3::x() - n * n.x;
        if u.norm() < 1e-6 {
            u = Vector3::y() - n * n.y;
        }
        let u = u.normalize();
        Self {
            origin,
            normal: n,
            u,
            v: n.cross(&u),
        }
    }

    pub fn height(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&(p - self.origin))
    }

    /// In-plane coordinates `(u, v)` of the projection of `p`.
    pub fn coordinates(&self, p: &Point3<f64>) -> (f64, f64) {
        let d = p - self.origin;
        (self.u.dot(&d), self.v.dot(&d))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockTops {
    pub ground: GroundFrame,
    /// Row-major: sorted by `u`, split into rows of two, each row sorted by `v`.
    pub clusters: Vec<PointCloud>,
}

/// Least-squares plane through `points`: centroid, unit normal and the singular values.
pub(crate) fn fit_plane(points: &[Point3<f64>]) -> (Point3<f64>, Vector3<f64>, Vector3<f64>) {
    let n = points.len().max(1) as f64;
    let centroid = Point3::from(points.iter().map(|p| p.coords).sum::<Vector3<f64>>() / n);
    let mut cov = nalgebra::Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let normal = eig.eigenvectors.column(order[2]).into_owned();
    let sv = Vector3::new(
        eig.eigenvalues[order[0]].max(0.0).sqrt(),
        eig.eigenvalues[order[1]].max(0.0).sqrt(),
        eig.eigenvalues[order[2]].max(0.0).sqrt(),
    );
    (centroid, normal, sv)
}

/// RANSAC plane followed by a least-squares refit on its inliers.
/// Returns the plane and the inlier indices.
pub(crate) fn ransac_plane(
    points: &[Point3<f64>],
    tol: f64,
    iterations: usize,
    seed: u64,
) -> Option<(Point3<f64>, Vector3<f64>, Vec<usize>)> {
    if points.len() < 3 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Point3<f64>, Vector3<f64>)> = None;
    for _ in 0..iterations {
        let a = points[rng.random_range(0..points.len())];
        let b = points[rng.random_range(0..points.len())];
        let c = points[rng.random_range(0..points.len())];
        let n = (b - a).cross(&(c - a));
        if n.norm() < 1e-12 {
            continue;
        }
        let n = n.normalize();
        let count = points.par_iter().filter(|p| n.dot(&(*p - a)).abs() <= tol).count();
        if best.is_none_or(|(c0, _, _)| count > c0) {
            best = Some((count, a, n));
        }
    }
    let (_, a, n) = best?;
    let inliers: Vec<usize> = (0..points.len()).filter(|&i| n.dot(&(points[i] - a)).abs() <= tol).collect();
    let sel: Vec<Point3<f64>> = inliers.iter().map(|&i| points[i]).collect();
    let (c, refit, _) = fit_plane(&sel);
    let inliers: Vec<usize> = (0..points.len()).filter(|&i| refit.dot(&(points[i] - c)).abs() <= tol).collect();
    Some((c, refit, inliers))
}

/// Drops points whose mean distance to their `k` nearest neighbors exceeds
/// `μ + std_ratio·σ` over the cloud, and also exceeds `2μ`.
pub fn statistical_outlier_removal(points: &[Point3<f64>], k: usize, std_ratio: f64) -> Vec<Point3<f64>> {
    if points.len() <= k || k == 0 {
        return points.to_vec();
    }
    let mean_dist: Vec<f64> = points
        .par_iter()
        .map(|p| {
            let mut d: Vec<f64> = points.iter().map(|q| (q - p).norm()).collect();
            d.select_nth_unstable_by(k, f64::total_cmp);
            // index 0..=k holds the point itself plus its k neighbors
            d[..=k].iter().sum::<f64>() / k as f64
        })
        .collect();
    let n = mean_dist.len() as f64;
    let mu = mean_dist.iter().sum::<f64>() / n;
    let sd = (mean_dist.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n).sqrt();
    let limit = (mu + std_ratio * sd).max(2.0 * mu);
    points
        .iter()
        .zip(&mean_dist)
        .filter(|(_, d)| **d <= limit)
        .map(|(p, _)| *p)
        .collect()
}

/// Connected components under the `gap` distance, largest first, ties by first index.
pub fn euclidean_clusters(points: &[Point3<f64>], gap: f64) -> Vec<Vec<usize>> {
    let cell = |p: &Point3<f64>| {
        [
            (p.x / gap).floor() as i64,
            (p.y / gap).floor() as i64,
            (p.z / gap).floor() as i64,
        ]
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    let mut label = vec![usize::MAX; points.len()];
    let mut clusters = Vec::new();
    for seed in 0..points.len() {
        if label[seed] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![seed];
        label[seed] = id;
        let mut queue = VecDeque::from([seed]);
        while let Some(i) = queue.pop_front() {
            let [x, y, z] = cell(&points[i]);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(cands) = grid.get(&[x + dx, y + dy, z + dz]) else {
                            continue;
                        };
                        for &j in cands {
                            if label[j] == usize::MAX && (points[j] - points[i]).norm() <= gap {
                                label[j] = id;
                                members.push(j);
                                queue.push_back(j);
                            }
                        }
                    }
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    clusters
}

/// Row-major order of 2D centroids: nearest two by `u` first, each row by `v`.
pub fn row_major_order(coords: &[(f64, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..coords.len()).collect();
    idx.sort_by(|&a, &b| coords[a].0.total_cmp(&coords[b].0));
    for row in idx.chunks_mut(2) {
        row.sort_by(|&a, &b| coords[a].1.total_cmp(&coords[b].1));
    }
    idx
}

/// Finds the ground, keeps points in the height band above it, removes
/// outliers and splits the rest into exactly four clusters.
pub fn extract_block_tops(cloud: &PointCloud, params: &ExtractionParams) -> Result<BlockTops> {
    let pts = cloud.points();
    let Some((gp, gn, ground_inliers)) =
        ransac_plane(pts, params.ransac_tol, params.ransac_iterations, params.seed)
    else {
        return Err(Error::ClusterCount {
            found: 0,
            diagnostics: format!("no ground plane in {} points", pts.len()),
        });
    };
    let ground = GroundFrame::from_plane(&gp, &gn);
    let [lo, hi] = params.height_band;
    let elevated: Vec<Point3<f64>> = pts
        .iter()
        .filter(|p| {
            let h = ground.height(p);
            h >= lo && h <= hi
        })
        .copied()
        .collect();
    let kept = statistical_outlier_removal(&elevated, params.sor_neighbors, params.sor_std_ratio);
    let all = euclidean_clusters(&kept, params.cluster_gap);
    let sizes: Vec<usize> = all.iter().map(Vec::len).collect();
    let clusters: Vec<Vec<usize>> = all
        .into_iter()
        .filter(|c| c.len() >= params.min_cluster_points)
        .collect();
    let diagnostics = format!(
        "{} points, {} ground inliers, {} in height band, {} after outlier removal, cluster sizes {:?}",
        pts.len(),
        ground_inliers.len(),
        elevated.len(),
        kept.len(),
        sizes
    );
    if clusters.len() != BLOCK_COUNT {
        return Err(Error::ClusterCount {
            found: clusters.len(),
            diagnostics,
        });
    }
    log::debug!("block extraction: {diagnostics}");
    let clouds: Vec<PointCloud> = clusters
        .iter()
        .map(|c| c.iter().map(|&i| kept[i]).collect())
        .collect();
    let centroids: Vec<(f64, f64)> = clouds
        .iter()
        .map(|c| {
            let m = c.iter().map(|p| p.coords).sum::<Vector3<f64>>() / c.len() as f64;
            ground.coordinates(&Point3::from(m))
        })
        .collect();
    let clusters = row_major_order(&centroids).into_iter().map(|i| clouds[i].clone()).collect();
    Ok(BlockTops { ground, clusters })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(x0: f64, y0: f64, sx: f64, sy: f64, z: f64, step: f64) -> Vec<Point3<f64>> {
        let nx = (sx / step).round() as usize;
        let ny = (sy / step).round() as usize;
        (0..=nx)
            .flat_map(|i| (0..=ny).map(move |j| Point3::new(x0 + i as f64 * step, y0 + j as f64 * step, z)))
            .collect()
    }

    fn ground_only() -> Vec<Point3<f64>> {
        grid(0.5, -1.5, 3.0, 3.0, -1.0, 0.05)
    }

    #[test]
    fn flat_ground_has_no_clusters() {
        let cloud: PointCloud = ground_only().into_iter().collect();
        match extract_block_tops(&cloud, &ExtractionParams::default()) {
            Err(Error::ClusterCount { found, .. }) => assert_eq!(found, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn five_boxes_are_rejected() {
        let mut pts = ground_only();
        for k in 0..5 {
            pts.extend(grid(1.0 + 0.5 * k as f64, 0.0, 0.2, 0.2, -0.8, 0.02));
        }
        let cloud: PointCloud = pts.into_iter().collect();
        match extract_block_tops(&cloud, &ExtractionParams::default()) {
            Err(Error::ClusterCount { found, .. }) => assert_eq!(found, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn four_tops_in_row_major_order() {
        let mut pts = ground_only();
        // (u, v) centroids: rows at x≈1.6 and x≈2.6
        let origins = [(2.5, 0.3), (1.5, 0.3), (2.5, -0.7), (1.5, -0.7)];
        for (x, y) in origins {
            pts.extend(grid(x, y, 0.2, 0.4, -0.8, 0.01));
        }
        let cloud: PointCloud = pts.into_iter().collect();
        let tops = extract_block_tops(&cloud, &ExtractionParams::default()).unwrap();
        assert!((tops.ground.normal - Vector3::z()).norm() < 1e-9);
        let expected = [(1.6, -0.5), (1.6, 0.5), (2.6, -0.5), (2.6, 0.5)];
        for (c, (ex, ey)) in tops.clusters.iter().zip(expected) {
            let m = c.iter().map(|p| p.coords).sum::<Vector3<f64>>() / c.len() as f64;
            assert!((m - Vector3::new(ex, ey, -0.8)).norm() < 1e-3, "{m:?}");
        }
    }

    #[test]
    fn outlier_removal_drops_isolated_points() {
        let mut pts = grid(0.0, 0.0, 0.5, 0.5, 0.0, 0.02);
        pts.push(Point3::new(3.0, 3.0, 3.0));
        let kept = statistical_outlier_removal(&pts, 8, 2.0);
        assert_eq!(kept.len(), pts.len() - 1);
    }
}
