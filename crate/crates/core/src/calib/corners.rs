//! Block-top rectangles and their ordered 3D corners.

use nalgebra::{Point3, Vector2, Vector3};

use super::extract::{fit_plane, ransac_plane, BlockTops, ExtractionParams, GroundFrame};
use crate::geometry::PointCloud;
use crate::{Error, Result};

pub const CORNER_COUNT: usize = 16;

fn cross(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counter-clockwise convex hull (monotone chain), without collinear points.
pub fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let chain = |ordered: &mut dyn Iterator<Item = &Vector2<f64>>| {
        let mut half: Vec<Vector2<f64>> = Vec::new();
        for p in ordered {
            while half.len() >= 2 && cross(&half[half.len() - 2], &half[half.len() - 1], p) <= 0.0 {
                half.pop();
            }
            half.push(*p);
        }
        half.pop();
        half
    };
    let mut hull = chain(&mut pts.iter());
    hull.extend(chain(&mut pts.iter().rev()));
    hull
}

/// Minimum-area enclosing rectangle, vertices counter-clockwise.
///
/// One side of the optimal rectangle is collinear with a hull edge, so every
/// edge direction is tried. `None` when the points span no area.
pub fn min_area_rectangle(points: &[Vector2<f64>]) -> Option<[Vector2<f64>; 4]> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return None;
    }
    let mut best: Option<(f64, [Vector2<f64>; 4])> = None;
    for i in 0..hull.len() {
        let edge = hull[(i + 1) % hull.len()] - hull[i];
        if edge.norm() < 1e-15 {
            continue;
        }
        let d = edge.normalize();
        let n = Vector2::new(-d.y, d.x);
        let (mut a0, mut a1, mut b0, mut b1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let (a, b) = (p.dot(&d), p.dot(&n));
            a0 = a0.min(a);
            a1 = a1.max(a);
            b0 = b0.min(b);
            b1 = b1.max(b);
        }
        let area = (a1 - a0) * (b1 - b0);
        if best.is_none_or(|(ba, _)| area < ba) {
            let v = |a: f64, b: f64| d * a + n * b;
            best = Some((area, [v(a0, b0), v(a1, b0), v(a1, b1), v(a0, b1)]));
        }
    }
    let (area, rect) = best?;
    (area > 1e-12).then_some(rect)
}

/// Fits the top plane of one cluster and returns its rectangle corners,
/// counter-clockwise about the ground normal, starting from the corner
/// closest to the ground-frame origin.
pub fn cluster_corners(
    cluster: &PointCloud,
    ground: &GroundFrame,
    params: &ExtractionParams,
    index: usize,
) -> Result<[Point3<f64>; 4]> {
    let degenerate = |reason: &str| Error::DegenerateCluster {
        index,
        reason: reason.into(),
    };
    let pts = cluster.points();
    if pts.len() < 3 {
        return Err(degenerate("fewer than 3 points"));
    }
    let (_, _, sv) = fit_plane(pts);
    if sv[1] < 1e-6 * sv[0].max(1e-12) {
        return Err(degenerate("points are collinear"));
    }
    let top: Vec<Point3<f64>> = match ransac_plane(pts, params.ransac_tol, params.ransac_iterations, params.seed) {
        Some((_, _, inliers)) if inliers.len() >= 3 => inliers.iter().map(|&i| pts[i]).collect(),
        _ => pts.to_vec(),
    };
    let (c, mut n, sv) = fit_plane(&top);
    if sv[1] < 1e-6 * sv[0].max(1e-12) {
        return Err(degenerate("top plane is rank deficient"));
    }
    if n.dot(&ground.normal) < 0.0 {
        n = -n;
    }
    let mut e1: Vector3<f64> = ground.u - n * n.dot(&ground.u);
    if e1.norm() < 1e-9 {
        e1 = ground.v - n * n.dot(&ground.v);
    }
    let e1 = e1.normalize();
    let e2 = n.cross(&e1);
    let flat: Vec<Vector2<f64>> = top
        .iter()
        .map(|p| {
            let d = p - c;
            Vector2::new(d.dot(&e1), d.dot(&e2))
        })
        .collect();
    let rect = min_area_rectangle(&flat).ok_or_else(|| degenerate("rectangle has no area"))?;
    let lifted: Vec<Point3<f64>> = rect.iter().map(|q| c + e1 * q.x + e2 * q.y).collect();
    let start = (0..4)
        .min_by(|&a, &b| {
            (lifted[a] - ground.origin)
                .norm()
                .total_cmp(&(lifted[b] - ground.origin).norm())
        })
        .expect("four corners");
    Ok(std::array::from_fn(|k| lifted[(start + k) % 4]))
}

/// 16 corners: blocks in cluster order, four corners each.
pub fn extract_corners_3d(tops: &BlockTops, params: &ExtractionParams) -> Result<Vec<Point3<f64>>> {
    let mut out = Vec::with_capacity(CORNER_COUNT);
    for (i, c) in tops.clusters.iter().enumerate() {
        out.extend(cluster_corners(c, &tops.ground, params, i)?);
    }
    Ok(out)
}

/// Corner label used in correspondence files: block then corner, e.g. `b2c3`.
pub fn corner_label(index: usize) -> String {
    format!("b{}c{}", index / 4, index % 4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ground() -> GroundFrame {
        GroundFrame::from_plane(&Point3::new(0.0, 0.0, -1.0), &Vector3::z())
    }

    fn rect_grid(center: Vector2<f64>, yaw: f64, sx: f64, sy: f64, z: f64, step: f64) -> PointCloud {
        let (s, c) = yaw.sin_cos();
        let nx = (sx / step).round() as i32;
        let ny = (sy / step).round() as i32;
        let mut out = PointCloud::new();
        for i in 0..=nx {
            for j in 0..=ny {
                let a = -sx / 2.0 + i as f64 * step;
                let b = -sy / 2.0 + j as f64 * step;
                out.push(Point3::new(center.x + c * a - s * b, center.y + s * a + c * b, z), None);
            }
        }
        out
    }

    #[test]
    fn exact_rectangle_vertices() {
        let cloud = rect_grid(Vector2::new(2.0, 0.3), 0.3, 0.2, 0.4, -0.8, 0.01);
        let corners = cluster_corners(&cloud, &ground(), &ExtractionParams::default(), 0).unwrap();
        let (s, c) = 0.3f64.sin_cos();
        let truth: Vec<Point3<f64>> = [(-0.1, -0.2), (0.1, -0.2), (0.1, 0.2), (-0.1, 0.2)]
            .iter()
            .map(|&(a, b)| Point3::new(2.0 + c * a - s * b, 0.3 + s * a + c * b, -0.8))
            .collect();
        for k in &corners {
            let nearest = truth.iter().map(|t| (t - k).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-3, "{nearest}");
        }
        // counter-clockwise about +z starting nearest the origin foot (0, 0, -1)
        let o = ground().origin;
        let d0 = (corners[0] - o).norm();
        assert!(corners.iter().all(|k| (k - o).norm() >= d0));
        for k in 0..4 {
            let a = corners[(k + 1) % 4] - corners[k];
            let b = corners[(k + 2) % 4] - corners[(k + 1) % 4];
            assert!(a.cross(&b).z > 0.0);
        }
    }

    #[test]
    fn collinear_cluster_is_degenerate() {
        let cloud: PointCloud = (0..20).map(|i| Point3::new(1.0 + 0.01 * i as f64, 0.0, -0.8)).collect();
        assert!(matches!(
            cluster_corners(&cloud, &ground(), &ExtractionParams::default(), 2),
            Err(Error::DegenerateCluster { index: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn rectangle_contains_all_points(pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..40)) {
            let pts: Vec<Vector2<f64>> = pts.into_iter().map(|(x, y)| Vector2::new(x, y)).collect();
            if let Some(r) = min_area_rectangle(&pts) {
                let d = (r[1] - r[0]).normalize();
                let n = Vector2::new(-d.y, d.x);
                let (w, h) = ((r[1] - r[0]).norm(), (r[3] - r[0]).norm());
                for p in &pts {
                    let q = p - r[0];
                    prop_assert!(q.dot(&d) > -1e-9 && q.dot(&d) < w + 1e-9);
                    prop_assert!(q.dot(&n) > -1e-9 && q.dot(&n) < h + 1e-9);
                }
            }
        }
    }
}
