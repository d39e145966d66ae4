//! Multipath ghosts for specular surfaces.
//!
//! Two artifacts are produced:
//! * mirror ghosts: a true return re-reflected across a specular surface
//!   plane, which puts it at the length of the bounced path;
//! * ring artifacts: when the boresight leaves a specular open-ended
//!   cylinder through an open end, two concentric rings (radius ratio
//!   `ring_radius_ratio`) appear on the boresight one cylinder length beyond
//!   the opening.
//!
//! Ghosts outside the field of view or range are dropped. Every artifact is
//! gated by `multipath_rate`, so a zero rate leaves scans untouched.

use nalgebra::{Point3, Vector3};
use rand::Rng;

use super::environment::{Environment, Shape};
use super::sensor::{in_view, rng_for, MULTIPATH_STREAM};
use super::spec::{NoiseConfig, SonarSpec};
use crate::geometry::{Pose, Scan};

const GHOST_INTENSITY: f64 = 0.1;

pub fn inject_multipath(
    scan: &Scan,
    env: &Environment,
    sensor_pose: &Pose,
    spec: &SonarSpec,
    noise: &NoiseConfig,
) -> Scan {
    if !noise.multipath_enable || noise.multipath_rate <= 0.0 {
        return scan.clone();
    }
    let mut rng = rng_for(noise.seed, MULTIPATH_STREAM);
    let mut out = scan.clone();
    let sensor = sensor_pose.position();
    let to_sensor = sensor_pose.inverse();
    let specular: Vec<_> = env
        .surfaces
        .iter()
        .filter(|s| s.material.mirror_gain > 0.0)
        .collect();
    if specular.is_empty() {
        return out;
    }

    for p_local in scan.cloud.iter() {
        let p = sensor_pose.transform_point(p_local);
        for surface in &specular {
            let u: f64 = rng.random();
            if u >= noise.multipath_rate * surface.material.mirror_gain {
                continue;
            }
            let plane = surface
                .shape
                .mirror_planes(&sensor, &p)
                .into_iter()
                .filter(|pl| pl.signed_distance(&p) > spec.range_quantum)
                .min_by(|a, b| a.signed_distance(&sensor).total_cmp(&b.signed_distance(&sensor)));
            let Some(plane) = plane else { continue };
            let ghost = to_sensor.transform_point(&plane.reflect(&p));
            if in_view(spec, &ghost) {
                out.cloud
                    .push(ghost, Some(GHOST_INTENSITY * surface.material.mirror_gain));
            }
        }
    }

    if noise.ring_artifact_enable {
        for surface in &specular {
            let Some(distance) = ring_distance(&surface.shape, sensor_pose) else {
                continue;
            };
            let u: f64 = rng.random();
            if u >= noise.multipath_rate {
                continue;
            }
            let Shape::Cylinder { radius, .. } = surface.shape else {
                continue;
            };
            let step = spec.h_beam.to_radians() * distance;
            for ring_radius in [radius, radius * noise.ring_radius_ratio] {
                let n = ((std::f64::consts::TAU * ring_radius / step).ceil() as usize).max(8);
                for k in 0..n {
                    let phi = std::f64::consts::TAU * k as f64 / n as f64;
                    let q = Point3::new(distance, ring_radius * phi.cos(), ring_radius * phi.sin());
                    let keep: f64 = rng.random();
                    if keep < surface.material.mirror_gain && in_view(spec, &q) {
                        out.cloud.push(q, Some(GHOST_INTENSITY));
                    }
                }
            }
        }
    }
    out
}

/// Boresight distance of the ring artifact for an open-ended cylinder containing
/// the sensor: distance to the opening plus the cylinder length.
pub fn ring_distance(shape: &Shape, sensor_pose: &Pose) -> Option<f64> {
    let Shape::Cylinder {
        base,
        axis,
        radius,
        length,
        cap_start,
        cap_end,
    } = shape
    else {
        return None;
    };
    let a = axis.normalize();
    let o = sensor_pose.position();
    let b: Vector3<f64> = sensor_pose.transform_vector(&Vector3::x());
    let w = o - base;
    let h = w.dot(&a);
    if (w - a * h).norm() >= *radius || !(0.0..=*length).contains(&h) {
        return None;
    }
    let ba = b.dot(&a);
    let (open, h_end) = if ba > 1e-9 {
        (!cap_end, *length)
    } else if ba < -1e-9 {
        (!cap_start, 0.0)
    } else {
        return None;
    };
    if !open {
        return None;
    }
    let t = (h_end - h) / ba;
    let radial = (w + b * t) - a * (h + ba * t);
    (radial.norm() <= *radius).then_some(t + length)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PointCloud;
    use crate::sim::environment::Material;

    fn mirror_env() -> Environment {
        // one specular plane y = 3 built from two triangles
        let mut env = Environment::default();
        let a = Point3::new(-20.0, 3.0, -20.0);
        let b = Point3::new(20.0, 3.0, -20.0);
        let c = Point3::new(20.0, 3.0, 20.0);
        let d = Point3::new(-20.0, 3.0, 20.0);
        env.push(
            Shape::Triangles {
                triangles: vec![[a, b, c], [a, c, d]],
            },
            Material {
                reflectivity: 1.0,
                roughness: 0.0,
                mirror_gain: 1.0,
            },
        );
        env
    }

    fn enabled(rate: f64) -> NoiseConfig {
        NoiseConfig {
            multipath_enable: true,
            multipath_rate: rate,
            ..NoiseConfig::noiseless()
        }
    }

    #[test]
    fn zero_rate_is_identity() {
        let scan = Scan::new(0.0, PointCloud::from_points(vec![Point3::new(5.0, 1.0, 0.0)]));
        let out = inject_multipath(&scan, &mirror_env(), &Pose::identity(), &SonarSpec::default(), &enabled(0.0));
        assert_eq!(out, scan);
    }

    #[test]
    fn single_return_single_ghost_at_reflection() {
        let p = Point3::new(8.0, 1.0, 0.5);
        let scan = Scan::new(0.0, PointCloud::from_points(vec![p]));
        let out = inject_multipath(&scan, &mirror_env(), &Pose::identity(), &SonarSpec::default(), &enabled(1.0));
        assert_eq!(out.cloud.len(), 2);
        // oracle: reflection across y = 3
        let expected = Point3::new(p.x, 6.0 - p.y, p.z);
        assert!((out.cloud.points()[1] - expected).norm() < 1e-12);
        // the ghost sits at the bounced path length: |sensor→M| + |M→p|
        let m_y = 3.0;
        let s = (m_y - 0.0) / ((m_y - 0.0) + (m_y - p.y));
        let m = Point3::new(p.x * s, m_y, p.z * s);
        let path = m.coords.norm() + (p - m).norm();
        assert!((expected.coords.norm() - path).abs() < 1e-9);
    }

    #[test]
    fn ring_beyond_open_end() {
        let shape = Shape::Cylinder {
            base: Point3::origin(),
            axis: Vector3::x(),
            radius: 1.5,
            length: 4.0,
            cap_start: true,
            cap_end: false,
        };
        let pose = Pose::from_translation(1.0, 0.0, 0.0);
        // 3 m to the opening plus the 4 m length
        assert!((ring_distance(&shape, &pose).unwrap() - 7.0).abs() < 1e-12);
        // looking at the capped end gives nothing
        let back = Pose::from_rpy(Vector3::new(1.0, 0.0, 0.0), 0.0, 0.0, std::f64::consts::PI);
        assert!(ring_distance(&shape, &back).is_none());
    }
}
