//! Analytic scene geometry: boxes, finite cylinders and triangle sets, each with
//! an acoustic material.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const RAY_EPS: f64 = 1e-9;

/// Acoustic surface response.
///
/// `reflectivity` scales the detection probability, `roughness` controls how
/// fast returns fade at grazing incidence and how noisy ranges are, and
/// `mirror_gain` is the strength of specular (multipath) re-reflection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub reflectivity: f64,
    pub roughness: f64,
    #[serde(default)]
    pub mirror_gain: f64,
}

impl Material {
    pub const ROCK: Material = Material {
        reflectivity: 0.95,
        roughness: 0.9,
        mirror_gain: 0.0,
    };
    pub const CONCRETE: Material = Material {
        reflectivity: 0.95,
        roughness: 0.8,
        mirror_gain: 0.0,
    };
    pub const STEEL: Material = Material {
        reflectivity: 0.9,
        roughness: 0.15,
        mirror_gain: 0.8,
    };
    pub const PVC: Material = Material {
        reflectivity: 0.7,
        roughness: 0.1,
        mirror_gain: 0.3,
    };
    /// Idealized fully diffuse reflector: every beam that hits it returns.
    pub const IDEAL: Material = Material {
        reflectivity: 1.0,
        roughness: 1.0,
        mirror_gain: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("reflectivity", self.reflectivity),
            ("roughness", self.roughness),
            ("mirror_gain", self.mirror_gain),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("material {name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Axis-aligned solid box.
    Box { min: Point3<f64>, max: Point3<f64> },
    /// Finite cylinder shell from `base` along `axis`; ends are open unless capped.
    Cylinder {
        base: Point3<f64>,
        axis: Vector3<f64>,
        radius: f64,
        length: f64,
        #[serde(default)]
        cap_start: bool,
        #[serde(default)]
        cap_end: bool,
    },
    Triangles { triangles: Vec<[Point3<f64>; 3]> },
}

/// An infinite plane `{x : n·(x − point) = 0}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub point: Point3<f64>,
    pub normal: Vector3<f64>,
}

impl Plane {
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&(p - self.point))
    }

    pub fn reflect(&self, p: &Point3<f64>) -> Point3<f64> {
        p - self.normal * (2.0 * self.signed_distance(p))
    }

    /// Same plane with the normal flipped, if needed, so `p` lies on the positive side.
    pub fn facing(mut self, p: &Point3<f64>) -> Plane {
        if self.signed_distance(p) < 0.0 {
            self.normal = -self.normal;
        }
        self
    }
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        match self {
            Shape::Box { min, max } => {
                if (0..3).any(|k| !(min[k] < max[k])) {
                    return Err(Error::Config("box min must be below max on every axis".into()));
                }
            }
            Shape::Cylinder {
                axis,
                radius,
                length,
                ..
            } => {
                if axis.norm() < 1e-9 || *radius <= 0.0 || *length <= 0.0 {
                    return Err(Error::Config(
                        "cylinder needs a non-zero axis and positive radius/length".into(),
                    ));
                }
            }
            Shape::Triangles { triangles } => {
                if triangles
                    .iter()
                    .any(|t| (t[1] - t[0]).cross(&(t[2] - t[0])).norm() < 1e-12)
                {
                    return Err(Error::Config("degenerate triangle".into()));
                }
            }
        }
        Ok(())
    }

    /// Nearest intersection along `origin + t·dir` with `t > 0`; the returned
    /// normal faces against the ray.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        let (t, n) = match self {
            Shape::Box { min, max } => intersect_box(min, max, origin, dir)?,
            Shape::Cylinder {
                base,
                axis,
                radius,
                length,
                cap_start,
                cap_end,
            } => intersect_cylinder(
                base,
                &axis.normalize(),
                *radius,
                *length,
                [*cap_start, *cap_end],
                origin,
                dir,
            )?,
            Shape::Triangles { triangles } => triangles
                .iter()
                .filter_map(|t| intersect_triangle(t, origin, dir))
                .min_by(|a, b| a.0.total_cmp(&b.0))?,
        };
        let n = if n.dot(dir) > 0.0 { -n } else { n };
        Some((t, n))
    }

    /// Unsigned distance from `p` to the surface.
    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        match self {
            Shape::Box { min, max } => {
                let c = (min.coords + max.coords) * 0.5;
                let h = (max.coords - min.coords) * 0.5;
                let q = (p.coords - c).abs() - h;
                let outside = q.map(|v| v.max(0.0)).norm();
                let inside = -q.max().min(0.0);
                outside + inside
            }
            Shape::Cylinder {
                base,
                axis,
                radius,
                length,
                cap_start,
                cap_end,
            } => {
                let a = axis.normalize();
                let w = p - base;
                let h = w.dot(&a);
                let rho = (w - a * h).norm();
                let excess = h - h.clamp(0.0, *length);
                let mut d = ((rho - radius).powi(2) + excess * excess).sqrt();
                let disk = |z: f64| ((rho - radius).max(0.0).powi(2) + z * z).sqrt();
                if *cap_start {
                    d = d.min(disk(h));
                }
                if *cap_end {
                    d = d.min(disk(h - length));
                }
                d
            }
            Shape::Triangles { triangles } => triangles
                .iter()
                .map(|t| (p - closest_point_on_triangle(p, t)).norm())
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Candidate mirror planes for a return at `p` seen from `sensor`, oriented
    /// with the sensor on the positive side.
    pub fn mirror_planes(&self, sensor: &Point3<f64>, p: &Point3<f64>) -> Vec<Plane> {
        match self {
            Shape::Box { min, max } => {
                let inside = (0..3).all(|k| sensor[k] > min[k] && sensor[k] < max[k]);
                let mut out = Vec::with_capacity(6);
                for k in 0..3 {
                    for (corner, sign) in [(min, -1.0), (max, 1.0)] {
                        let mut normal = Vector3::zeros();
                        normal[k] = sign;
                        let plane = Plane {
                            point: *corner,
                            normal,
                        };
                        if inside {
                            out.push(Plane {
                                normal: -normal,
                                ..plane
                            });
                        } else if plane.signed_distance(sensor) > 0.0 {
                            out.push(plane);
                        }
                    }
                }
                out
            }
            Shape::Cylinder {
                base,
                axis,
                radius,
                length,
                cap_start,
                cap_end,
            } => {
                let a = axis.normalize();
                let radial = |x: &Point3<f64>| {
                    let w = x - base;
                    w - a * w.dot(&a)
                };
                let rs = radial(sensor);
                let mut out = Vec::new();
                if rs.norm() < *radius {
                    // from inside: the echo bounces off the wall opposite the return
                    let rp = radial(p);
                    if rp.norm() > 1e-9 {
                        let u = rp.normalize();
                        let h = (sensor - base).dot(&a);
                        out.push(Plane {
                            point: base + a * h - u * *radius,
                            normal: u,
                        });
                    }
                } else {
                    let u = rs.normalize();
                    let h = (sensor - base).dot(&a);
                    out.push(Plane {
                        point: base + a * h + u * *radius,
                        normal: u,
                    });
                }
                if *cap_start {
                    out.push(Plane { point: *base, normal: a }.facing(sensor));
                }
                if *cap_end {
                    out.push(Plane { point: base + a * *length, normal: a }.facing(sensor));
                }
                out
            }
            Shape::Triangles { triangles } => triangles
                .iter()
                .map(|t| {
                    Plane {
                        point: t[0],
                        normal: (t[1] - t[0]).cross(&(t[2] - t[0])).normalize(),
                    }
                    .facing(sensor)
                })
                .collect(),
        }
    }

    /// Largest extent of the primitive.
    pub fn dominant_dimension(&self) -> f64 {
        match self {
            Shape::Box { min, max } => (max - min).max(),
            Shape::Cylinder { radius, length, .. } => length.max(2.0 * radius),
            Shape::Triangles { triangles } => {
                let mut lo = Vector3::repeat(f64::INFINITY);
                let mut hi = Vector3::repeat(f64::NEG_INFINITY);
                for v in triangles.iter().flatten() {
                    lo = lo.inf(&v.coords);
                    hi = hi.sup(&v.coords);
                }
                (hi - lo).max()
            }
        }
    }
}

fn intersect_box(
    min: &Point3<f64>,
    max: &Point3<f64>,
    o: &Point3<f64>,
    d: &Vector3<f64>,
) -> Option<(f64, Vector3<f64>)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut near_axis = 0;
    let mut far_axis = 0;
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < min[k] || o[k] > max[k] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[k];
        let mut t0 = (min[k] - o[k]) * inv;
        let mut t1 = (max[k] - o[k]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_near {
            t_near = t0;
            near_axis = k;
        }
        if t1 < t_far {
            t_far = t1;
            far_axis = k;
        }
    }
    if t_far < t_near || t_far <= RAY_EPS {
        return None;
    }
    let (t, axis) = if t_near > RAY_EPS {
        (t_near, near_axis)
    } else {
        (t_far, far_axis)
    };
    let mut n = Vector3::zeros();
    n[axis] = -d[axis].signum();
    Some((t, n))
}

fn intersect_cylinder(
    base: &Point3<f64>,
    a: &Vector3<f64>,
    radius: f64,
    length: f64,
    caps: [bool; 2],
    o: &Point3<f64>,
    d: &Vector3<f64>,
) -> Option<(f64, Vector3<f64>)> {
    let w = o - base;
    let dp = d - a * d.dot(a);
    let wp = w - a * w.dot(a);
    let mut best: Option<(f64, Vector3<f64>)> = None;
    let mut consider = |t: f64, n: Vector3<f64>| {
        if t > RAY_EPS && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, n));
        }
    };
    let qa = dp.norm_squared();
    if qa > 1e-18 {
        let qb = 2.0 * wp.dot(&dp);
        let qc = wp.norm_squared() - radius * radius;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let s = disc.sqrt();
            for t in [(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)] {
                let h = w.dot(a) + t * d.dot(a);
                if (0.0..=length).contains(&h) {
                    consider(t, (wp + dp * t) / radius);
                }
            }
        }
    }
    let da = d.dot(a);
    if da.abs() > 1e-15 {
        for (capped, h0) in [(caps[0], 0.0), (caps[1], length)] {
            if !capped {
                continue;
            }
            let t = (h0 - w.dot(a)) / da;
            if (wp + dp * t).norm() <= radius {
                consider(t, *a);
            }
        }
    }
    best
}

fn intersect_triangle(
    tri: &[Point3<f64>; 3],
    o: &Point3<f64>,
    d: &Vector3<f64>,
) -> Option<(f64, Vector3<f64>)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > RAY_EPS).then(|| (t, e1.cross(&e2).normalize()))
}

fn closest_point_on_triangle(p: &Point3<f64>, t: &[Point3<f64>; 3]) -> Point3<f64> {
    let (a, b, c) = (t[0], t[1], t[2]);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    #[serde(flatten)]
    pub shape: Shape,
    pub material: Material,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub normal: Vector3<f64>,
    pub surface: usize,
}

/// A static scene. An empty environment is allowed and produces empty scans.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    #[serde(default)]
    pub surfaces: Vec<Surface>,
}

impl Environment {
    pub fn new(surfaces: Vec<Surface>) -> Self {
        Self { surfaces }
    }

    pub fn push(&mut self, shape: Shape, material: Material) {
        self.surfaces.push(Surface { shape, material });
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.surfaces.iter().enumerate() {
            s.shape
                .validate()
                .and_then(|_| s.material.validate())
                .map_err(|e| Error::Config(format!("surface {i}: {e}")))?;
        }
        Ok(())
    }

    /// Nearest surface hit within `max_distance`; `dir` must be unit length.
    pub fn cast_ray(&self, origin: &Point3<f64>, dir: &Vector3<f64>, max_distance: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, s) in self.surfaces.iter().enumerate() {
            if let Some((t, n)) = s.shape.intersect(origin, dir) {
                if t <= max_distance && best.is_none_or(|b| t < b.distance) {
                    best = Some(Hit {
                        distance: t,
                        normal: n,
                        surface: i,
                    });
                }
            }
        }
        best
    }

    /// Distance from `p` to the nearest surface.
    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        self.surfaces
            .iter()
            .map(|s| s.shape.distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}
