use nalgebra::{Matrix2, Point3, Vector2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const UNDISTORT_ITERATIONS: usize = 10;

/// Pinhole camera with radial-tangential distortion `[k1, k2, p1, p2, k3]`.
/// Missing trailing coefficients are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub distortion: Vec<f64>,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, distortion: Vec<f64>) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            distortion,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Input("focal lengths must be positive".into()));
        }
        if ![self.cx, self.cy].iter().chain(&self.distortion).all(|v| v.is_finite()) {
            return Err(Error::Input("intrinsics must be finite".into()));
        }
        if self.distortion.len() > 5 {
            return Err(Error::Input(format!(
                "at most 5 distortion coefficients, got {}",
                self.distortion.len()
            )));
        }
        Ok(())
    }

    fn coeff(&self, i: usize) -> f64 {
        self.distortion.get(i).copied().unwrap_or(0.0)
    }

    /// Applies the distortion model to an ideal normalized point.
    pub fn distort(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let (k1, k2, p1, p2, k3) = (self.coeff(0), self.coeff(1), self.coeff(2), self.coeff(3), self.coeff(4));
        let (x, y) = (p.x, p.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
        Vector2::new(
            x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
            y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y,
        )
    }

    fn distort_jacobian(&self, p: &Vector2<f64>) -> Matrix2<f64> {
        let (k1, k2, p1, p2, k3) = (self.coeff(0), self.coeff(1), self.coeff(2), self.coeff(3), self.coeff(4));
        let (x, y) = (p.x, p.y);
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
        let dradial = k1 + r2 * (2.0 * k2 + 3.0 * k3 * r2);
        Matrix2::new(
            radial + 2.0 * x * x * dradial + 2.0 * p1 * y + 6.0 * p2 * x,
            2.0 * x * y * dradial + 2.0 * p1 * x + 2.0 * p2 * y,
            2.0 * x * y * dradial + 2.0 * p1 * x + 2.0 * p2 * y,
            radial + 2.0 * y * y * dradial + 6.0 * p1 * y + 2.0 * p2 * x,
        )
    }

    /// Inverts [`Self::distort`] with Newton steps.
    pub fn undistort(&self, d: &Vector2<f64>) -> Vector2<f64> {
        if self.distortion.iter().all(|c| *c == 0.0) {
            return *d;
        }
        let mut p = *d;
        for _ in 0..UNDISTORT_ITERATIONS {
            let r = self.distort(&p) - d;
            if r.norm() < 1e-15 {
                break;
            }
            match self.distort_jacobian(&p).try_inverse() {
                Some(inv) => p -= inv * r,
                None => break,
            }
        }
        p
    }

    /// Pixel of a camera-frame point, or `None` behind the camera.
    pub fn project(&self, p: &Point3<f64>) -> Option<Vector2<f64>> {
        if !(p.z > 0.0) {
            return None;
        }
        let d = self.distort(&Vector2::new(p.x / p.z, p.y / p.z));
        Some(Vector2::new(self.fx * d.x + self.cx, self.fy * d.y + self.cy))
    }

    /// `K⁻¹·p` followed by undistortion.
    pub fn normalize(&self, pixel: &Vector2<f64>) -> Vector2<f64> {
        let d = Vector2::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy);
        self.undistort(&d)
    }
}

pub fn normalize_pixels(pixels: &[Vector2<f64>], k: &CameraIntrinsics) -> Vec<Vector2<f64>> {
    pixels.iter().map(|p| k.normalize(p)).collect()
}
