//! Synthetic four-block calibration scenes with known extrinsics.

use nalgebra::{Point3, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::extract::{row_major_order, GroundFrame};
use super::intrinsics::CameraIntrinsics;
use crate::geometry::{PointCloud, Pose};
use crate::sim::scenario::ExtrinsicSpec;
use crate::{Error, Result};

/// One rectangular block top in ground coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub center: [f64; 2],
    pub size: [f64; 2],
    pub yaw_deg: f64,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    pub blocks: Vec<BlockSpec>,
    /// Sonar height above the ground and downward pitch (meters, degrees).
    pub sonar_height: f64,
    pub sonar_pitch_deg: f64,
    pub intrinsics: CameraIntrinsics,
    pub extrinsic: ExtrinsicSpec,
    /// Grid spacing on the ground and on block tops (meters).
    pub ground_spacing: f64,
    pub top_spacing: f64,
    /// Gaussian noise on cloud points (meters) and on pixels.
    pub cloud_noise: f64,
    pub pixel_noise: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        let block = |x: f64, y: f64, yaw: f64, h: f64| BlockSpec {
            center: [x, y],
            size: [0.2, 0.4],
            yaw_deg: yaw,
            height: h,
        };
        Self {
            blocks: vec![
                block(1.45, -0.35, 0.0, 0.19),
                block(1.50, 0.30, 20.0, 0.24),
                block(2.05, -0.30, -15.0, 0.29),
                block(2.10, 0.40, 35.0, 0.34),
            ],
            sonar_height: 1.0,
            sonar_pitch_deg: 30.0,
            intrinsics: CameraIntrinsics {
                fx: 600.0,
                fy: 600.0,
                cx: 320.0,
                cy: 240.0,
                distortion: vec![-0.12, 0.02, 0.0005, -0.0003],
            },
            extrinsic: ExtrinsicSpec::default(),
            ground_spacing: 0.02,
            top_spacing: 0.01,
            cloud_noise: 0.0,
            pixel_noise: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationFixture {
    /// Sonar-frame cloud of the ground and block tops.
    pub cloud: PointCloud,
    /// True corners in the sonar frame, in label order.
    pub corners: Vec<Point3<f64>>,
    pub pixels: Vec<Vector2<f64>>,
    pub intrinsics: CameraIntrinsics,
    /// Camera-from-sonar.
    pub extrinsic: Pose,
}

impl FixtureSpec {
    /// Ground-to-sonar transform: points in ground coordinates to the sonar frame.
    pub fn sonar_from_ground(&self) -> Pose {
        let ground_sonar = Pose::from_rpy(
            Vector3::new(0.0, 0.0, self.sonar_height),
            0.0,
            self.sonar_pitch_deg.to_radians(),
            0.0,
        );
        ground_sonar.inverse()
    }

    fn block_corners(b: &BlockSpec) -> [Point3<f64>; 4] {
        let (s, c) = b.yaw_deg.to_radians().sin_cos();
        let [hx, hy] = [b.size[0] / 2.0, b.size[1] / 2.0];
        // counter-clockwise about +z
        [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)].map(|(a, d)| {
            Point3::new(b.center[0] + c * a - s * d, b.center[1] + s * a + c * d, b.height)
        })
    }

    /// Generates the cloud, ordered true corners and their pixels.
    pub fn generate(&self, seed: u64) -> Result<CalibrationFixture> {
        if self.blocks.len() != 4 {
            return Err(Error::Config(format!("fixture needs 4 blocks, got {}", self.blocks.len())));
        }
        if !(self.ground_spacing > 0.0 && self.top_spacing > 0.0) {
            return Err(Error::Config("fixture grid spacings must be positive".into()));
        }
        self.intrinsics.validate()?;
        let to_sonar = self.sonar_from_ground();
        let extrinsic = self.extrinsic.pose();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cloud_noise = Normal::new(0.0, self.cloud_noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
        let pixel_noise = Normal::new(0.0, self.pixel_noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;

        let ground = GroundFrame::from_plane(
            &to_sonar.transform_point(&Point3::origin()),
            &to_sonar.transform_vector(&Vector3::z()),
        );
        let tops_sonar: Vec<[Point3<f64>; 4]> = self
            .blocks
            .iter()
            .map(|b| Self::block_corners(b).map(|p| to_sonar.transform_point(&p)))
            .collect();
        let centroids: Vec<(f64, f64)> = tops_sonar
            .iter()
            .map(|c| {
                let m = c.iter().map(|p| p.coords).sum::<Vector3<f64>>() / 4.0;
                ground.coordinates(&Point3::from(m))
            })
            .collect();
        let mut corners = Vec::with_capacity(16);
        for i in row_major_order(&centroids) {
            let c = tops_sonar[i];
            let start = (0..4)
                .min_by(|&a, &b| (c[a] - ground.origin).norm().total_cmp(&(c[b] - ground.origin).norm()))
                .expect("four corners");
            corners.extend((0..4).map(|k| c[(start + k) % 4]));
        }

        let mut cloud = PointCloud::new();
        let mut add = |p: Point3<f64>, rng: &mut ChaCha8Rng| {
            let q = to_sonar.transform_point(&p);
            let jitter = if self.cloud_noise > 0.0 {
                Vector3::new(cloud_noise.sample(rng), cloud_noise.sample(rng), cloud_noise.sample(rng))
            } else {
                Vector3::zeros()
            };
            cloud.push(q + jitter, None);
        };
        let (x0, x1, y0, y1) = (0.8, 2.8, -1.0, 1.0);
        let nx = ((x1 - x0) / self.ground_spacing).round() as usize;
        let ny = ((y1 - y0) / self.ground_spacing).round() as usize;
        for i in 0..=nx {
            for j in 0..=ny {
                add(Point3::new(x0 + i as f64 * self.ground_spacing, y0 + j as f64 * self.ground_spacing, 0.0), &mut rng);
            }
        }
        for b in &self.blocks {
            let (s, c) = b.yaw_deg.to_radians().sin_cos();
            let na = (b.size[0] / self.top_spacing).round().max(1.0) as usize;
            let nb = (b.size[1] / self.top_spacing).round().max(1.0) as usize;
            for i in 0..=na {
                for j in 0..=nb {
                    let a = -b.size[0] / 2.0 + b.size[0] * i as f64 / na as f64;
                    let d = -b.size[1] / 2.0 + b.size[1] * j as f64 / nb as f64;
                    add(Point3::new(b.center[0] + c * a - s * d, b.center[1] + s * a + c * d, b.height), &mut rng);
                }
            }
        }

        let pixels = corners
            .iter()
            .map(|p| {
                let px = self
                    .intrinsics
                    .project(&extrinsic.transform_point(p))
                    .ok_or_else(|| Error::Config("fixture corner is behind the camera".into()))?;
                let noise = if self.pixel_noise > 0.0 {
                    Vector2::new(pixel_noise.sample(&mut rng), pixel_noise.sample(&mut rng))
                } else {
                    Vector2::zeros()
                };
                Ok(px + noise)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CalibrationFixture {
            cloud,
            corners,
            pixels,
            intrinsics: self.intrinsics.clone(),
            extrinsic,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners_are_in_view() {
        let f = FixtureSpec::default().generate(0).unwrap();
        assert_eq!(f.corners.len(), 16);
        for p in &f.pixels {
            assert!(p.x > 0.0 && p.x < 640.0 && p.y > 0.0 && p.y < 480.0, "{p:?}");
        }
    }
}
