//! Camera–sonar extrinsic calibration from four elevated block tops.

pub mod corners;
pub mod extract;
pub mod fixture;
pub mod intrinsics;
pub mod io;
pub mod pnp;

pub use corners::{cluster_corners, corner_label, extract_corners_3d, min_area_rectangle, CORNER_COUNT};
pub use extract::{extract_block_tops, BlockTops, ExtractionParams, GroundFrame};
pub use fixture::{BlockSpec, CalibrationFixture, FixtureSpec};
pub use intrinsics::{normalize_pixels, CameraIntrinsics};
pub use pnp::{calibrate_from_correspondences, refine_reprojection, solve_pnp, CalibrationSolution, Correspondence};

use nalgebra::{Point3, Vector2};

use crate::geometry::PointCloud;
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationRun {
    pub tops: BlockTops,
    /// Extracted sonar-frame corners in label order.
    pub corners: Vec<Point3<f64>>,
    pub correspondences: Vec<Correspondence>,
    pub solution: CalibrationSolution,
}

/// Full calibration: block tops and corners from the cloud, then PnP against
/// `pixels` given in label order.
pub fn calibrate(
    cloud: &PointCloud,
    pixels: &[Vector2<f64>],
    intrinsics: &CameraIntrinsics,
    params: &ExtractionParams,
) -> Result<CalibrationRun> {
    if pixels.len() != CORNER_COUNT {
        return Err(crate::Error::Input(format!(
            "expected {CORNER_COUNT} image corners, got {}",
            pixels.len()
        )));
    }
    let tops = extract_block_tops(cloud, params)?;
    let corners = extract_corners_3d(&tops, params)?;
    let correspondences: Vec<Correspondence> = corners
        .iter()
        .zip(pixels)
        .enumerate()
        .map(|(i, (w, p))| Correspondence::new(corner_label(i), *w, *p, intrinsics))
        .collect();
    let solution = calibrate_from_correspondences(&correspondences, intrinsics)?;
    Ok(CalibrationRun {
        tops,
        corners,
        correspondences,
        solution,
    })
}
