//! EPnP with Gauss–Newton β refinement, plus Levenberg–Marquardt reprojection polish.

use nalgebra::{DMatrix, Matrix3, Point3, SMatrix, SVector, Vector2, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use super::intrinsics::CameraIntrinsics;
use crate::geometry::{rigid_align, Pose, Twist};
use crate::{Error, Result};

/// Mean normalized reprojection error above which no EPnP candidate is trusted.
const SANITY_BOUND: f64 = 0.05;
const BETA_ITERATIONS: usize = 5;

/// One labeled 3D–2D pair. `world` is in the sonar frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Correspondence {
    pub label: String,
    pub world: Point3<f64>,
    pub pixel: Vector2<f64>,
    /// `K⁻¹·pixel` after undistortion.
    pub normalized: Vector2<f64>,
}

impl Correspondence {
    pub fn new(label: impl Into<String>, world: Point3<f64>, pixel: Vector2<f64>, k: &CameraIntrinsics) -> Self {
        Self {
            label: label.into(),
            world,
            pixel,
            normalized: k.normalize(&pixel),
        }
    }
}

const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

fn project_normalized(pose: &Pose, p: &Point3<f64>) -> Option<Vector2<f64>> {
    let c = pose.transform_point(p);
    (c.z > 0.0).then(|| Vector2::new(c.x / c.z, c.y / c.z))
}

fn normalized_error(pose: &Pose, corrs: &[Correspondence]) -> f64 {
    let mut sum = 0.0;
    for c in corrs {
        match project_normalized(pose, &c.world) {
            Some(q) => sum += (q - c.normalized).norm(),
            None => return f64::INFINITY,
        }
    }
    sum / corrs.len() as f64
}

struct Epnp {
    alphas: Vec<Vector4<f64>>,
    /// Null-space basis of `M`, smallest singular value first.
    null: [SVector<f64, 12>; 4],
    l: SMatrix<f64, 6, 10>,
    rho: SVector<f64, 6>,
}

impl Epnp {
    fn new(corrs: &[Correspondence]) -> Result<Self> {
        let n = corrs.len() as f64;
        let c0 = Point3::from(corrs.iter().map(|c| c.world.coords).sum::<Vector3<f64>>() / n);
        let mut cov = Matrix3::zeros();
        for c in corrs {
            let d = c.world - c0;
            cov += d * d.transpose();
        }
        let eig = (cov / n).symmetric_eigen();
        if eig.eigenvalues.min() < 1e-12 * eig.eigenvalues.max().max(1e-300) {
            return Err(Error::Numerical("EPnP needs non-coplanar world points".into()));
        }
        let control = [
            c0,
            c0 + eig.eigenvectors.column(0) * eig.eigenvalues[0].sqrt(),
            c0 + eig.eigenvectors.column(1) * eig.eigenvalues[1].sqrt(),
            c0 + eig.eigenvectors.column(2) * eig.eigenvalues[2].sqrt(),
        ];
        let basis = Matrix3::from_columns(&[control[1] - c0, control[2] - c0, control[3] - c0]);
        let inv = basis
            .try_inverse()
            .ok_or_else(|| Error::Numerical("EPnP control points are degenerate".into()))?;
        let alphas: Vec<Vector4<f64>> = corrs
            .iter()
            .map(|c| {
                let a = inv * (c.world - c0);
                Vector4::new(1.0 - a.sum(), a.x, a.y, a.z)
            })
            .collect();

        let mut m = DMatrix::zeros(2 * corrs.len(), 12);
        for (i, (c, a)) in corrs.iter().zip(&alphas).enumerate() {
            let (u, v) = (c.normalized.x, c.normalized.y);
            for j in 0..4 {
                m[(2 * i, 3 * j)] = a[j];
                m[(2 * i, 3 * j + 2)] = -a[j] * u;
                m[(2 * i + 1, 3 * j + 1)] = a[j];
                m[(2 * i + 1, 3 * j + 2)] = -a[j] * v;
            }
        }
        let mtm: SMatrix<f64, 12, 12> = (m.transpose() * &m).fixed_view::<12, 12>(0, 0).into_owned();
        let eig = mtm.symmetric_eigen();
        let mut order: Vec<usize> = (0..12).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let null: [SVector<f64, 12>; 4] = std::array::from_fn(|k| eig.eigenvectors.column(order[k]).into_owned());

        let mut l = SMatrix::<f64, 6, 10>::zeros();
        let mut rho = SVector::<f64, 6>::zeros();
        for (row, &(a, b)) in PAIRS.iter().enumerate() {
            let dv: [Vector3<f64>; 4] = std::array::from_fn(|k| {
                null[k].fixed_rows::<3>(3 * a).into_owned() - null[k].fixed_rows::<3>(3 * b).into_owned()
            });
            let values = [
                dv[0].dot(&dv[0]),
                2.0 * dv[0].dot(&dv[1]),
                dv[1].dot(&dv[1]),
                2.0 * dv[0].dot(&dv[2]),
                2.0 * dv[1].dot(&dv[2]),
                dv[2].dot(&dv[2]),
                2.0 * dv[0].dot(&dv[3]),
                2.0 * dv[1].dot(&dv[3]),
                2.0 * dv[2].dot(&dv[3]),
                dv[3].dot(&dv[3]),
            ];
            for (k, v) in values.iter().enumerate() {
                l[(row, k)] = *v;
            }
            rho[row] = (control[a] - control[b]).norm_squared();
        }
        Ok(Self {
            alphas,
            null,
            l,
            rho,
        })
    }

    fn solve_columns(&self, cols: &[usize]) -> Option<Vec<f64>> {
        let a = DMatrix::from_fn(6, cols.len(), |r, c| self.l[(r, cols[c])]);
        let b = DMatrix::from_column_slice(6, 1, self.rho.as_slice());
        let x = a.svd(true, true).solve(&b, 1e-14).ok()?;
        Some(x.iter().copied().collect())
    }

    /// Initial β for one, two and three null-space vectors, plus the
    /// linearized four-vector approximation.
    fn initial_betas(&self, dims: usize) -> Option<Vector4<f64>> {
        let mut beta = Vector4::zeros();
        match dims {
            1 => {
                let l0 = self.l.column(0);
                let denom = l0.norm_squared();
                if denom > 0.0 {
                    beta[0] = (l0.dot(&self.rho) / denom).max(0.0).sqrt();
                }
            }
            4 => {
                let b = self.solve_columns(&[0, 1, 3, 6])?;
                if b[0] < 0.0 {
                    let b0 = (-b[0]).sqrt();
                    beta = Vector4::new(b0, -b[1] / b0, -b[2] / b0, -b[3] / b0);
                } else {
                    let b0 = b[0].sqrt();
                    beta = Vector4::new(b0, b[1] / b0, b[2] / b0, b[3] / b0);
                }
            }
            2 | 3 => {
                let cols: &[usize] = if dims == 2 { &[0, 1, 2] } else { &[0, 1, 2, 3, 4] };
                let b = self.solve_columns(cols)?;
                let (b0, b1) = if b[0] < 0.0 {
                    ((-b[0]).sqrt(), if b[2] < 0.0 { (-b[2]).sqrt() } else { 0.0 })
                } else {
                    (b[0].sqrt(), if b[2] > 0.0 { b[2].sqrt() } else { 0.0 })
                };
                beta[0] = if b[1] < 0.0 { -b0 } else { b0 };
                beta[1] = b1;
                if dims == 3 && beta[0].abs() > 0.0 {
                    beta[2] = b[3] / beta[0];
                }
            }
            _ => unreachable!("EPnP uses one to four null vectors"),
        }
        beta.iter().all(|v| v.is_finite()).then_some(beta)
    }

    fn refine_betas(&self, mut beta: Vector4<f64>) -> Vector4<f64> {
        for _ in 0..BETA_ITERATIONS {
            let mut jac = SMatrix::<f64, 6, 4>::zeros();
            let mut res = SVector::<f64, 6>::zeros();
            for r in 0..6 {
                let l = self.l.row(r);
                let b = beta;
                let prod = [
                    b[0] * b[0],
                    b[0] * b[1],
                    b[1] * b[1],
                    b[0] * b[2],
                    b[1] * b[2],
                    b[2] * b[2],
                    b[0] * b[3],
                    b[1] * b[3],
                    b[2] * b[3],
                    b[3] * b[3],
                ];
                let value: f64 = (0..10).map(|k| l[k] * prod[k]).sum();
                res[r] = self.rho[r] - value;
                jac[(r, 0)] = 2.0 * l[0] * b[0] + l[1] * b[1] + l[3] * b[2] + l[6] * b[3];
                jac[(r, 1)] = l[1] * b[0] + 2.0 * l[2] * b[1] + l[4] * b[2] + l[7] * b[3];
                jac[(r, 2)] = l[3] * b[0] + l[4] * b[1] + 2.0 * l[5] * b[2] + l[8] * b[3];
                jac[(r, 3)] = l[6] * b[0] + l[7] * b[1] + l[8] * b[2] + 2.0 * l[9] * b[3];
            }
            let Ok(step) = jac.svd(true, true).solve(&res, 1e-14) else {
                break;
            };
            beta += step;
        }
        beta
    }

    fn pose_from_betas(&self, beta: &Vector4<f64>, corrs: &[Correspondence]) -> Option<Pose> {
        let mut ccs: [Vector3<f64>; 4] = std::array::from_fn(|j| {
            (0..4)
                .map(|k| self.null[k].fixed_rows::<3>(3 * j).into_owned() * beta[k])
                .sum()
        });
        let mut pcs: Vec<Point3<f64>> = self
            .alphas
            .iter()
            .map(|a| Point3::from((0..4).map(|j| ccs[j] * a[j]).sum::<Vector3<f64>>()))
            .collect();
        if pcs[0].z < 0.0 {
            for c in &mut ccs {
                *c = -*c;
            }
            for p in &mut pcs {
                *p = -*p;
            }
        }
        let world: Vec<Point3<f64>> = corrs.iter().map(|c| c.world).collect();
        rigid_align(&world, &pcs)
    }
}

/// Camera-from-sonar pose from normalized correspondences by EPnP.
///
/// The β approximations for one, two and three null-space vectors (and the
/// linearized four-vector one) are each refined by Gauss–Newton on the
/// control-point distances; the candidate with the smallest reprojection
/// error wins.
pub fn solve_pnp(corrs: &[Correspondence]) -> Result<Pose> {
    if corrs.len() < 6 {
        return Err(Error::TooFew {
            what: "correspondences",
            needed: 6,
            got: corrs.len(),
        });
    }
    let epnp = Epnp::new(corrs)?;
    let mut best: Option<(f64, Pose)> = None;
    for dims in 1..=4 {
        let Some(beta) = epnp.initial_betas(dims) else {
            continue;
        };
        let beta = epnp.refine_betas(beta);
        let Some(pose) = epnp.pose_from_betas(&beta, corrs) else {
            continue;
        };
        let err = normalized_error(&pose, corrs);
        if err.is_finite() && best.is_none_or(|(e, _)| err < e) {
            best = Some((err, pose));
        }
    }
    match best {
        Some((err, pose)) if err <= SANITY_BOUND => Ok(pose),
        Some((err, _)) => Err(Error::Numerical(format!(
            "EPnP reprojection error {err:.4} exceeds the sanity bound"
        ))),
        None => Err(Error::Numerical("EPnP system is rank deficient".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSolution {
    /// Camera-from-sonar transform.
    #[serde(with = "pose_serde")]
    pub extrinsic: Pose,
    /// Pixels.
    pub reprojection_rms: f64,
    /// Reprojection error of the EPnP start, pixels.
    pub initial_rms: f64,
    /// Per-correspondence pixel distances, in input order.
    pub residuals: Vec<f64>,
    /// False when refinement could not improve on the start and returned it.
    pub refined: bool,
}

mod pose_serde {
    use super::Pose;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        translation: [f64; 3],
        /// `[x, y, z, w]`
        rotation: [f64; 4],
    }

    pub fn serialize<S: Serializer>(p: &Pose, s: S) -> Result<S::Ok, S::Error> {
        let q = p.canonical().rotation;
        Repr {
            translation: p.translation.into(),
            rotation: [q.i, q.j, q.k, q.w],
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Pose, D::Error> {
        let r = Repr::deserialize(d)?;
        let [x, y, z, w] = r.rotation;
        Ok(Pose::new(
            nalgebra::UnitQuaternion::new_normalize(nalgebra::Quaternion::new(w, x, y, z)),
            r.translation.into(),
        ))
    }
}

fn pixel_residuals(pose: &Pose, corrs: &[Correspondence], k: &CameraIntrinsics) -> Option<Vec<Vector2<f64>>> {
    corrs
        .iter()
        .map(|c| k.project(&pose.transform_point(&c.world)).map(|p| p - c.pixel))
        .collect()
}

fn rms(res: &[Vector2<f64>]) -> f64 {
    (res.iter().map(|r| r.norm_squared()).sum::<f64>() / res.len().max(1) as f64).sqrt()
}

const LM_ITERATIONS: usize = 100;
const FD_STEP: f64 = 1e-7;

/// Levenberg–Marquardt on pixel reprojection residuals over left se(3) increments.
pub fn refine_reprojection(init: &Pose, corrs: &[Correspondence], k: &CameraIntrinsics) -> CalibrationSolution {
    let finish = |pose: Pose, res: &[Vector2<f64>], initial_rms: f64, refined: bool| CalibrationSolution {
        extrinsic: pose,
        reprojection_rms: rms(res),
        initial_rms,
        residuals: res.iter().map(|r| r.norm()).collect(),
        refined,
    };
    let Some(mut res) = pixel_residuals(init, corrs, k) else {
        let res = vec![Vector2::repeat(f64::INFINITY); corrs.len()];
        return finish(*init, &res, f64::INFINITY, false);
    };
    let initial_rms = rms(&res);
    let mut pose = *init;
    let mut cost: f64 = res.iter().map(|r| r.norm_squared()).sum();
    let mut lambda = 1e-3;
    let mut improved = false;
    for _ in 0..LM_ITERATIONS {
        if cost < 1e-30 {
            break;
        }
        let mut jtj = nalgebra::Matrix6::zeros();
        let mut jtr = Vector6::zeros();
        let mut ok = true;
        let mut cols: Vec<Vec<Vector2<f64>>> = Vec::with_capacity(6);
        for a in 0..6 {
            let mut d = Twist::zeros();
            d[a] = FD_STEP;
            let plus = pixel_residuals(&(Pose::exp(&d) * pose), corrs, k);
            let minus = pixel_residuals(&(Pose::exp(&-d) * pose), corrs, k);
            match (plus, minus) {
                (Some(p), Some(m)) => cols.push(p.iter().zip(&m).map(|(p, m)| (p - m) / (2.0 * FD_STEP)).collect()),
                _ => ok = false,
            }
        }
        if !ok {
            break;
        }
        for (i, r) in res.iter().enumerate() {
            let j = nalgebra::Matrix2x6::from_fn(|row, col| cols[col][i][row]);
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for d in 0..6 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = Pose::exp(&step) * pose;
            if let Some(new_res) = pixel_residuals(&candidate, corrs, k) {
                let new_cost: f64 = new_res.iter().map(|r| r.norm_squared()).sum();
                if new_cost < cost {
                    let rel = (cost - new_cost) / cost;
                    pose = candidate;
                    res = new_res;
                    cost = new_cost;
                    lambda = (lambda * 0.1).max(1e-12);
                    accepted = true;
                    improved = true;
                    if rel < 1e-14 || step.norm() < 1e-14 {
                        return finish(pose, &res, initial_rms, true);
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    let converged_at_start = initial_rms < 1e-9;
    finish(pose, &res, initial_rms, improved || converged_at_start)
}

/// Undistorts, solves EPnP and refines.
pub fn calibrate_from_correspondences(corrs: &[Correspondence], k: &CameraIntrinsics) -> Result<CalibrationSolution> {
    let init = solve_pnp(corrs)?;
    Ok(refine_reprojection(&init, corrs, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::test_util::pose_close;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, vec![-0.1, 0.01, 0.0, 0.0]).unwrap()
    }

    /// Camera-frame points spread in front of the camera, mapped back through `pose`.
    fn scene(pose: &Pose, k: &CameraIntrinsics, noise: f64, seed: u64) -> Vec<Correspondence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let inv = pose.inverse();
        (0..16)
            .map(|i| {
                let cam = Point3::new(
                    -0.6 + 0.4 * (i % 4) as f64,
                    -0.45 + 0.3 * (i / 4) as f64,
                    2.0 + 0.15 * ((i * 7) % 5) as f64,
                );
                let mut px = k.project(&cam).unwrap();
                if noise > 0.0 {
                    px += Vector2::new(n.sample(&mut rng), n.sample(&mut rng));
                }
                Correspondence::new(format!("p{i}"), inv.transform_point(&cam), px, k)
            })
            .collect()
    }

    fn truth() -> Pose {
        let r = 10f64.to_radians();
        Pose::from_rpy(Vector3::new(0.05, -0.10, 0.20), r, r, r)
    }

    #[test]
    fn identity_recovered() {
        let k = camera();
        let corrs = scene(&Pose::identity(), &k, 0.0, 0);
        assert!(pose_close(&solve_pnp(&corrs).unwrap(), &Pose::identity(), 1e-6));
    }

    #[test]
    fn rotated_offset_recovered() {
        let k = camera();
        let corrs = scene(&truth(), &k, 0.0, 0);
        let sol = calibrate_from_correspondences(&corrs, &k).unwrap();
        assert!(pose_close(&sol.extrinsic, &truth(), 1e-6));
        assert!(sol.reprojection_rms < 1e-6);
    }

    #[test]
    fn permutation_invariant() {
        let k = camera();
        let corrs = scene(&truth(), &k, 0.5, 3);
        let mut rev = corrs.clone();
        rev.reverse();
        let a = solve_pnp(&corrs).unwrap();
        let b = solve_pnp(&rev).unwrap();
        assert!(pose_close(&a, &b, 1e-9));
    }

    #[test]
    fn refinement_recovers_from_perturbed_start() {
        let k = camera();
        let corrs = scene(&truth(), &k, 0.0, 0);
        let start = Pose::from_rotation(nalgebra::UnitQuaternion::from_euler_angles(0.0, 5f64.to_radians(), 0.0)) * truth();
        let sol = refine_reprojection(&start, &corrs, &k);
        assert!(pose_close(&sol.extrinsic, &truth(), 1e-6));
        assert!(sol.reprojection_rms <= sol.initial_rms);
    }

    #[test]
    fn too_few_points() {
        let k = camera();
        let corrs = scene(&truth(), &k, 0.0, 0);
        assert!(matches!(solve_pnp(&corrs[..5]), Err(Error::TooFew { .. })));
    }
}
