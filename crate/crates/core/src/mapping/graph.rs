//! Pose graph over keyframe states with relative-pose factors.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use serde::{Deserialize, Serialize};

use crate::geometry::{se3_right_jacobian_inv, Pose, Twist};
use crate::io::tum::{format_tum_line, parse_tum_line};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorKind {
    Odometry,
    Loop,
}

impl FactorKind {
    fn tag(self) -> &'static str {
        match self {
            FactorKind::Odometry => "ODOM",
            FactorKind::Loop => "LOOP",
        }
    }
}

/// Relative-pose constraint `Z ≈ X_i⁻¹·X_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Factor {
    pub kind: FactorKind,
    pub i: usize,
    pub j: usize,
    pub measurement: Pose,
    /// Weight on the `[ω; v]` residual.
    pub information: Matrix6<f64>,
    /// Verification rmse for loop factors.
    pub fitness: Option<f64>,
}

impl Factor {
    pub fn odometry(i: usize, measurement: Pose, information: Matrix6<f64>) -> Self {
        Self {
            kind: FactorKind::Odometry,
            i,
            j: i + 1,
            measurement,
            information,
            fitness: None,
        }
    }

    pub fn loop_closure(i: usize, j: usize, measurement: Pose, information: Matrix6<f64>, fitness: f64) -> Self {
        Self {
            kind: FactorKind::Loop,
            i,
            j,
            measurement,
            information,
            fitness: Some(fitness),
        }
    }

    /// `log(Z⁻¹·X_i⁻¹·X_j)`.
    pub fn residual(&self, xi: &Pose, xj: &Pose) -> Twist {
        (self.measurement.inverse() * xi.between(xj)).log()
    }

    /// Residual and its Jacobians for right perturbations `X·exp(δ)` of both states.
    fn linearize(&self, xi: &Pose, xj: &Pose) -> (Twist, Matrix6<f64>, Matrix6<f64>) {
        let r = self.residual(xi, xj);
        let jr_inv = se3_right_jacobian_inv(&r);
        let jj = jr_inv;
        let ji = -jr_inv * xj.between(xi).adjoint();
        (r, ji, jj)
    }

    pub fn chi2(&self, xi: &Pose, xj: &Pose) -> f64 {
        let r = self.residual(xi, xj);
        (r.transpose() * self.information * r)[0]
    }
}

/// Isotropic information for rotation sigma (radians) and translation sigma (meters).
pub fn isotropic_information(sigma_rot: f64, sigma_trans: f64) -> Matrix6<f64> {
    let r = 1.0 / (sigma_rot * sigma_rot);
    let t = 1.0 / (sigma_trans * sigma_trans);
    Matrix6::from_diagonal(&Vector6::new(r, r, r, t, t, t))
}

/// States plus factors; state 0 is held fixed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoseGraph {
    pub states: Vec<Pose>,
    pub factors: Vec<Factor>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerParams {
    pub max_iterations: usize,
    pub lambda_init: f64,
    /// Stop when the relative chi² decrease of an accepted step falls below this.
    pub tolerance: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            lambda_init: 1e-4,
            tolerance: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeReport {
    /// Accepted steps.
    pub iterations: usize,
    pub initial_chi2: f64,
    pub final_chi2: f64,
    /// chi² after each accepted step, starting with the initial value.
    pub chi2_history: Vec<f64>,
    pub final_lambda: f64,
}

const LAMBDA_MAX: f64 = 1e12;
const CHI2_ZERO: f64 = 1e-24;

impl PoseGraph {
    pub fn new(states: Vec<Pose>) -> Self {
        Self {
            states,
            factors: Vec::new(),
        }
    }

    pub fn add_factor(&mut self, factor: Factor) -> Result<()> {
        let n = self.states.len();
        if factor.i >= n || factor.j >= n || factor.i == factor.j {
            return Err(Error::Input(format!(
                "factor {}-{} does not reference two distinct states of {n}",
                factor.i, factor.j
            )));
        }
        let info = factor.information;
        if (info - info.transpose()).amax() > 1e-9 * info.amax().max(1.0) || info.cholesky().is_none() {
            return Err(Error::Input("factor information must be symmetric positive definite".into()));
        }
        self.factors.push(factor);
        Ok(())
    }

    pub fn odometry_factors(&self) -> impl Iterator<Item = &Factor> {
        self.factors.iter().filter(|f| f.kind == FactorKind::Odometry)
    }

    pub fn loop_factors(&self) -> impl Iterator<Item = &Factor> {
        self.factors.iter().filter(|f| f.kind == FactorKind::Loop)
    }

    pub fn chi2(&self) -> f64 {
        chi2_of(&self.factors, &self.states)
    }

    /// Levenberg–Marquardt over right-perturbation increments of states `1..n`.
    ///
    /// A step is kept only when it lowers chi²; otherwise λ grows tenfold and
    /// the system is solved again. The states are updated in place.
    pub fn optimize(&mut self, params: &OptimizerParams) -> Result<OptimizeReport> {
        let initial = self.chi2();
        let mut report = OptimizeReport {
            iterations: 0,
            initial_chi2: initial,
            final_chi2: initial,
            chi2_history: vec![initial],
            final_lambda: params.lambda_init,
        };
        let n = self.states.len();
        if n < 2 || self.factors.is_empty() || initial < CHI2_ZERO {
            return Ok(report);
        }
        let mut lambda = params.lambda_init;
        let mut chi2 = initial;
        let mut attempts = 0;
        let mut solved = false;
        while report.iterations < params.max_iterations && attempts < 4 * params.max_iterations {
            attempts += 1;
            let (h, g) = self.normal_equations();
            let mut accepted = false;
            while lambda < LAMBDA_MAX {
                let delta = match solve_damped(&h, &g, lambda) {
                    Some(d) => {
                        solved = true;
                        d
                    }
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                };
                if delta.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numerical("pose graph update is not finite".into()));
                }
                let candidate: Vec<Pose> = self
                    .states
                    .iter()
                    .enumerate()
                    .map(|(k, x)| {
                        if k == 0 {
                            *x
                        } else {
                            let d: Twist = delta.fixed_rows::<6>(6 * (k - 1)).into_owned();
                            *x * Pose::exp(&d)
                        }
                    })
                    .collect();
                let new_chi2 = chi2_of(&self.factors, &candidate);
                if new_chi2 < chi2 {
                    self.states = candidate;
                    let rel = (chi2 - new_chi2) / chi2.max(f64::MIN_POSITIVE);
                    chi2 = new_chi2;
                    report.iterations += 1;
                    report.chi2_history.push(chi2);
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if rel < params.tolerance || chi2 < CHI2_ZERO {
                        report.final_chi2 = chi2;
                        report.final_lambda = lambda;
                        return Ok(report);
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted {
                break;
            }
        }
        if !solved {
            return Err(Error::Numerical("pose graph normal equations are singular".into()));
        }
        report.final_chi2 = chi2;
        report.final_lambda = lambda;
        Ok(report)
    }

    fn normal_equations(&self) -> (CscMatrix<f64>, DVector<f64>) {
        let dim = 6 * (self.states.len() - 1);
        let mut coo = CooMatrix::new(dim, dim);
        let mut g = DVector::zeros(dim);
        for f in &self.factors {
            let (r, ji, jj) = f.linearize(&self.states[f.i], &self.states[f.j]);
            let blocks = [(f.i, ji), (f.j, jj)];
            for (a, ja) in &blocks {
                if *a == 0 {
                    continue;
                }
                let ra = 6 * (a - 1);
                let jt_omega = ja.transpose() * f.information;
                let mut seg = g.fixed_rows_mut::<6>(ra);
                seg += jt_omega * r;
                for (b, jb) in &blocks {
                    if *b == 0 {
                        continue;
                    }
                    coo.push_matrix(ra, 6 * (b - 1), &(&jt_omega * jb));
                }
            }
        }
        (CscMatrix::from(&coo), g)
    }
}

fn chi2_of(factors: &[Factor], states: &[Pose]) -> f64 {
    factors.iter().map(|f| f.chi2(&states[f.i], &states[f.j])).sum()
}

/// Solves `(H + λ·diag(H)) δ = -g` by sparse Cholesky.
fn solve_damped(h: &CscMatrix<f64>, g: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let mut damped = h.clone();
    for (row, col, v) in damped.triplet_iter_mut() {
        if row == col {
            *v += lambda * v.abs().max(1e-9);
        }
    }
    let chol = CscCholesky::factor(&damped).ok()?;
    let rhs = DMatrix::from_column_slice(g.len(), 1, (-g).as_slice());
    let sol = chol.solve(&rhs);
    Some(DVector::from_column_slice(sol.as_slice()))
}

/// Writes the graph as text.
///
/// ```text
/// VERTEX stamp tx ty tz qx qy qz qw
/// EDGE ODOM|LOOP i j tx ty tz qx qy qz qw I11 I12 … I16 I22 … I66
/// ```
///
/// Vertices are numbered by order of appearance. The 21 information values
/// are the upper triangle in row-major order.
pub fn write_graph<W: Write>(mut w: W, graph: &PoseGraph, header: &[String]) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    for s in &graph.states {
        writeln!(w, "VERTEX {}", format_tum_line(s))?;
    }
    for f in &graph.factors {
        let m = format_tum_line(&f.measurement.with_stamp(0.0));
        let pose_fields: Vec<&str> = m.split_whitespace().skip(1).collect();
        let mut info = Vec::with_capacity(21);
        for r in 0..6 {
            for c in r..6 {
                info.push(format!("{:.9e}", f.information[(r, c)]));
            }
        }
        writeln!(
            w,
            "EDGE {} {} {} {} {}",
            f.kind.tag(),
            f.i,
            f.j,
            pose_fields.join(" "),
            info.join(" ")
        )?;
    }
    Ok(())
}

pub fn read_graph<R: BufRead>(r: R, source: &str) -> Result<PoseGraph> {
    let mut graph = PoseGraph::default();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = n + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::parse(source, line_no, msg);
        if let Some(rest) = trimmed.strip_prefix("VERTEX ") {
            graph.states.push(parse_tum_line(rest).map_err(bad)?);
        } else if let Some(rest) = trimmed.strip_prefix("EDGE ") {
            let fields: Vec<&str> = rest.split_whitespace().collect();
            if fields.len() != 3 + 7 + 21 {
                return Err(bad(format!("expected 31 edge fields, found {}", fields.len())));
            }
            let kind = match fields[0] {
                "ODOM" => FactorKind::Odometry,
                "LOOP" => FactorKind::Loop,
                other => return Err(bad(format!("unknown edge type {other:?}"))),
            };
            let idx = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("bad index {s:?}: {e}")));
            let (i, j) = (idx(fields[1])?, idx(fields[2])?);
            let measurement = parse_tum_line(&format!("0 {}", fields[3..10].join(" "))).map_err(bad)?;
            let values: Vec<f64> = fields[10..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| bad(format!("bad number {s:?}: {e}"))))
                .collect::<Result<_>>()?;
            let mut information = Matrix6::zeros();
            let mut k = 0;
            for r in 0..6 {
                for c in r..6 {
                    information[(r, c)] = values[k];
                    information[(c, r)] = values[k];
                    k += 1;
                }
            }
            let measurement = Pose {
                stamp: None,
                ..measurement
            };
            let factor = Factor {
                kind,
                i,
                j,
                measurement,
                information,
                fitness: None,
            };
            graph.add_factor(factor).map_err(|e| bad(e.to_string()))?;
        } else {
            return Err(bad("expected VERTEX or EDGE".into()));
        }
    }
    Ok(graph)
}
