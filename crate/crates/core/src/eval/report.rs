//! Per-method trajectory reports: `method,revisitation_m,ate_m` CSV plus a text summary.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::trajectory::{align_first_k, ate_rmse, revisitation_error, ALIGN_POSES};
use crate::geometry::Pose;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub method: String,
    /// Meters.
    pub revisitation_error: f64,
    /// Meters, only with a reference trajectory.
    pub ate_rmse: Option<f64>,
    /// Whether `ate_rmse` was computed after first-k alignment.
    pub aligned: bool,
}

#[derive(Serialize, Deserialize)]
struct Row {
    method: String,
    revisitation_m: f64,
    ate_m: Option<f64>,
}

/// Re-visitation error of `est` and, with a reference, ATE after aligning on
/// the first [`ALIGN_POSES`] matched poses.
pub fn evaluate_trajectory(method: &str, est: &[Pose], reference: Option<&[Pose]>) -> Result<TrajectoryReport> {
    let revisitation_error = revisitation_error(est)?;
    let ate = match reference {
        Some(r) => Some(ate_rmse(&align_first_k(est, r, ALIGN_POSES)?, r)?),
        None => None,
    };
    Ok(TrajectoryReport {
        method: method.to_string(),
        revisitation_error,
        ate_rmse: ate,
        aligned: ate.is_some(),
    })
}

/// Writes `# ` comment lines followed by one CSV row per report.
pub fn write_report_csv<W: Write>(mut w: W, reports: &[TrajectoryReport], header: &[String]) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    for r in reports {
        out.serialize(Row {
            method: r.method.clone(),
            revisitation_m: r.revisitation_error,
            ate_m: r.ate_rmse,
        })
        .map_err(|e| Error::Input(e.to_string()))?;
    }
    if reports.is_empty() {
        out.write_record(["method", "revisitation_m", "ate_m"])
            .map_err(|e| Error::Input(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_report_csv<R: Read>(r: R, source: &str) -> Result<Vec<TrajectoryReport>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    reader
        .deserialize::<Row>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| Error::parse(source, i + 2, e.to_string()))?;
            Ok(TrajectoryReport {
                method: row.method,
                revisitation_error: row.revisitation_m,
                aligned: row.ate_m.is_some(),
                ate_rmse: row.ate_m,
            })
        })
        .collect()
}

/// Fixed-width table for terminals and logs.
pub fn format_summary(reports: &[TrajectoryReport]) -> String {
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
    let mut s = format!("{:<width$}  {:>14}  {:>10}\n", "method", "revisitation_m", "ate_m");
    for r in reports {
        let ate = r.ate_rmse.map_or_else(|| "-".to_string(), |a| format!("{a:.3}"));
        s.push_str(&format!("{:<width$}  {:>14.3}  {:>10}\n", r.method, r.revisitation_error, ate));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, e: f64) -> TrajectoryReport {
        TrajectoryReport {
            method: method.into(),
            revisitation_error: e,
            ate_rmse: None,
            aligned: false,
        }
    }

    #[test]
    fn table_layout() {
        let rows = vec![
            row("SVIn PGO", 17.02),
            row("Sonar Odom", 250.34),
            row("Sonar PGO", 21.51),
            row("Fusion Odom", 238.71),
            row("Fusion PGO", 6.76),
        ];
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &rows, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "method,revisitation_m,ate_m\n\
             SVIn PGO,17.02,\n\
             Sonar Odom,250.34,\n\
             Sonar PGO,21.51,\n\
             Fusion Odom,238.71,\n\
             Fusion PGO,6.76,\n"
        );
        assert_eq!(read_report_csv(text.as_bytes(), "r.csv").unwrap(), rows);
    }

    #[test]
    fn closed_loop_and_offset_reference() {
        let traj: Vec<Pose> = (0..=20)
            .map(|i| {
                let a = i as f64 / 20.0 * std::f64::consts::TAU;
                Pose::from_translation(a.cos(), a.sin(), 0.0).with_stamp(i as f64)
            })
            .collect();
        let r = evaluate_trajectory("loop", &traj, None).unwrap();
        assert!(r.revisitation_error < 1e-12 && r.ate_rmse.is_none());

        let g = Pose::from_translation(5.0, 0.0, 1.0);
        let moved: Vec<Pose> = traj.iter().map(|p| Pose { stamp: p.stamp, ..g * *p }).collect();
        let r = evaluate_trajectory("moved", &moved, Some(&traj)).unwrap();
        assert!(r.aligned && r.ate_rmse.unwrap() < 1e-9);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &[row("a", 1.5)], &["seed 3".into()]).unwrap();
        assert!(buf.starts_with(b"# seed 3\n"));
        assert_eq!(read_report_csv(&buf[..], "r.csv").unwrap(), vec![row("a", 1.5)]);
    }
}
