//! TUM trajectory lines: `stamp tx ty tz qx qy qz qw`.
//!
//! Lines starting with `#` are comments. Quaternions are written with a
//! non-negative scalar part so that equal rotations serialize identically.

use std::io::{BufRead, Write};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::geometry::Pose;
use crate::{Error, Result};

pub fn format_tum_line(pose: &Pose) -> String {
    let p = pose.canonical();
    let q = p.rotation;
    let t = p.translation;
    format!(
        "{:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
        p.stamp.unwrap_or(0.0),
        t.x,
        t.y,
        t.z,
        q.i,
        q.j,
        q.k,
        q.w
    )
}

pub fn parse_tum_line(line: &str) -> std::result::Result<Pose, String> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|s| s.parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if values.len() != 8 {
        return Err(format!("expected 8 fields, found {}", values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite value".into());
    }
    let q = Quaternion::new(values[7], values[4], values[5], values[6]);
    if q.norm() < 1e-6 {
        return Err("zero quaternion".into());
    }
    Ok(Pose::new(
        UnitQuaternion::new_normalize(q),
        Vector3::new(values[1], values[2], values[3]),
    )
    .with_stamp(values[0]))
}

pub fn write_tum<W: Write>(mut w: W, poses: &[Pose], header: &[String]) -> Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    for p in poses {
        writeln!(w, "{}", format_tum_line(p))?;
    }
    Ok(())
}

/// Reads a TUM file; `source` names the input in error messages.
pub fn read_tum<R: BufRead>(r: R, source: &str) -> Result<Vec<Pose>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push(parse_tum_line(trimmed).map_err(|m| Error::parse(source, i + 1, m))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn writes_canonical_quaternion() {
        let q = UnitQuaternion::from_euler_angles(0.2, 0.1, 3.0);
        let neg = UnitQuaternion::new_unchecked(-q.into_inner());
        let a = Pose::new(q, Vector3::new(1.0, 2.0, 3.0)).with_stamp(1.5);
        let b = Pose::new(neg, Vector3::new(1.0, 2.0, 3.0)).with_stamp(1.5);
        assert_eq!(format_tum_line(&a), format_tum_line(&b));
        assert!(format_tum_line(&a).starts_with("1.500000 1.000000000 2.000000000"));
    }

    #[test]
    fn skips_comments_and_reports_bad_lines() {
        let text = "# header\n0.0 0 0 0 0 0 0 1\n\n0.2 1 0 0 0 0 0 1\n";
        let poses = read_tum(text.as_bytes(), "t.tum").unwrap();
        assert_eq!(poses.len(), 2);
        assert_eq!(poses[1].stamp, Some(0.2));
        let err = read_tum("0.0 0 0 0 0 0 1\n".as_bytes(), "t.tum").unwrap_err();
        assert!(err.to_string().contains("t.tum:1"));
    }

    proptest! {
        #[test]
        fn round_trip_within_print_precision(
            stamp in 0.0f64..1e4,
            t in prop::array::uniform3(-100.0f64..100.0),
            rpy in prop::array::uniform3(-3.1f64..3.1),
        ) {
            let p = Pose::from_rpy(Vector3::from(t), rpy[0], rpy[1], rpy[2]).with_stamp(stamp);
            let back = parse_tum_line(&format_tum_line(&p)).unwrap();
            let (dt, dr) = p.distance_to(&back);
            prop_assert!(dt < 1e-8 && dr < 1e-8);
            prop_assert!((back.stamp.unwrap() - stamp).abs() < 1e-6);
        }
    }
}
