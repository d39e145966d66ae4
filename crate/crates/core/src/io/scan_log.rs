//! Streaming scan log.
//!
//! ```text
//! # spec: h_fov=90 v_fov=40 max_range=15 rate=5 h_beam=0.6 v_beam=2.4 range_quantum=0.004 footprint_sampling=1
//! # seed: 42
//! # <free-form header lines>
//! # scan <index> <stamp> <count>
//! <stamp> <x> <y> <z> [<intensity>]
//! ...
//! ```
//!
//! Each scan starts with a `# scan` line so that empty scans survive a round trip.
//! Point records are in the sensor frame.

use std::io::{BufRead, Write};

use nalgebra::Point3;

use crate::geometry::{PointCloud, Scan};
use crate::sim::SonarSpec;
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScanLogHeader {
    pub spec: Option<SonarSpec>,
    pub seed: Option<u64>,
    pub extra: Vec<String>,
}

fn format_spec(s: &SonarSpec) -> String {
    format!(
        "h_fov={} v_fov={} max_range={} rate={} h_beam={} v_beam={} range_quantum={} footprint_sampling={}",
        s.h_fov,
        s.v_fov,
        s.max_range,
        s.rate,
        s.h_beam,
        s.v_beam,
        s.range_quantum,
        u8::from(s.footprint_sampling)
    )
}

fn parse_spec(text: &str) -> std::result::Result<SonarSpec, String> {
    let mut spec = SonarSpec::default();
    for kv in text.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("bad spec entry {kv:?}"))?;
        let v: f64 = v.parse().map_err(|_| format!("bad value in {kv:?}"))?;
        match k {
            "h_fov" => spec.h_fov = v,
            "v_fov" => spec.v_fov = v,
            "max_range" => spec.max_range = v,
            "rate" => spec.rate = v,
            "h_beam" => spec.h_beam = v,
            "v_beam" => spec.v_beam = v,
            "range_quantum" => spec.range_quantum = v,
            "footprint_sampling" => spec.footprint_sampling = v != 0.0,
            _ => return Err(format!("unknown spec key {k:?}")),
        }
    }
    Ok(spec)
}

pub fn write_scan_log<W: Write>(mut w: W, header: &ScanLogHeader, scans: &[Scan]) -> Result<()> {
    if let Some(spec) = &header.spec {
        writeln!(w, "# spec: {}", format_spec(spec))?;
    }
    if let Some(seed) = header.seed {
        writeln!(w, "# seed: {seed}")?;
    }
    for line in &header.extra {
        writeln!(w, "# {line}")?;
    }
    for (i, scan) in scans.iter().enumerate() {
        writeln!(w, "# scan {} {:.6} {}", i, scan.stamp, scan.cloud.len())?;
        match scan.cloud.intensity() {
            Some(intensity) => {
                for (p, v) in scan.cloud.iter().zip(intensity) {
                    writeln!(
                        w,
                        "{:.6} {:.6} {:.6} {:.6} {:.4}",
                        scan.stamp, p.x, p.y, p.z, v
                    )?;
                }
            }
            None => {
                for p in scan.cloud.iter() {
                    writeln!(w, "{:.6} {:.6} {:.6} {:.6}", scan.stamp, p.x, p.y, p.z)?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_scan_log<R: BufRead>(r: R, source: &str) -> Result<(ScanLogHeader, Vec<Scan>)> {
    let mut header = ScanLogHeader::default();
    let mut scans: Vec<Scan> = Vec::new();
    let mut expected: Vec<usize> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(rest) = comment.strip_prefix("scan ") {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 3 {
                    return Err(Error::parse(source, n, "scan header needs index, stamp, count"));
                }
                let stamp: f64 = f[1]
                    .parse()
                    .map_err(|_| Error::parse(source, n, "bad scan stamp"))?;
                let count: usize = f[2]
                    .parse()
                    .map_err(|_| Error::parse(source, n, "bad scan count"))?;
                if let Some(prev) = scans.last() {
                    if stamp <= prev.stamp {
                        return Err(Error::parse(source, n, "scan stamps must increase"));
                    }
                }
                scans.push(Scan::new(stamp, PointCloud::new()));
                expected.push(count);
            } else if let Some(rest) = comment.strip_prefix("spec:") {
                header.spec = Some(parse_spec(rest).map_err(|m| Error::parse(source, n, m))?);
            } else if let Some(rest) = comment.strip_prefix("seed:") {
                header.seed = Some(
                    rest.trim()
                        .parse()
                        .map_err(|_| Error::parse(source, n, "bad seed"))?,
                );
            } else if scans.is_empty() {
                header.extra.push(comment.to_string());
            }
            continue;
        }
        let values: Vec<f64> = trimmed
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e: std::num::ParseFloatError| Error::parse(source, n, e.to_string()))?;
        if !(values.len() == 4 || values.len() == 5) {
            return Err(Error::parse(source, n, "expected 'stamp x y z [intensity]'"));
        }
        let scan = scans
            .last_mut()
            .ok_or_else(|| Error::parse(source, n, "point record before first '# scan' line"))?;
        if (values[0] - scan.stamp).abs() > 1e-6 {
            return Err(Error::parse(source, n, "record stamp differs from scan stamp"));
        }
        let intensity = values.get(4).copied();
        if intensity.is_some_and(|v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::parse(source, n, "intensity outside [0, 1]"));
        }
        scan.cloud
            .push(Point3::new(values[1], values[2], values[3]), intensity);
    }
    for (k, (scan, count)) in scans.iter().zip(&expected).enumerate() {
        if scan.cloud.len() != *count {
            return Err(Error::Input(format!(
                "{source}: scan {k} declares {count} points but has {}",
                scan.cloud.len()
            )));
        }
    }
    Ok((header, scans))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_keeps_empty_scans() {
        let scans = vec![
            Scan::new(0.0, PointCloud::new()),
            Scan::new(
                0.2,
                PointCloud::with_intensity(vec![Point3::new(1.0, 0.5, -0.25)], vec![0.75]).unwrap(),
            ),
            Scan::new(0.4, PointCloud::new()),
        ];
        let header = ScanLogHeader {
            spec: Some(SonarSpec::default()),
            seed: Some(9),
            extra: vec!["scenario: test".into()],
        };
        let mut buf = Vec::new();
        write_scan_log(&mut buf, &header, &scans).unwrap();
        let (h, back) = read_scan_log(buf.as_slice(), "mem").unwrap();
        assert_eq!(h, header);
        assert_eq!(back, scans);
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let text = "# scan 0 0.0 2\n0.0 1 2 3\n";
        assert!(read_scan_log(text.as_bytes(), "mem").is_err());
    }
}
