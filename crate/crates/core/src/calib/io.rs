//! Corner CSV and intrinsics text files.

use std::io::{BufRead, Read, Write};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::corners::{corner_label, CORNER_COUNT};
use super::intrinsics::CameraIntrinsics;
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct CornerRow {
    label: String,
    u: f64,
    v: f64,
}

/// Writes `label,u,v` rows for corners in label order.
pub fn write_corner_csv<W: Write>(w: W, pixels: &[Vector2<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for (i, p) in pixels.iter().enumerate() {
        out.serialize(CornerRow {
            label: corner_label(i),
            u: p.x,
            v: p.y,
        })
        .map_err(|e| Error::Input(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a `label,u,v` file with exactly the 16 labels `b0c0 … b3c3` in any
/// order and returns pixels in label order.
pub fn read_corner_csv<R: Read>(r: R, source: &str) -> Result<Vec<Vector2<f64>>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut slots: Vec<Option<Vector2<f64>>> = vec![None; CORNER_COUNT];
    let mut rows = 0;
    for (i, rec) in reader.deserialize::<CornerRow>().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = rec.map_err(|e| Error::parse(source, line, e.to_string()))?;
        rows += 1;
        let Some(idx) = (0..CORNER_COUNT).find(|&k| corner_label(k) == row.label.trim()) else {
            return Err(Error::parse(source, line, format!("unknown corner label {:?}", row.label)));
        };
        if slots[idx].replace(Vector2::new(row.u, row.v)).is_some() {
            return Err(Error::parse(source, line, format!("duplicate corner label {:?}", row.label)));
        }
    }
    if rows != CORNER_COUNT {
        return Err(Error::Input(format!("{source}: expected {CORNER_COUNT} corner rows, found {rows}")));
    }
    Ok(slots.into_iter().map(|s| s.expect("all labels present")).collect())
}

/// Parses `fx fy cx cy [k1 k2 p1 p2 [k3]]`; `#` starts a comment.
pub fn read_intrinsics<R: BufRead>(r: R, source: &str) -> Result<CameraIntrinsics> {
    let mut values = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("");
        for tok in content.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|e| Error::parse(source, i + 1, format!("bad number {tok:?}: {e}")))?;
            values.push(v);
        }
    }
    if values.len() < 4 || values.len() > 9 {
        return Err(Error::Input(format!(
            "{source}: expected 4 to 9 intrinsics values, found {}",
            values.len()
        )));
    }
    CameraIntrinsics::new(values[0], values[1], values[2], values[3], values[4..].to_vec())
}

pub fn write_intrinsics<W: Write>(mut w: W, k: &CameraIntrinsics) -> Result<()> {
    writeln!(w, "# fx fy cx cy k1 k2 p1 p2 k3")?;
    let mut fields = vec![k.fx, k.fy, k.cx, k.cy];
    fields.extend(&k.distortion);
    let text: Vec<String> = fields.iter().map(|v| format!("{v}")).collect();
    writeln!(w, "{}", text.join(" "))?;
    Ok(())
}
