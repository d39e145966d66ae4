//! ASCII PLY point clouds.
//!
//! Only the `vertex` element is interpreted; `x`, `y`, `z` are required and an
//! `intensity` property is read when present. Other elements and properties
//! are skipped.

use std::io::{BufRead, Write};

use nalgebra::Point3;

use crate::geometry::PointCloud;
use crate::{Error, Result};

pub fn write_ply<W: Write>(mut w: W, cloud: &PointCloud, comments: &[String]) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    for c in comments {
        writeln!(w, "comment {c}")?;
    }
    writeln!(w, "element vertex {}", cloud.len())?;
    writeln!(w, "property double x")?;
    writeln!(w, "property double y")?;
    writeln!(w, "property double z")?;
    if cloud.intensity().is_some() {
        writeln!(w, "property double intensity")?;
    }
    writeln!(w, "end_header")?;
    match cloud.intensity() {
        Some(intensity) => {
            for (p, i) in cloud.iter().zip(intensity) {
                writeln!(w, "{:.6} {:.6} {:.6} {:.4}", p.x, p.y, p.z, i)?;
            }
        }
        None => {
            for p in cloud.iter() {
                writeln!(w, "{:.6} {:.6} {:.6}", p.x, p.y, p.z)?;
            }
        }
    }
    Ok(())
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<String>,
}

pub fn read_ply<R: BufRead>(r: R, source: &str) -> Result<PointCloud> {
    let mut lines = r.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(Error::Input(format!("{source}: unexpected end of file ({what})"))),
        }
    };

    let (n, magic) = next("magic")?;
    if magic.trim() != "ply" {
        return Err(Error::parse(source, n, "missing 'ply' magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let (n, line) = next("header")?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(Error::parse(source, n, format!("unsupported format {other}")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::parse(source, n, "bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", ..] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(source, n, "property before element"))?;
                if el.name == "vertex" {
                    return Err(Error::parse(source, n, "list properties on vertices"));
                }
                el.properties.push(String::from("list"));
            }
            ["property", _ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::parse(source, n, "property before element"))?
                .properties
                .push(name.to_string()),
            ["end_header"] => break,
            _ => return Err(Error::parse(source, n, format!("unexpected header line {line:?}"))),
        }
    }

    let mut cloud = PointCloud::new();
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                next("element data")?;
            }
            continue;
        }
        let find = |name: &str| el.properties.iter().position(|p| p == name);
        let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(Error::Input(format!("{source}: vertex lacks x/y/z"))),
        };
        let ii = find("intensity");
        for _ in 0..el.count {
            let (n, line) = next("vertex data")?;
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(source, n, e.to_string()))?;
            if values.len() < el.properties.len() {
                return Err(Error::parse(source, n, "too few vertex values"));
            }
            let p = Point3::new(values[ix], values[iy], values[iz]);
            if p.coords.iter().any(|c| !c.is_finite()) {
                return Err(Error::parse(source, n, "non-finite coordinate"));
            }
            cloud.push(p, ii.map(|i| values[i]));
        }
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_intensity() {
        let cloud = PointCloud::with_intensity(
            vec![Point3::new(1.0, 2.0, 3.0), Point3::new(-0.5, 0.25, 0.125)],
            vec![0.5, 1.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_ply(&mut buf, &cloud, &["seed: 7".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("comment seed: 7"));
        let back = read_ply(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, cloud);
    }

    #[test]
    fn skips_faces_and_extra_properties() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 255\n1 1 1 0\n3 0 1 1\n";
        let cloud = read_ply(text.as_bytes(), "mem").unwrap();
        assert_eq!(cloud.len(), 2);
        assert!(cloud.intensity().is_none());
    }

    #[test]
    fn rejects_binary() {
        let text = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(read_ply(text.as_bytes(), "mem").is_err());
    }
}
